#include "guidebench/forge.hpp"

#include "guidebench/digest.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/rng.hpp"
#include "guidebench/text.hpp"

#include <atomic>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <thread>

namespace guidebench::forge {

using nlohmann::json;

void to_json(json& j, const RawQaItem& r) {
    j = json{{"id", r.id},
             {"question", r.question},
             {"gold_answer", r.gold_answer},
             {"source_dataset", r.source_dataset},
             {"category", to_string(r.category)}};
}

void from_json(const json& j, RawQaItem& r) {
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.gold_answer = j.at("gold_answer").get<std::string>();
    r.source_dataset = j.value("source_dataset", std::string());
    r.category = category_from_string(j.at("category").get<std::string>());
}

void to_json(json& j, const Rejection& r) {
    j = json{{"item_id", r.item_id}, {"stage", r.stage}, {"reason", r.reason}};
}

void from_json(const json& j, Rejection& r) {
    r.item_id = j.at("item_id").get<std::string>();
    r.stage = j.at("stage").get<std::string>();
    r.reason = j.at("reason").get<std::string>();
}

void validate(const ForgeConfig& cfg) {
    if (cfg.required_distractors != kRequiredDistractors)
        throw Error(ErrorKind::ConfigError, "exactly three distractors are required");
    if (cfg.max_attempts < cfg.required_distractors)
        throw Error(ErrorKind::ConfigError, "max_attempts must be at least the number of required distractors");
    if (cfg.distractor_models.empty()) throw Error(ErrorKind::ConfigError, "no distractor models configured");
    for (const auto& m : cfg.distractor_models) validate(m);
    validate(cfg.rewriter);
    validate(cfg.reviewer);
}

namespace {

std::optional<double> as_number(std::string_view s) {
    std::string t(text::trim(s));
    while (!t.empty() && (t.back() == '.' || t.back() == '!')) t.pop_back();
    std::string digits;
    for (char c : t)
        if (c != ',') digits += c;  // thousands separators
    if (digits.empty()) return std::nullopt;
    const char* begin = digits.data();
    if (*begin == '+') ++begin;
    double value = 0;
    const auto res = std::from_chars(begin, digits.data() + digits.size(), value);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) return std::nullopt;
    return value;
}

/// The answer line of a sampled response, without a leading "Answer:" label.
std::string clean_sample(std::string_view raw) {
    std::string_view s = text::trim(raw);
    if (text::find_ci(s, "answer:") == 0) s = text::trim(s.substr(7));
    const auto newline = s.find('\n');
    if (newline != std::string_view::npos) s = text::trim(s.substr(0, newline));
    return std::string(s);
}

std::vector<ChatMessage> user_only(std::string content) { return {ChatMessage{Role::User, std::move(content)}}; }

/// Returns the text after `tag` (case-insensitive) when the line starts with it.
std::optional<std::string> tagged(std::string_view line, std::string_view tag) {
    if (text::find_ci(line, tag) != 0) return std::nullopt;
    return std::string(text::trim(line.substr(tag.size())));
}

}  // namespace

std::string normalize_answer(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isspace(c) || std::ispunct(c)) continue;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

bool same_answer(std::string_view a, std::string_view b) {
    const auto na = as_number(a);
    const auto nb = as_number(b);
    if (na && nb) return *na == *nb;
    return normalize_answer(a) == normalize_answer(b);
}

std::vector<ChatMessage> render_distractor_prompt(const RawQaItem& item) {
    return user_only("Answer the following question. Reply with the final answer only, on a single line.\n\n" +
                     item.question);
}

std::vector<ChatMessage> render_rewrite_prompt(const RawQaItem& item, std::span<const std::string> distractors) {
    std::string body =
        "Turn this question into a clean multiple-choice item. Fix grammar and formatting, keep the meaning, "
        "and keep each answer short. Do not add new answers.\n\nQuestion: " +
        item.question + "\nCorrect answer: " + item.gold_answer + "\n";
    for (const auto& d : distractors) body += "Wrong answer: " + d + "\n";
    body +=
        "\nReply in exactly this format:\nSTEM: <question>\nCORRECT: <correct answer>\nWRONG: <wrong answer>\n"
        "WRONG: <wrong answer>\nWRONG: <wrong answer>";
    return user_only(std::move(body));
}

std::vector<ChatMessage> render_review_prompt(std::string_view stem, std::string_view correct,
                                              std::span<const std::string> wrong) {
    std::string body =
        "Review this multiple-choice item. Accept it only if the question is clear, the correct answer is right, "
        "and every wrong answer is actually wrong.\n\nQuestion: " +
        std::string(stem) + "\nCorrect answer: " + std::string(correct) + "\n";
    for (const auto& w : wrong) body += "Wrong answer: " + w + "\n";
    body += "\nReply in exactly this format:\nVERDICT: accept or reject\nREASON: <one sentence>";
    return user_only(std::move(body));
}

Rewrite parse_rewrite(std::string_view text) {
    Rewrite out;
    std::string* last = nullptr;
    for (const auto& raw : text::split(text, '\n')) {
        const std::string_view line = text::trim(raw);
        if (line.empty()) continue;
        if (auto v = tagged(line, "STEM:")) {
            if (!out.stem.empty()) throw Error(ErrorKind::MalformedRewrite, "more than one STEM line");
            out.stem = *v;
            last = &out.stem;
        } else if (auto v = tagged(line, "CORRECT:")) {
            if (!out.correct.empty()) throw Error(ErrorKind::MalformedRewrite, "more than one CORRECT line");
            out.correct = *v;
            last = nullptr;
        } else if (auto v = tagged(line, "WRONG:")) {
            out.wrong.push_back(*v);
            last = nullptr;
        } else if (last) {
            *last += "\n" + std::string(line);
        } else {
            throw Error(ErrorKind::MalformedRewrite, "unexpected line '" + std::string(line) + "'");
        }
    }
    if (out.stem.empty()) throw Error(ErrorKind::MalformedRewrite, "missing STEM");
    if (out.correct.empty()) throw Error(ErrorKind::MalformedRewrite, "missing CORRECT");
    if (out.wrong.size() != kRequiredDistractors)
        throw Error(ErrorKind::MalformedRewrite, "expected 3 WRONG lines, got " + std::to_string(out.wrong.size()));
    for (const auto& w : out.wrong)
        if (w.empty()) throw Error(ErrorKind::MalformedRewrite, "empty WRONG line");
    return out;
}

Review parse_review(std::string_view text) {
    Review out;
    std::optional<std::string> verdict;
    for (const auto& raw : text::split(text, '\n')) {
        const std::string_view line = text::trim(raw);
        if (auto v = tagged(line, "VERDICT:"); v && !verdict) verdict = text::to_lower(*v);
        if (auto v = tagged(line, "REASON:"); v && out.reason.empty()) out.reason = *v;
    }
    if (verdict && (*verdict == "accept" || *verdict == "accepted")) {
        out.accept = true;
    } else if (!verdict || (*verdict != "reject" && *verdict != "rejected")) {
        out.accept = false;
        out.reason = "unparseable reviewer verdict: " + std::string(text::trim(text));
    }
    return out;
}

Outcome<std::vector<std::string>> collect_distractors(Gateway& gateway, const RawQaItem& item, const ForgeConfig& cfg) {
    const auto messages = render_distractor_prompt(item);
    std::vector<std::string> found;
    int attempts = 0;
    for (; attempts < cfg.max_attempts && static_cast<int>(found.size()) < cfg.required_distractors; ++attempts) {
        const auto& model = cfg.distractor_models[static_cast<std::size_t>(attempts) % cfg.distractor_models.size()];
        const std::string sample = clean_sample(gateway.complete(model, messages, cfg.sampling));
        if (sample.empty() || normalize_answer(sample).empty() || same_answer(sample, item.gold_answer)) continue;
        bool duplicate = false;
        for (const auto& f : found) duplicate = duplicate || same_answer(f, sample);
        if (!duplicate) found.push_back(sample);
    }
    if (static_cast<int>(found.size()) < cfg.required_distractors)
        return Rejection{item.id, "distractors",
                         "only " + std::to_string(found.size()) + " distinct incorrect answers in " +
                             std::to_string(attempts) + " samples"};
    return found;
}

std::uint64_t item_seed(std::uint64_t rng_seed, std::string_view item_id) {
    const std::string digest = sha256_hex(item_id);
    std::uint64_t h = 0;
    std::from_chars(digest.data(), digest.data() + 16, h, 16);
    return derive_seed(rng_seed, {h});
}

int shuffle_options(std::vector<std::string>& options, int gold, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> slot(options.size());
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] = static_cast<int>(i);
    for (std::size_t i = options.size(); i > 1; --i) {
        const auto k = static_cast<std::size_t>(rng.below(i));
        std::swap(options[i - 1], options[k]);
        std::swap(slot[i - 1], slot[k]);
    }
    for (std::size_t i = 0; i < slot.size(); ++i)
        if (slot[i] == gold) return static_cast<int>(i);
    return -1;
}

Outcome<McqQuestion> rewrite_and_review(Gateway& gateway, const RawQaItem& item,
                                        std::span<const std::string> distractors, const ForgeConfig& cfg) {
    if (static_cast<int>(distractors.size()) != cfg.required_distractors)
        throw Error(ErrorKind::InvalidQuestion, "item " + item.id + " needs exactly three distractors");
    const Rewrite rw = parse_rewrite(gateway.complete(cfg.rewriter, render_rewrite_prompt(item, distractors), cfg.editing));
    const Review review =
        parse_review(gateway.complete(cfg.reviewer, render_review_prompt(rw.stem, rw.correct, rw.wrong), cfg.editing));
    if (!review.accept) return Rejection{item.id, "review", review.reason};

    McqQuestion q;
    q.id = item.id;
    q.stem = rw.stem;
    q.options = {rw.correct, rw.wrong[0], rw.wrong[1], rw.wrong[2]};
    q.gold_index = shuffle_options(q.options, 0, item_seed(cfg.rng_seed, item.id));
    q.category = item.category;
    q.source_dataset = item.source_dataset;
    const auto violations = validate_question(q);
    if (!violations.empty()) {
        std::string reason;
        for (const auto& v : violations) reason += (reason.empty() ? "" : "; ") + v;
        return Rejection{item.id, "validate", reason};
    }
    return q;
}

int classify_difficulty(Gateway& gateway, const McqQuestion& q, const GraderLadder& ladder,
                        const PromptTemplateSet& tpl, const DecodingParams& params) {
    if (ladder.graders.empty()) throw Error(ErrorKind::ConfigError, "grader ladder is empty");
    const auto messages = render_student_initial(q, tpl);
    for (std::size_t i = 0; i < ladder.graders.size(); ++i) {
        const auto choice = extract_choice(gateway.complete(ladder.graders[i], messages, params), q.options);
        if (choice && *choice == q.gold_index) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(ladder.graders.size()) + 1;
}

ForgeResult forge_dataset(Gateway& gateway, std::span<const RawQaItem> items, const ForgeConfig& cfg,
                          const GraderLadder* ladder, const PromptTemplateSet& tpl, unsigned workers) {
    validate(cfg);
    std::vector<Outcome<McqQuestion>> outcomes(items.size(), Rejection{});

    auto process = [&](const RawQaItem& item) -> Outcome<McqQuestion> {
        if (item.id.empty()) return Rejection{item.id, "input", "empty id"};
        if (text::trim(item.gold_answer).empty()) return Rejection{item.id, "input", "empty gold answer"};
        if (text::trim(item.question).empty()) return Rejection{item.id, "input", "empty question"};
        try {
            auto distractors = collect_distractors(gateway, item, cfg);
            if (auto* r = std::get_if<Rejection>(&distractors)) return *r;
            auto made = rewrite_and_review(gateway, item, std::get<std::vector<std::string>>(distractors), cfg);
            if (auto* q = std::get_if<McqQuestion>(&made); q && ladder)
                q->difficulty = classify_difficulty(gateway, *q, *ladder, tpl);
            return made;
        } catch (const Error& e) {
            return Rejection{item.id, e.kind() == ErrorKind::MalformedRewrite ? "rewrite" : "error", e.what()};
        }
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) outcomes[i] = process(items[i]);
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(items.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ForgeResult result;
    std::map<std::pair<std::string, std::string>, std::pair<int, int>> counts;  // (task, dataset) -> (kept, rejected)
    std::map<int, int> levels;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& c = counts[{std::string(to_string(items[i].category)), items[i].source_dataset}];
        if (auto* q = std::get_if<McqQuestion>(&outcomes[i])) {
            ++c.first;
            if (q->difficulty) ++levels[*q->difficulty];
            result.questions.push_back(std::move(*q));
        } else {
            ++c.second;
            result.rejections.push_back(std::get<Rejection>(outcomes[i]));
        }
    }

    json rows = json::array();
    for (const auto& [key, c] : counts)
        rows.push_back({{"task", key.first}, {"dataset", key.second}, {"count", c.first}, {"rejected", c.second}});
    json level_rows = json::object();
    for (const auto& [level, n] : levels) level_rows[std::to_string(level)] = n;
    json pool_ids = json::array();
    for (const auto& m : cfg.distractor_models) pool_ids.push_back(m.model_id);
    json grader_ids = json::array();
    if (ladder)
        for (const auto& m : ladder->graders) grader_ids.push_back(m.model_id);
    result.manifest = {{"rng_seed", cfg.rng_seed},
                       {"distractor_models", pool_ids},
                       {"rewriter", cfg.rewriter.model_id},
                       {"reviewer", cfg.reviewer.model_id},
                       {"graders", grader_ids},
                       {"sampling", cfg.sampling},
                       {"max_attempts", cfg.max_attempts},
                       {"input_items", items.size()},
                       {"accepted", result.questions.size()},
                       {"rejected", result.rejections.size()},
                       {"datasets", rows},
                       {"difficulty_levels", level_rows},
                       {"dataset_digest", dataset_digest(result.questions)}};
    return result;
}

}  // namespace guidebench::forge

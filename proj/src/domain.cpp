#include "guidebench/domain.hpp"

#include "guidebench/digest.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/text.hpp"

#include <map>

namespace guidebench {

using nlohmann::json;

std::string_view to_string(Category c) noexcept {
    switch (c) {
        case Category::Knowledge: return "Knowledge";
        case Category::Reasoning: return "Reasoning";
        case Category::Understanding: return "Understanding";
        case Category::Multilingual: return "Multilingual";
    }
    return "Knowledge";
}

Category category_from_string(std::string_view s) {
    for (Category c : kAllCategories)
        if (to_string(c) == s) return c;
    throw Error(ErrorKind::ParseError, "unknown category '" + std::string(s) + "'");
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::JudgedCorrect: return "JudgedCorrect";
        case Verdict::JudgedIncorrect: return "JudgedIncorrect";
        case Verdict::Unparseable: return "Unparseable";
    }
    return "Unparseable";
}

Verdict verdict_from_string(std::string_view s) {
    for (Verdict v : {Verdict::JudgedCorrect, Verdict::JudgedIncorrect, Verdict::Unparseable})
        if (to_string(v) == s) return v;
    throw Error(ErrorKind::ParseError, "unknown verdict '" + std::string(s) + "'");
}

std::vector<std::string> validate_question(const McqQuestion& q) {
    std::vector<std::string> violations;
    if (q.id.empty()) violations.emplace_back("empty id");
    if (text::trim(q.stem).empty()) violations.emplace_back("empty stem");
    if (q.options.size() != kOptionCount) violations.emplace_back("expected exactly 4 options");
    if (q.gold_index < 0 || q.gold_index >= static_cast<int>(q.options.size()) || q.gold_index >= kOptionCount)
        violations.emplace_back("gold index out of range");
    bool empty_option = false;
    bool duplicate = false;
    for (std::size_t i = 0; i < q.options.size(); ++i) {
        const std::string a = text::normalize_whitespace(q.options[i]);
        if (a.empty()) empty_option = true;
        for (std::size_t k = i + 1; k < q.options.size(); ++k)
            if (a == text::normalize_whitespace(q.options[k])) duplicate = true;
    }
    if (empty_option) violations.emplace_back("empty option");
    if (duplicate) violations.emplace_back("duplicate options");
    if (q.difficulty && (*q.difficulty < 1 || *q.difficulty > 5)) violations.emplace_back("difficulty out of range");
    return violations;
}

bool is_complete(const DialogueTranscript& t, int turns) {
    if (static_cast<int>(t.answers.size()) != turns + 1 || static_cast<int>(t.moves.size()) != turns) return false;
    for (int k = 0; k <= turns; ++k)
        if (t.answers[k].turn != k) return false;
    for (int k = 0; k < turns; ++k)
        if (t.moves[k].turn != k + 1) return false;
    return true;
}

CorrectnessGrid build_grid(std::string_view student_id, std::span<const McqQuestion> questions,
                           std::span<const DialogueTranscript> transcripts) {
    std::map<std::string_view, const DialogueTranscript*> by_question;
    int turns = -1;
    for (const auto& t : transcripts) {
        if (t.student_id != student_id) continue;
        if (turns < 0) turns = t.turns();
        if (t.turns() != turns || !is_complete(t, turns))
            throw Error(ErrorKind::ParseError, "inconsistent transcript for question " + t.question_id);
        by_question[t.question_id] = &t;
    }
    CorrectnessGrid grid;
    grid.student_id = std::string(student_id);
    grid.cells.resize(static_cast<Eigen::Index>(questions.size()), std::max(turns, 0) + 1);
    for (std::size_t i = 0; i < questions.size(); ++i) {
        auto it = by_question.find(questions[i].id);
        if (it == by_question.end())
            throw Error(ErrorKind::ParseError,
                        "no transcript for student " + grid.student_id + " question " + questions[i].id);
        for (int k = 0; k <= turns; ++k) grid.cells(static_cast<Eigen::Index>(i), k) = it->second->answers[k].is_correct;
    }
    return grid;
}

void validate(const RunConfig& cfg) {
    if (cfg.turns < 1) throw Error(ErrorKind::ConfigError, "turns must be >= 1");
    if (cfg.max_inflight_requests < 1) throw Error(ErrorKind::ConfigError, "max_inflight_requests must be >= 1");
    if (cfg.retry_budget < 0) throw Error(ErrorKind::ConfigError, "retry_budget must be >= 0");
    for (const auto* p : {&cfg.student_decoding, &cfg.teacher_decoding}) {
        if (p->temperature < 0) throw Error(ErrorKind::ConfigError, "temperature must be >= 0");
        if (p->max_tokens <= 0) throw Error(ErrorKind::ConfigError, "max_tokens must be positive");
    }
}

namespace {

template <class T>
T field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorKind::ParseError, std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("field '") + key + "': " + e.what());
    }
}

template <class T>
std::optional<T> optional_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return field<T>(j, key);
}

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

}  // namespace

void to_json(json& j, const McqQuestion& q) {
    j = json{{"id", q.id},
             {"stem", q.stem},
             {"options", q.options},
             {"gold_index", q.gold_index},
             {"category", to_string(q.category)},
             {"source_dataset", q.source_dataset},
             {"difficulty", optional_json(q.difficulty)}};
}

void from_json(const json& j, McqQuestion& q) {
    q.id = field<std::string>(j, "id");
    q.stem = field<std::string>(j, "stem");
    q.options = field<std::vector<std::string>>(j, "options");
    q.gold_index = field<int>(j, "gold_index");
    q.category = category_from_string(field<std::string>(j, "category"));
    q.source_dataset = j.contains("source_dataset") ? field<std::string>(j, "source_dataset") : std::string{};
    q.difficulty = optional_field<int>(j, "difficulty");
}

void to_json(json& j, const StudentAnswer& a) {
    j = json{{"turn", a.turn},
             {"raw_text", a.raw_text},
             {"parsed_index", optional_json(a.parsed_index)},
             {"is_correct", a.is_correct}};
}

void from_json(const json& j, StudentAnswer& a) {
    a.turn = field<int>(j, "turn");
    a.raw_text = field<std::string>(j, "raw_text");
    a.parsed_index = optional_field<int>(j, "parsed_index");
    a.is_correct = field<bool>(j, "is_correct");
}

void to_json(json& j, const TeacherMove& m) {
    j = json{{"turn", m.turn}, {"verdict", to_string(m.verdict)}, {"guidance", m.guidance}, {"raw_text", m.raw_text}};
}

void from_json(const json& j, TeacherMove& m) {
    m.turn = field<int>(j, "turn");
    m.verdict = verdict_from_string(field<std::string>(j, "verdict"));
    m.guidance = field<std::string>(j, "guidance");
    m.raw_text = field<std::string>(j, "raw_text");
}

void to_json(json& j, const DialogueTranscript& t) {
    j = json{{"teacher_id", t.teacher_id},
             {"student_id", t.student_id},
             {"question_id", t.question_id},
             {"answers", t.answers},
             {"moves", t.moves}};
}

void from_json(const json& j, DialogueTranscript& t) {
    t.teacher_id = field<std::string>(j, "teacher_id");
    t.student_id = field<std::string>(j, "student_id");
    t.question_id = field<std::string>(j, "question_id");
    t.answers = field<std::vector<StudentAnswer>>(j, "answers");
    t.moves = field<std::vector<TeacherMove>>(j, "moves");
}

void to_json(json& j, const CorrectnessGrid& g) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < g.cells.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < g.cells.cols(); ++k) row.push_back(static_cast<bool>(g.cells(i, k)));
        rows.push_back(std::move(row));
    }
    j = json{{"student_id", g.student_id}, {"cells", std::move(rows)}};
}

void from_json(const json& j, CorrectnessGrid& g) {
    g.student_id = field<std::string>(j, "student_id");
    const auto rows = field<std::vector<std::vector<bool>>>(j, "cells");
    const Eigen::Index cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    g.cells.resize(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != cols)
            throw Error(ErrorKind::ParseError, "ragged correctness grid");
        for (Eigen::Index k = 0; k < cols; ++k) g.cells(static_cast<Eigen::Index>(i), k) = rows[i][k];
    }
}

void to_json(json& j, const DecodingParams& p) {
    j = json{{"temperature", p.temperature}, {"max_tokens", p.max_tokens}, {"seed", optional_json(p.seed)}};
}

void from_json(const json& j, DecodingParams& p) {
    p.temperature = field<double>(j, "temperature");
    p.max_tokens = field<int>(j, "max_tokens");
    p.seed = optional_field<std::int64_t>(j, "seed");
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"turns_T", c.turns},
             {"student_decoding", c.student_decoding},
             {"teacher_decoding", c.teacher_decoding},
             {"max_inflight_requests", c.max_inflight_requests},
             {"rng_seed", c.rng_seed},
             {"retry_budget", c.retry_budget},
             {"request_timeout_s", c.request_timeout_s},
             {"reflection_domain",
              c.reflection_domain == ReflectionDomain::AllQuestions ? "all" : "previously_correct"}};
}

void from_json(const json& j, RunConfig& c) {
    c.turns = field<int>(j, "turns_T");
    c.student_decoding = field<DecodingParams>(j, "student_decoding");
    c.teacher_decoding = field<DecodingParams>(j, "teacher_decoding");
    c.max_inflight_requests = field<int>(j, "max_inflight_requests");
    c.rng_seed = field<std::uint64_t>(j, "rng_seed");
    c.retry_budget = field<int>(j, "retry_budget");
    c.request_timeout_s = j.value("request_timeout_s", 120.0);
    const std::string domain = j.value("reflection_domain", std::string("all"));
    if (domain == "all")
        c.reflection_domain = ReflectionDomain::AllQuestions;
    else if (domain == "previously_correct")
        c.reflection_domain = ReflectionDomain::PreviouslyCorrect;
    else
        throw Error(ErrorKind::ParseError, "unknown reflection_domain '" + domain + "'");
}

std::string dataset_digest(std::span<const McqQuestion> questions) {
    std::string canonical;
    for (const auto& q : questions) {
        canonical += json(q).dump();
        canonical.push_back('\n');
    }
    return sha256_hex(canonical);
}

}  // namespace guidebench

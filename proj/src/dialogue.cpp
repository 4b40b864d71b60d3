#include "guidebench/dialogue.hpp"

#include "guidebench/text.hpp"

#include <fstream>
#include <sstream>

namespace guidebench {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDefaultStudentSystem =
    "You are a student working through multiple-choice questions.";

constexpr std::string_view kDefaultStudentInitial =
    R"(Answer the following multiple-choice question. Think it through briefly, then give your final choice as a single letter (A, B, C or D).

Question:
{stem}

Options:
{options}

Final choice:)";

constexpr std::string_view kDefaultStudentFollowup =
    R"(You answered the multiple-choice question below before. A teacher reviewed your answer and gave you guidance. Reconsider the question in light of the guidance, then give your final choice as a single letter (A, B, C or D).

Question:
{stem}

Options:
{options}

Your previous answer:
{prev_answer}

Teacher guidance:
{guidance}

Final choice:)";

constexpr std::string_view kDefaultTeacherSystem =
    "You are a patient teacher helping a weaker student solve problems.";

constexpr std::string_view kDefaultTeacherTurn =
    R"(A student is working on the question below. You do not see the answer choices the student was given. Read the whole conversation so far, reflect on whether your earlier guidance helped, and decide whether the student's latest answer is correct. Then give concise guidance that helps the student reason toward the right answer.

Question:
{stem}

Conversation so far:
{history}

Reply in exactly this format:
JUDGMENT: correct or incorrect
GUIDANCE: your guidance for the student)";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::TemplateError, "cannot read template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string s = ss.str();
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

bool has_placeholder(std::string_view tpl, std::string_view name) {
    return tpl.find("{" + std::string(name) + "}") != std::string_view::npos;
}

void require(std::string_view tpl, std::string_view which, std::initializer_list<std::string_view> names) {
    for (auto name : names)
        if (!has_placeholder(tpl, name))
            throw Error(ErrorKind::TemplateError,
                        std::string(which) + " template lacks placeholder {" + std::string(name) + "}");
}

void push_system(std::vector<ChatMessage>& out, const std::string& system) {
    if (!system.empty()) out.push_back({Role::System, system});
}

}  // namespace

PromptTemplateSet PromptTemplateSet::defaults() {
    return {std::string(kDefaultStudentSystem), std::string(kDefaultStudentInitial),
            std::string(kDefaultStudentFollowup), std::string(kDefaultTeacherSystem),
            std::string(kDefaultTeacherTurn)};
}

PromptTemplateSet PromptTemplateSet::load(const fs::path& dir) {
    PromptTemplateSet tpl = defaults();
    auto maybe = [&](const char* name, std::string& slot) {
        const fs::path p = dir / name;
        if (fs::exists(p)) slot = read_file(p);
    };
    maybe("student_system.txt", tpl.student_system);
    maybe("student_initial.txt", tpl.student_initial);
    maybe("student_followup.txt", tpl.student_followup);
    maybe("teacher_system.txt", tpl.teacher_system);
    maybe("teacher_turn.txt", tpl.teacher_turn);
    validate(tpl);
    return tpl;
}

void validate(const PromptTemplateSet& tpl) {
    require(tpl.student_initial, "student_initial", {"stem", "options"});
    require(tpl.student_followup, "student_followup", {"stem", "options", "prev_answer", "guidance"});
    require(tpl.teacher_turn, "teacher_turn", {"stem", "history"});
    if (has_placeholder(tpl.teacher_turn, "options") || has_placeholder(tpl.teacher_system, "options"))
        throw Error(ErrorKind::TemplateError, "teacher template must not reference {options}");
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            const auto close = tpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto it = values.find(std::string(tpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tpl[i++]);
    }
    return out;
}

std::string format_options(std::span<const std::string> options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out.push_back('\n');
        out.push_back(static_cast<char>('A' + i));
        out += ". ";
        out += options[i];
    }
    return out;
}

std::vector<ChatMessage> render_student_initial(const McqQuestion& q, const PromptTemplateSet& tpl) {
    require(tpl.student_initial, "student_initial", {"stem", "options"});
    std::vector<ChatMessage> out;
    push_system(out, tpl.student_system);
    out.push_back({Role::User, render_template(tpl.student_initial,
                                               {{"stem", q.stem}, {"options", format_options(q.options)}})});
    return out;
}

std::vector<ChatMessage> render_student_followup(const McqQuestion& q, const StudentAnswer& prev,
                                                 std::string_view guidance, const PromptTemplateSet& tpl) {
    require(tpl.student_followup, "student_followup", {"stem", "options", "prev_answer", "guidance"});
    std::vector<ChatMessage> out;
    push_system(out, tpl.student_system);
    out.push_back({Role::User, render_template(tpl.student_followup, {{"stem", q.stem},
                                                                      {"options", format_options(q.options)},
                                                                      {"prev_answer", prev.raw_text},
                                                                      {"guidance", std::string(guidance)}})});
    return out;
}

std::string format_history(std::span<const StudentAnswer> answers, std::span<const TeacherMove> moves) {
    std::string out;
    for (std::size_t k = 0; k < answers.size(); ++k) {
        if (k > 0) {
            out += kGuidanceMarker;
            out += std::to_string(moves[k - 1].turn);
            out += "]\n";
            out += moves[k - 1].guidance;
            out += "\n\n";
        }
        out += kAnswerMarker;
        out += std::to_string(answers[k].turn);
        out += "]\n";
        out += answers[k].raw_text;
        if (k + 1 < answers.size()) out += "\n\n";
    }
    return out;
}

std::vector<ChatMessage> render_teacher(std::string_view stem, std::span<const StudentAnswer> answers,
                                        std::span<const TeacherMove> moves, const PromptTemplateSet& tpl) {
    require(tpl.teacher_turn, "teacher_turn", {"stem", "history"});
    if (answers.empty() || moves.size() + 1 != answers.size())
        throw Error(ErrorKind::TemplateError, "teacher history needs answers 0..t-1 and moves 1..t-1");
    std::vector<ChatMessage> out;
    push_system(out, tpl.teacher_system);
    out.push_back({Role::User, render_template(tpl.teacher_turn, {{"stem", std::string(stem)},
                                                                  {"history", format_history(answers, moves)}})});
    return out;
}

std::optional<int> extract_choice(std::string_view raw, std::span<const std::string> options) {
    std::optional<int> letter;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        const bool upper = c >= 'A' && c <= 'D';
        const bool lower = c >= 'a' && c <= 'd';
        if (!(upper || lower) || !text::at_word_boundary(raw, i, 1)) continue;
        const bool parenthesized = i > 0 && raw[i - 1] == '(' && i + 1 < raw.size() && raw[i + 1] == ')';
        if (c == 'a' && !parenthesized) continue;
        letter = upper ? c - 'A' : c - 'a';
    }
    if (letter) return letter;

    std::optional<int> best;
    std::size_t best_len = 0;
    bool tie = false;
    for (std::size_t k = 0; k < options.size(); ++k) {
        const std::string_view opt = text::trim(options[k]);
        if (opt.empty() || text::find_ci(raw, opt) == std::string_view::npos) continue;
        if (opt.size() > best_len) {
            best = static_cast<int>(k);
            best_len = opt.size();
            tie = false;
        } else if (opt.size() == best_len) {
            tie = true;
        }
    }
    if (tie) return std::nullopt;
    return best;
}

TeacherMove parse_teacher_move(std::string_view raw, int turn) {
    TeacherMove move;
    move.turn = turn;
    move.raw_text = std::string(raw);
    const std::string full(text::trim(raw));

    std::optional<Verdict> verdict;
    std::size_t judgment_pos = text::find_ci(raw, "JUDGMENT:");
    std::size_t tag_len = 9;
    if (judgment_pos == std::string_view::npos) {
        judgment_pos = text::find_ci(raw, "JUDGEMENT:");
        tag_len = 10;
    }
    if (judgment_pos != std::string_view::npos) {
        std::size_t i = judgment_pos + tag_len;
        while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t' || raw[i] == '*')) ++i;
        std::size_t end = i;
        while (end < raw.size() && text::is_word_char(raw[end])) ++end;
        const std::string word = text::to_lower(raw.substr(i, end - i));
        if (word == "correct") verdict = Verdict::JudgedCorrect;
        if (word == "incorrect") verdict = Verdict::JudgedIncorrect;
    }

    std::optional<std::string> guidance;
    if (const auto g = text::find_ci(raw, "GUIDANCE:"); g != std::string_view::npos) {
        const std::size_t start = g + 9;
        std::size_t stop = raw.size();
        if (judgment_pos != std::string_view::npos && judgment_pos > start) stop = judgment_pos;
        guidance = std::string(text::trim(raw.substr(start, stop - start)));
    }

    if (!verdict) {
        // first standalone verdict word wins
        for (std::size_t pos = text::find_ci(raw, "correct"); pos != std::string_view::npos;
             pos = text::find_ci(raw, "correct", pos + 1)) {
            if (pos >= 2 && text::find_ci(raw.substr(pos - 2, 2), "in") == 0 &&
                text::at_word_boundary(raw, pos - 2, 9)) {
                verdict = Verdict::JudgedIncorrect;
                break;
            }
            if (text::at_word_boundary(raw, pos, 7)) {
                verdict = Verdict::JudgedCorrect;
                break;
            }
        }
    }

    if (!verdict) {
        move.verdict = Verdict::Unparseable;
        move.guidance = full;
        return move;
    }
    move.verdict = *verdict;
    move.guidance = guidance && !guidance->empty() ? *guidance : full;
    return move;
}

StudentAnswer score_answer(std::string_view raw, const McqQuestion& q, int turn) {
    StudentAnswer a;
    a.turn = turn;
    a.raw_text = std::string(raw);
    a.parsed_index = extract_choice(raw, q.options);
    a.is_correct = a.parsed_index && *a.parsed_index == q.gold_index;
    return a;
}

DialogueError::DialogueError(ErrorKind cause, const std::string& teacher, const std::string& student,
                             const std::string& question, int turn, const std::string& detail)
    : Error(ErrorKind::DialogueFailed, "teacher=" + teacher + " student=" + student + " question=" + question +
                                           " turn=" + std::to_string(turn) + ": " + detail),
      cause_(cause),
      turn_(turn) {}

DialogueTranscript run_dialogue(Gateway& gateway, const ModelSpec& teacher, const ModelSpec& student,
                                const McqQuestion& q, const RunConfig& cfg, const PromptTemplateSet& tpl) {
    DialogueTranscript t;
    t.teacher_id = teacher.model_id;
    t.student_id = student.model_id;
    t.question_id = q.id;

    int turn = 0;
    auto call = [&](const ModelSpec& model, const std::vector<ChatMessage>& messages, const DecodingParams& params) {
        try {
            return gateway.complete(model, messages, params);
        } catch (const Error& e) {
            throw DialogueError(e.kind(), teacher.model_id, student.model_id, q.id, turn, e.what());
        }
    };

    t.answers.push_back(score_answer(call(student, render_student_initial(q, tpl), cfg.student_decoding), q, 0));
    for (turn = 1; turn <= cfg.turns; ++turn) {
        const auto teacher_raw = call(teacher, render_teacher(q.stem, t.answers, t.moves, tpl), cfg.teacher_decoding);
        t.moves.push_back(parse_teacher_move(teacher_raw, turn));
        const auto student_raw = call(student, render_student_followup(q, t.answers.back(), t.moves.back().guidance, tpl),
                                      cfg.student_decoding);
        t.answers.push_back(score_answer(student_raw, q, turn));
    }
    return t;
}

StudentAnswer direct_answer(Gateway& gateway, const ModelSpec& model, const McqQuestion& q,
                            const DecodingParams& params, const PromptTemplateSet& tpl) {
    return score_answer(gateway.complete(model, render_student_initial(q, tpl), params), q, 0);
}

}  // namespace guidebench

#pragma once

// The guided-dialogue protocol: prompt rendering under fixed visibility rules,
// parsing of student choices and teacher moves, and the T-turn loop.
//
// Visibility rules, enforced by what each renderer is given:
//   - the student sees stem + options, plus only its own previous answer and
//     the latest guidance;
//   - the teacher sees the stem and the full answer/guidance history, never
//     the option list.

#include "guidebench/domain.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/model_gateway.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace guidebench {

struct PromptTemplateSet {
    std::string student_system;  // shared by initial and follow-up prompts; empty = no system message
    std::string student_initial;
    std::string student_followup;
    std::string teacher_system;
    std::string teacher_turn;

    static PromptTemplateSet defaults();
    /// Reads student_initial.txt, student_followup.txt, teacher_turn.txt and the optional
    /// *_system.txt files from `dir`; missing files fall back to the defaults.
    static PromptTemplateSet load(const std::filesystem::path& dir);
};

/// Throws TemplateError if a required placeholder is missing or the teacher template exposes {options}.
void validate(const PromptTemplateSet& tpl);

/// Single-pass substitution of {name} placeholders; substituted text is not rescanned.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values);

/// "A. first\nB. second\n..."
std::string format_options(std::span<const std::string> options);

std::vector<ChatMessage> render_student_initial(const McqQuestion& q, const PromptTemplateSet& tpl);
std::vector<ChatMessage> render_student_followup(const McqQuestion& q, const StudentAnswer& prev,
                                                 std::string_view guidance, const PromptTemplateSet& tpl);

/// History block markers used in teacher prompts.
inline constexpr std::string_view kAnswerMarker = "[Student answer, turn ";
inline constexpr std::string_view kGuidanceMarker = "[Teacher guidance, turn ";

/// `answers` holds turns 0..t-1 and `moves` turns 1..t-1 (so |moves| == |answers| - 1).
std::string format_history(std::span<const StudentAnswer> answers, std::span<const TeacherMove> moves);
std::vector<ChatMessage> render_teacher(std::string_view stem, std::span<const StudentAnswer> answers,
                                        std::span<const TeacherMove> moves, const PromptTemplateSet& tpl);

/// Rule order: last standalone letter A-D (optionally parenthesized, case-insensitive,
/// a bare lowercase "a" excluded as the article); otherwise the unique longest option
/// text contained in the answer; otherwise none.
std::optional<int> extract_choice(std::string_view raw, std::span<const std::string> options);

/// Tagged format "JUDGMENT: correct|incorrect" / "GUIDANCE: ..."; falls back to the first
/// standalone "correct"/"incorrect"; otherwise Unparseable with the raw text as guidance.
TeacherMove parse_teacher_move(std::string_view raw, int turn);

StudentAnswer score_answer(std::string_view raw, const McqQuestion& q, int turn);

/// Wraps a gateway failure with the unit coordinates.
class DialogueError : public Error {
public:
    DialogueError(ErrorKind cause, const std::string& teacher, const std::string& student, const std::string& question,
                  int turn, const std::string& detail);

    ErrorKind cause() const noexcept { return cause_; }
    int turn() const noexcept { return turn_; }

private:
    ErrorKind cause_;
    int turn_;
};

/// Runs exactly T teacher turns and T+1 student answers (no early stop).
DialogueTranscript run_dialogue(Gateway& gateway, const ModelSpec& teacher, const ModelSpec& student,
                                const McqQuestion& q, const RunConfig& cfg, const PromptTemplateSet& tpl);

/// Zero-shot answer of a model to the student-initial prompt.
StudentAnswer direct_answer(Gateway& gateway, const ModelSpec& model, const McqQuestion& q,
                            const DecodingParams& params, const PromptTemplateSet& tpl);

}  // namespace guidebench

#pragma once

// Shared value types: questions, dialogue transcripts, correctness grids and
// run configuration. Everything here is a plain value, immutable once built.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guidebench {

inline constexpr int kOptionCount = 4;

enum class Category { Knowledge, Reasoning, Understanding, Multilingual };

inline constexpr Category kAllCategories[] = {Category::Knowledge, Category::Reasoning, Category::Understanding,
                                              Category::Multilingual};

std::string_view to_string(Category c) noexcept;
Category category_from_string(std::string_view s);

struct McqQuestion {
    std::string id;
    std::string stem;
    std::vector<std::string> options;
    int gold_index = 0;
    Category category = Category::Knowledge;
    std::string source_dataset;
    std::optional<int> difficulty;

    friend bool operator==(const McqQuestion&, const McqQuestion&) = default;
};

/// Every violated invariant, in a stable order. Empty means the question is well formed.
std::vector<std::string> validate_question(const McqQuestion& q);

struct StudentAnswer {
    int turn = 0;
    std::string raw_text;
    std::optional<int> parsed_index;
    bool is_correct = false;

    friend bool operator==(const StudentAnswer&, const StudentAnswer&) = default;
};

enum class Verdict { JudgedCorrect, JudgedIncorrect, Unparseable };

std::string_view to_string(Verdict v) noexcept;
Verdict verdict_from_string(std::string_view s);

struct TeacherMove {
    int turn = 1;
    Verdict verdict = Verdict::Unparseable;
    std::string guidance;
    std::string raw_text;

    friend bool operator==(const TeacherMove&, const TeacherMove&) = default;
};

struct DialogueTranscript {
    std::string teacher_id;
    std::string student_id;
    std::string question_id;
    std::vector<StudentAnswer> answers;  // turns 0..T
    std::vector<TeacherMove> moves;      // turns 1..T, moves[k].turn == k + 1

    int turns() const noexcept { return static_cast<int>(moves.size()); }
    friend bool operator==(const DialogueTranscript&, const DialogueTranscript&) = default;
};

/// Structural check: T+1 answers, T moves, turn numbering consistent.
bool is_complete(const DialogueTranscript& t, int turns);

using GridCells = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using CorrectnessRow = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Rows are questions of the dataset in dataset order, columns are turns 0..T.
struct CorrectnessGrid {
    std::string student_id;
    GridCells cells;

    Eigen::Index questions() const noexcept { return cells.rows(); }
    int turns() const noexcept { return static_cast<int>(cells.cols()) - 1; }
    friend bool operator==(const CorrectnessGrid& a, const CorrectnessGrid& b) {
        return a.student_id == b.student_id && a.cells.rows() == b.cells.rows() && a.cells.cols() == b.cells.cols() &&
               (a.cells == b.cells).all();
    }
};

/// Builds one student's grid from its transcripts, one row per question in `questions` order.
/// Throws ParseError if a question has no transcript or transcripts disagree on T.
CorrectnessGrid build_grid(std::string_view student_id, std::span<const McqQuestion> questions,
                           std::span<const DialogueTranscript> transcripts);

struct DecodingParams {
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;

    friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

enum class ReflectionDomain {
    AllQuestions,      // flips summed over every question, normalized by |previously correct|
    PreviouslyCorrect  // literal reading: flips summed only over previously-correct questions
};

struct RunConfig {
    int turns = 3;
    DecodingParams student_decoding{};
    DecodingParams teacher_decoding{};
    int max_inflight_requests = 4;
    std::uint64_t rng_seed = 0;
    int retry_budget = 5;
    double request_timeout_s = 120.0;
    ReflectionDomain reflection_domain = ReflectionDomain::AllQuestions;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError on violated invariants.
void validate(const RunConfig& cfg);

// JSON (line-delimited records use these).
void to_json(nlohmann::json& j, const McqQuestion& q);
void from_json(const nlohmann::json& j, McqQuestion& q);
void to_json(nlohmann::json& j, const StudentAnswer& a);
void from_json(const nlohmann::json& j, StudentAnswer& a);
void to_json(nlohmann::json& j, const TeacherMove& m);
void from_json(const nlohmann::json& j, TeacherMove& m);
void to_json(nlohmann::json& j, const DialogueTranscript& t);
void from_json(const nlohmann::json& j, DialogueTranscript& t);
void to_json(nlohmann::json& j, const CorrectnessGrid& g);
void from_json(const nlohmann::json& j, CorrectnessGrid& g);
void to_json(nlohmann::json& j, const DecodingParams& p);
void from_json(const nlohmann::json& j, DecodingParams& p);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Digest of the canonical serialization of a question set, in order.
std::string dataset_digest(std::span<const McqQuestion> questions);

}  // namespace guidebench

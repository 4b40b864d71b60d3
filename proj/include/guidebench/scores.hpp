#pragma once

#include "guidebench/domain.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace guidebench {

/// The five abilities as fractions. NaN marks a metric that is undefined on this slice.
struct AbilityRecord {
    double ca = 0;
    double aa = 0;
    double ja = 0;
    double ga = 0;
    double ra = 0;
};

struct AbilityScores {
    std::string teacher_id;
    AbilityRecord overall;
    std::map<Category, AbilityRecord> per_category;
    std::vector<double> per_turn_delta;  // mean over students of delta P_t, t = 1..T
    std::vector<std::string> flags;
};

struct TeacherResults {
    std::string teacher_id;
    std::vector<CorrectnessGrid> grids;            // one per student, rows in question order
    std::vector<DialogueTranscript> transcripts;   // every (student, question) dialogue
    CorrectnessRow direct_row;                     // teacher's zero-shot correctness per question
};

/// Computes overall, per-category (questions sliced by category first) and per-turn scores.
AbilityScores score_teacher(std::span<const McqQuestion> questions, const TeacherResults& results, int turns,
                            ReflectionDomain domain = ReflectionDomain::AllQuestions);

/// Keeps the rows whose index is listed, in the listed order.
CorrectnessGrid slice_rows(const CorrectnessGrid& grid, std::span<const Eigen::Index> rows);

/// One flat record per (teacher, slice) with fraction and percentage-point fields.
std::vector<nlohmann::json> flat_records(const AbilityScores& scores);
std::string scores_csv(std::span<const AbilityScores> scores);
std::string per_turn_csv(std::span<const AbilityScores> scores);

/// Percentage-point row: name, CA, AA, JA, GA, RA, then CA per category (two decimals, "NA" if undefined).
std::string format_table_row(const std::string& name, const AbilityScores& scores);
std::string format_table(std::span<const AbilityScores> scores);

std::string format_pp(double fraction);

}  // namespace guidebench

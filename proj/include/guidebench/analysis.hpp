#pragma once

// Post-hoc analytics over correctness grids: rank correlations against an
// external leaderboard, teacher/student confusion matrices, leave-one-student-out
// ablation, turn sweeps and difficulty-gain profiles.
//
// Ties: Kendall uses the tau-b correction, Spearman uses average ranks.

#include "guidebench/domain.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace guidebench::analysis {

struct RankEntry {
    std::string model_id;
    double score = 0;
};

struct RankList {
    std::vector<RankEntry> entries;
};

/// CSV with rows `model_id,score`; an optional header row starting with "model_id" is skipped.
/// Throws ParseError on malformed rows and MismatchedIds on duplicate ids.
RankList parse_rank_csv(std::string_view text);
RankList load_rank_list(const std::filesystem::path& path);

/// Tau-b over models common to both lists. Throws MismatchedIds unless the id sets are equal,
/// EmptyDataset for fewer than two models. NaN when either list is entirely tied.
double kendall_tau(const RankList& a, const RankList& b);
/// 1 - 6 sum d^2 / (n (n^2 - 1)) on average ranks. Same errors as kendall_tau.
double spearman(const RankList& a, const RankList& b);

/// Average ranks (1-based, ascending score) scaled by 2 so ties stay integral.
std::vector<std::int64_t> doubled_average_ranks(std::span<const double> scores);

struct ConfusionMatrix {
    int turn = 0;
    std::int64_t teacher_correct_student_correct = 0;
    std::int64_t teacher_correct_student_wrong = 0;
    std::int64_t teacher_wrong_student_correct = 0;
    std::int64_t teacher_wrong_student_wrong = 0;

    std::int64_t total() const noexcept {
        return teacher_correct_student_correct + teacher_correct_student_wrong + teacher_wrong_student_correct +
               teacher_wrong_student_wrong;
    }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Cross-tabulates the teacher's zero-shot correctness with every student's correctness at `turn`.
ConfusionMatrix confusion_matrix(std::span<const CorrectnessGrid> grids, const CorrectnessRow& teacher_row, int turn);

/// Per-teacher student grids, in student order; every teacher must list the same students.
using TeacherGrids = std::map<std::string, std::vector<CorrectnessGrid>>;

struct SubsetRow {
    std::string left_out;                // student id removed from the roster
    std::map<std::string, double> ca;    // teacher id -> CA over the remaining students
    std::optional<double> tau;           // against the external ranking, when one applies
    std::optional<double> rho;
};

/// One row per student (M rows). Correlations are computed when an external ranking is
/// given and at least two teachers are present.
std::vector<SubsetRow> leave_one_student_out(const TeacherGrids& grids, const RankList* external = nullptr);

/// CA after each turn 1..t_max.
std::vector<double> turn_sweep(std::span<const CorrectnessGrid> grids, int t_max);

struct LevelGain {
    std::int64_t initially_wrong = 0;
    std::int64_t fixed = 0;              // initially wrong and correct at turn T
    std::optional<double> ratio;         // nullopt when nothing at this level started wrong
};

/// Pooled over students, keyed by difficulty level. Throws MissingDifficulty if any question is unlabeled.
std::map<int, LevelGain> difficulty_gain_profile(std::span<const CorrectnessGrid> grids,
                                                 std::span<const McqQuestion> questions, int turns);

// Long-format CSV emitters.
std::string confusion_csv(const ConfusionMatrix& m, const std::string& teacher_id);
std::string leave_one_out_csv(std::span<const SubsetRow> rows);
std::string turn_sweep_csv(const std::map<std::string, std::vector<double>>& sweeps);
std::string difficulty_profile_csv(const std::map<std::string, std::map<int, LevelGain>>& profiles);

}  // namespace guidebench::analysis

#pragma once

// Ability metrics over correctness grids. Every function is pure and generic in
// the scalar type: `double` for reporting, an exact rational type for identity
// checks. Counts are accumulated as integers and divided once.

#include "guidebench/domain.hpp"
#include "guidebench/errors.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace guidebench::metrics {

template <class Scalar>
Scalar ratio(std::int64_t num, std::int64_t den) {
    return Scalar(num) / Scalar(den);
}

inline std::int64_t count_correct(const CorrectnessGrid& grid, int turn) {
    return static_cast<std::int64_t>(grid.cells.col(turn).count());
}

inline void check_turn(const CorrectnessGrid& grid, int turn, int lowest) {
    if (turn < lowest || turn > grid.turns())
        throw Error(ErrorKind::TurnOutOfRange,
                    "turn " + std::to_string(turn) + " outside [" + std::to_string(lowest) + ", " +
                        std::to_string(grid.turns()) + "]");
}

inline void check_nonempty(const CorrectnessGrid& grid) {
    if (grid.questions() == 0) throw Error(ErrorKind::EmptyDataset, "grid for " + grid.student_id + " has no rows");
}

/// Zero-shot accuracy of the evaluated model.
template <class Scalar = double>
Scalar application_ability(const CorrectnessRow& row) {
    if (row.size() == 0) throw Error(ErrorKind::EmptyDataset, "no questions answered");
    return ratio<Scalar>(static_cast<std::int64_t>(row.count()), row.size());
}

template <class Scalar = double>
Scalar accuracy(const CorrectnessGrid& grid, int turn) {
    check_nonempty(grid);
    check_turn(grid, turn, 0);
    return ratio<Scalar>(count_correct(grid, turn), grid.questions());
}

/// Accuracy change between turn t-1 and turn t.
template <class Scalar = double>
Scalar delta_p(const CorrectnessGrid& grid, int turn) {
    check_nonempty(grid);
    check_turn(grid, turn, 1);
    return ratio<Scalar>(count_correct(grid, turn) - count_correct(grid, turn - 1), grid.questions());
}

/// Sum of delta_p over turns 1..T, accumulated over the common denominator |D|.
template <class Scalar = double>
Scalar cumulative_gain(const CorrectnessGrid& grid, int turns) {
    check_nonempty(grid);
    check_turn(grid, turns, 1);
    std::int64_t numerator = 0;
    for (int t = 1; t <= turns; ++t) numerator += count_correct(grid, t) - count_correct(grid, t - 1);
    return ratio<Scalar>(numerator, grid.questions());
}

template <class Scalar = double>
Scalar cumulative_gain(const CorrectnessGrid& grid) {
    return cumulative_gain<Scalar>(grid, grid.turns());
}

inline void check_matching(std::span<const CorrectnessGrid> grids) {
    if (grids.empty()) throw Error(ErrorKind::MismatchedGrids, "no student grids");
    for (const auto& g : grids)
        if (g.cells.rows() != grids.front().cells.rows() || g.cells.cols() != grids.front().cells.cols())
            throw Error(ErrorKind::MismatchedGrids, "grid " + g.student_id + " differs in shape from " +
                                                        grids.front().student_id);
}

/// Mean over students of the cumulative gain after `turns` turns.
template <class Scalar = double>
Scalar comprehensive_ability(std::span<const CorrectnessGrid> grids, int turns) {
    check_matching(grids);
    Scalar sum(0);
    for (const auto& g : grids) sum += cumulative_gain<Scalar>(g, turns);
    return sum / Scalar(static_cast<std::int64_t>(grids.size()));
}

template <class Scalar = double>
Scalar comprehensive_ability(std::span<const CorrectnessGrid> grids) {
    check_matching(grids);
    return comprehensive_ability<Scalar>(grids, grids.front().turns());
}

// ---------------------------------------------------------------------------
// Judgment

struct JudgmentRecord {
    bool initially_correct = false;
    Verdict verdict = Verdict::Unparseable;
};

struct StudentJudgments {
    std::string student_id;
    std::vector<JudgmentRecord> records;
};

inline bool judged_right(const JudgmentRecord& r) noexcept {
    if (r.verdict == Verdict::Unparseable) return false;
    return (r.verdict == Verdict::JudgedCorrect) == r.initially_correct;
}

/// Turn-1 verdicts grouped by student (ordered by student id).
inline std::vector<StudentJudgments> collect_judgments(std::span<const DialogueTranscript> transcripts) {
    std::map<std::string, std::vector<JudgmentRecord>> by_student;
    for (const auto& t : transcripts) {
        if (t.moves.empty() || t.answers.empty())
            throw Error(ErrorKind::MissingMove, "transcript " + t.student_id + "/" + t.question_id +
                                                    " has no turn-1 move");
        by_student[t.student_id].push_back({t.answers.front().is_correct, t.moves.front().verdict});
    }
    std::vector<StudentJudgments> out;
    for (auto& [id, records] : by_student) out.push_back({id, std::move(records)});
    return out;
}

/// Mean over students of the per-student rate of correct turn-1 verdicts; Unparseable counts as wrong.
template <class Scalar = double>
Scalar judgment_ability(std::span<const StudentJudgments> students) {
    if (students.empty()) throw Error(ErrorKind::EmptyDataset, "no judgments");
    Scalar sum(0);
    for (const auto& s : students) {
        if (s.records.empty()) throw Error(ErrorKind::EmptyDataset, "no judgments for " + s.student_id);
        std::int64_t right = 0;
        for (const auto& r : s.records) right += judged_right(r) ? 1 : 0;
        sum += ratio<Scalar>(right, static_cast<std::int64_t>(s.records.size()));
    }
    return sum / Scalar(static_cast<std::int64_t>(students.size()));
}

template <class Scalar = double>
Scalar judgment_ability(std::span<const DialogueTranscript> transcripts) {
    const auto grouped = collect_judgments(transcripts);
    return judgment_ability<Scalar>(std::span<const StudentJudgments>(grouped));
}

// ---------------------------------------------------------------------------
// Guidance

template <class Scalar>
struct GuidanceAbility {
    Scalar value;
    /// Indices of students with no initially-wrong question; they contribute 0.
    std::vector<std::size_t> empty_denominator;
};

template <class Scalar = double>
GuidanceAbility<Scalar> guidance_ability(std::span<const CorrectnessGrid> grids) {
    check_matching(grids);
    GuidanceAbility<Scalar> out{Scalar(0), {}};
    for (std::size_t s = 0; s < grids.size(); ++s) {
        const auto& g = grids[s];
        check_nonempty(g);
        check_turn(g, 1, 1);
        const auto wrong0 = !g.cells.col(0);
        const std::int64_t denom = static_cast<std::int64_t>(wrong0.count());
        if (denom == 0) {
            out.empty_denominator.push_back(s);
            continue;
        }
        const std::int64_t fixed = static_cast<std::int64_t>((wrong0 && g.cells.col(1)).count());
        out.value += ratio<Scalar>(fixed, denom);
    }
    out.value /= Scalar(static_cast<std::int64_t>(grids.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Reflection

/// Net flip rate at turn t >= 2, normalized by the number of questions correct at t-1.
template <class Scalar = double>
Scalar reflection_turn(const CorrectnessGrid& grid, int turn,
                       ReflectionDomain domain = ReflectionDomain::AllQuestions) {
    check_nonempty(grid);
    check_turn(grid, turn, 2);
    const auto prev = grid.cells.col(turn - 1);
    const auto cur = grid.cells.col(turn);
    const std::int64_t normalizer = static_cast<std::int64_t>(prev.count());
    if (normalizer == 0)
        throw Error(ErrorKind::EmptyNormalizer, "no question correct at turn " + std::to_string(turn - 1) +
                                                    " for " + grid.student_id);
    const std::int64_t lost = static_cast<std::int64_t>((prev && !cur).count());
    const std::int64_t gained =
        domain == ReflectionDomain::AllQuestions ? static_cast<std::int64_t>((!prev && cur).count()) : 0;
    return ratio<Scalar>(gained - lost, normalizer);
}

/// prod_{t=2..T}(1 + RA_t) - 1 for one student.
template <class Scalar = double>
Scalar reflection_product(const CorrectnessGrid& grid, int turns,
                          ReflectionDomain domain = ReflectionDomain::AllQuestions) {
    if (turns < 2) throw Error(ErrorKind::TurnOutOfRange, "reflection needs T >= 2");
    Scalar product(1);
    for (int t = 2; t <= turns; ++t) product *= Scalar(1) + reflection_turn<Scalar>(grid, t, domain);
    return product - Scalar(1);
}

template <class Scalar = double>
Scalar reflection_ability(std::span<const CorrectnessGrid> grids, int turns,
                          ReflectionDomain domain = ReflectionDomain::AllQuestions) {
    check_matching(grids);
    Scalar sum(0);
    for (const auto& g : grids) sum += reflection_product<Scalar>(g, turns, domain);
    return sum / Scalar(static_cast<std::int64_t>(grids.size()));
}

// ---------------------------------------------------------------------------
// Decomposition predictor

/// Initially-wrong count over turn-1 judgment-error count; nullopt when there are no judgment errors.
template <class Scalar = double>
std::optional<Scalar> ja_prime(std::int64_t initially_wrong, std::int64_t judgment_errors) {
    if (judgment_errors == 0) return std::nullopt;
    return ratio<Scalar>(initially_wrong, judgment_errors);
}

template <class Scalar = double>
std::optional<Scalar> ja_prime(const StudentJudgments& student) {
    std::int64_t wrong = 0;
    std::int64_t errors = 0;
    for (const auto& r : student.records) {
        wrong += r.initially_correct ? 0 : 1;
        errors += judged_right(r) ? 0 : 1;
    }
    return ja_prime<Scalar>(wrong, errors);
}

template <class Scalar = double>
struct DecompositionInputs {
    Scalar p0;                       // initial student accuracy
    Scalar ja1;                      // first-turn judgment accuracy
    std::optional<Scalar> ja_prime;  // nullopt = undefined
    Scalar ga;
    Scalar alpha;
    Scalar ra;
};

template <class Scalar = double>
struct GainPrediction {
    Scalar first_turn;  // predicted delta P_1
    Scalar total;       // predicted delta P_T = delta P_1 * (RA + 1)
};

template <class Scalar = double>
GainPrediction<Scalar> predicted_gain(const DecompositionInputs<Scalar>& in) {
    if (!in.ja_prime) throw Error(ErrorKind::UndefinedJaPrime, "JA' undefined: no first-turn judgment errors");
    const Scalar one(1);
    const Scalar p0_wrong = one - in.p0;
    const Scalar ja_wrong = one - in.ja1;
    const Scalar first = *in.ja_prime * in.ga * (in.ja1 * p0_wrong + in.p0 * ja_wrong) - in.alpha * in.p0 * ja_wrong;
    return {first, first * (in.ra + one)};
}

}  // namespace guidebench::metrics

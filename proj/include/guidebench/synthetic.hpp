#pragma once

// Parameterized stochastic teacher and student agents. Every (question, student)
// pair draws from its own substream, so results do not depend on thread count.

#include "guidebench/domain.hpp"
#include "guidebench/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace guidebench::synthetic {

struct StudentParams {
    double p0 = 0.5;     // probability the unguided answer is correct
    double adopt = 1.0;  // probability of following corrective guidance
};

struct TeacherParams {
    double j = 1.0;      // per-turn judgment accuracy
    double g = 0.5;      // probability corrective guidance is correct
    double alpha = 0.0;  // probability a misjudged correct answer is corrupted
    double r = 1.0;      // per-turn decay of guidance effectiveness
};

/// Throws ConfigError when a parameter leaves [0, 1].
void validate(const StudentParams& s);
void validate(const TeacherParams& t);

void to_json(nlohmann::json& j, const StudentParams& p);
void from_json(const nlohmann::json& j, StudentParams& p);
void to_json(nlohmann::json& j, const TeacherParams& p);
void from_json(const nlohmann::json& j, TeacherParams& p);

struct SimulationOptions {
    bool emit_transcripts = true;  // symbolic transcripts; grids and judgments are always produced
    unsigned threads = 1;
    std::string teacher_id = "synthetic-teacher";
};

struct Population {
    std::string teacher_id;
    std::vector<McqQuestion> questions;
    std::vector<CorrectnessGrid> grids;                  // one per student
    std::vector<metrics::StudentJudgments> judgments;    // turn-1 verdicts, same order as grids
    std::vector<DialogueTranscript> transcripts;         // empty unless emit_transcripts
};

std::string student_id(std::size_t index);

Population simulate_population(std::span<const StudentParams> students, const TeacherParams& teacher,
                               int n_questions, int turns, std::uint64_t seed, const SimulationOptions& options = {});

struct DecompositionReport {
    bool applicable = false;
    std::string note;
    // Measured inputs, averaged over students. NaN when undefined.
    double p0 = 0;
    double ja1 = 0;
    double ja_prime = 0;
    double ga = 0;
    double alpha = 0;
    double ra = 0;
    double delta_p1_measured = 0;
    double delta_pT_measured = 0;
    double delta_p1_predicted = 0;
    double delta_pT_predicted = 0;
    double first_turn_error = 0;  // |measured - predicted| for delta P_1
    double total_error = 0;       // |measured - predicted| for delta P_T
    double identity_gap = 0;      // |delta P_T - delta P_1 (RA + 1)|, all measured
};

/// Compares measured gains with the decomposition predictor. Predictions are
/// computed per student from that student's measured inputs and then averaged.
DecompositionReport decomposition_report(const Population& population, const TeacherParams& truth, int turns);

void to_json(nlohmann::json& j, const DecompositionReport& r);

}  // namespace guidebench::synthetic

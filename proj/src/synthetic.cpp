#include "guidebench/synthetic.hpp"

#include "guidebench/errors.hpp"
#include "guidebench/rng.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace guidebench::synthetic {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_fraction(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::ConfigError, std::string(name) + " must lie in [0, 1]");
}

McqQuestion synthetic_question(int index) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06d", index);
    McqQuestion q;
    q.id = id;
    q.stem = "Synthetic item " + std::to_string(index);
    q.options = {"correct marker", "wrong marker 1", "wrong marker 2", "wrong marker 3"};
    q.gold_index = 0;
    q.category = Category::Reasoning;
    q.source_dataset = "synthetic";
    return q;
}

StudentAnswer symbolic_answer(int turn, bool correct) {
    StudentAnswer a;
    a.turn = turn;
    a.parsed_index = correct ? 0 : 1;
    a.raw_text = correct ? "Answer: A" : "Answer: B";
    a.is_correct = correct;
    return a;
}

TeacherMove symbolic_move(int turn, bool believes_wrong) {
    TeacherMove m;
    m.turn = turn;
    m.verdict = believes_wrong ? Verdict::JudgedIncorrect : Verdict::JudgedCorrect;
    m.guidance = believes_wrong ? "Reconsider the key step." : "Keep your reasoning.";
    m.raw_text = std::string("JUDGMENT: ") + (believes_wrong ? "incorrect" : "correct") + "\nGUIDANCE: " + m.guidance;
    return m;
}

}  // namespace

void validate(const StudentParams& s) {
    check_fraction(s.p0, "p0");
    check_fraction(s.adopt, "adopt");
}

void validate(const TeacherParams& t) {
    check_fraction(t.j, "j");
    check_fraction(t.g, "g");
    check_fraction(t.alpha, "alpha");
    check_fraction(t.r, "r");
}

void to_json(json& j, const StudentParams& p) { j = json{{"p0", p.p0}, {"adopt", p.adopt}}; }

void from_json(const json& j, StudentParams& p) {
    p.p0 = j.value("p0", 0.5);
    p.adopt = j.value("adopt", 1.0);
}

void to_json(json& j, const TeacherParams& p) { j = json{{"j", p.j}, {"g", p.g}, {"alpha", p.alpha}, {"r", p.r}}; }

void from_json(const json& j, TeacherParams& p) {
    p.j = j.value("j", 1.0);
    p.g = j.value("g", 0.5);
    p.alpha = j.value("alpha", 0.0);
    p.r = j.value("r", 1.0);
}

std::string student_id(std::size_t index) { return "student-" + std::to_string(index + 1); }

Population simulate_population(std::span<const StudentParams> students, const TeacherParams& teacher,
                               int n_questions, int turns, std::uint64_t seed, const SimulationOptions& options) {
    if (n_questions < 1) throw Error(ErrorKind::ConfigError, "n_questions must be at least 1");
    if (turns < 1) throw Error(ErrorKind::ConfigError, "turns must be at least 1");
    if (students.empty()) throw Error(ErrorKind::ConfigError, "at least one student is required");
    validate(teacher);
    for (const auto& s : students) validate(s);

    Population pop;
    pop.teacher_id = options.teacher_id;
    pop.questions.reserve(static_cast<std::size_t>(n_questions));
    for (int q = 0; q < n_questions; ++q) pop.questions.push_back(synthetic_question(q + 1));

    const std::size_t m = students.size();
    const auto n = static_cast<std::size_t>(n_questions);
    pop.grids.resize(m);
    pop.judgments.resize(m);
    for (std::size_t s = 0; s < m; ++s) {
        pop.grids[s].student_id = student_id(s);
        pop.grids[s].cells = GridCells::Constant(n_questions, turns + 1, false);
        pop.judgments[s].student_id = student_id(s);
        pop.judgments[s].records.resize(n);
    }
    std::vector<DialogueTranscript> transcripts(options.emit_transcripts ? n * m : 0);

    std::vector<double> effectiveness(static_cast<std::size_t>(turns) + 1, 1.0);
    for (int t = 2; t <= turns; ++t) effectiveness[t] = effectiveness[t - 1] * teacher.r;

    auto simulate_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            for (std::size_t s = 0; s < m; ++s) {
                Rng rng(derive_seed(seed, {q, s}));
                auto& cells = pop.grids[s].cells;
                const auto row = static_cast<Eigen::Index>(q);
                bool correct = rng.uniform() < students[s].p0;
                cells(row, 0) = correct;
                DialogueTranscript* tr = options.emit_transcripts ? &transcripts[q * m + s] : nullptr;
                if (tr) {
                    tr->teacher_id = pop.teacher_id;
                    tr->student_id = student_id(s);
                    tr->question_id = pop.questions[q].id;
                    tr->answers.push_back(symbolic_answer(0, correct));
                }
                for (int t = 1; t <= turns; ++t) {
                    // Three draws per turn regardless of branch, so parameter sweeps share random numbers.
                    const double u_judge = rng.uniform();
                    const double u_guide = rng.uniform();
                    const double u_corrupt = rng.uniform();
                    const bool judged_right = u_judge < teacher.j;
                    const bool believes_wrong = judged_right ? !correct : correct;
                    if (t == 1) {
                        pop.judgments[s].records[q] = {
                            correct, believes_wrong ? Verdict::JudgedIncorrect : Verdict::JudgedCorrect};
                    }
                    if (tr) tr->moves.push_back(symbolic_move(t, believes_wrong));
                    if (believes_wrong) {
                        if (!correct)
                            correct = u_guide < teacher.g * students[s].adopt * effectiveness[t];
                        else
                            correct = !(u_corrupt < teacher.alpha);
                    }
                    cells(row, t) = correct;
                    if (tr) tr->answers.push_back(symbolic_answer(t, correct));
                }
            }
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        simulate_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin < end) pool.emplace_back(simulate_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    pop.transcripts = std::move(transcripts);
    return pop;
}

DecompositionReport decomposition_report(const Population& population, const TeacherParams& truth, int turns) {
    DecompositionReport rep;
    const auto& grids = population.grids;
    metrics::check_matching(grids);
    if (population.judgments.size() != grids.size())
        throw Error(ErrorKind::MismatchedGrids, "judgments do not match the student grids");
    const double m = static_cast<double>(grids.size());

    rep.alpha = truth.alpha;
    for (std::size_t s = 0; s < grids.size(); ++s) {
        rep.p0 += metrics::accuracy(grids[s], 0) / m;
        rep.delta_p1_measured += metrics::delta_p(grids[s], 1) / m;
        rep.delta_pT_measured += metrics::cumulative_gain(grids[s], turns) / m;
        const std::span<const metrics::StudentJudgments> one(&population.judgments[s], 1);
        rep.ja1 += metrics::judgment_ability(one) / m;
    }
    rep.ga = metrics::guidance_ability(std::span<const CorrectnessGrid>(grids)).value;

    rep.applicable = true;
    try {
        rep.ra = metrics::reflection_ability(std::span<const CorrectnessGrid>(grids), turns);
    } catch (const Error& e) {
        rep.ra = kNaN;
        rep.applicable = false;
        rep.note = e.what();
    }

    rep.identity_gap = std::isnan(rep.ra) ? kNaN : std::abs(rep.delta_pT_measured - rep.delta_p1_measured * (rep.ra + 1));

    double ja_prime_sum = 0;
    double first_sum = 0;
    double total_sum = 0;
    for (std::size_t s = 0; s < grids.size() && rep.applicable; ++s) {
        const auto jp = metrics::ja_prime(population.judgments[s]);
        if (!jp) {
            rep.applicable = false;
            rep.note = "predictor inapplicable: " + grids[s].student_id + " has no first-turn judgment errors";
            break;
        }
        const std::span<const CorrectnessGrid> one(&grids[s], 1);
        const std::span<const metrics::StudentJudgments> judged(&population.judgments[s], 1);
        metrics::DecompositionInputs<double> in{metrics::accuracy(grids[s], 0),
                                                metrics::judgment_ability(judged),
                                                jp,
                                                metrics::guidance_ability(one).value,
                                                truth.alpha,
                                                metrics::reflection_product(grids[s], turns)};
        const auto pred = metrics::predicted_gain(in);
        ja_prime_sum += *jp;
        first_sum += pred.first_turn;
        total_sum += pred.total;
    }
    if (rep.applicable && truth.alpha != 0.0) rep.note = "alpha is nonzero; the predictor is only calibrated for alpha = 0";

    if (rep.applicable) {
        rep.ja_prime = ja_prime_sum / m;
        rep.delta_p1_predicted = first_sum / m;
        rep.delta_pT_predicted = total_sum / m;
        rep.first_turn_error = std::abs(rep.delta_p1_measured - rep.delta_p1_predicted);
        rep.total_error = std::abs(rep.delta_pT_measured - rep.delta_pT_predicted);
    } else {
        rep.ja_prime = rep.delta_p1_predicted = rep.delta_pT_predicted = kNaN;
        rep.first_turn_error = rep.total_error = kNaN;
    }
    return rep;
}

void to_json(json& j, const DecompositionReport& r) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    j = json{{"applicable", r.applicable},
             {"note", r.note},
             {"p0", num(r.p0)},
             {"ja1", num(r.ja1)},
             {"ja_prime", num(r.ja_prime)},
             {"ga", num(r.ga)},
             {"alpha", num(r.alpha)},
             {"ra", num(r.ra)},
             {"delta_p1_measured", num(r.delta_p1_measured)},
             {"delta_pT_measured", num(r.delta_pT_measured)},
             {"delta_p1_predicted", num(r.delta_p1_predicted)},
             {"delta_pT_predicted", num(r.delta_pT_predicted)},
             {"first_turn_error", num(r.first_turn_error)},
             {"total_error", num(r.total_error)},
             {"identity_gap", num(r.identity_gap)}};
}

}  // namespace guidebench::synthetic

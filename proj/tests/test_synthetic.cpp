#include "guidebench/synthetic.hpp"

#include <doctest.h>

#include <cmath>

using namespace guidebench;
using namespace guidebench::synthetic;

namespace {

std::vector<StudentParams> students(std::size_t m, double p0, double adopt = 1.0) {
    return std::vector<StudentParams>(m, StudentParams{p0, adopt});
}

double mean_delta(const Population& pop, int t) {
    double sum = 0;
    for (const auto& g : pop.grids) sum += metrics::delta_p(g, t);
    return sum / static_cast<double>(pop.grids.size());
}

}  // namespace

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(validate(StudentParams{1.5, 1.0}), Error);
    CHECK_THROWS_AS(validate(TeacherParams{1.0, 0.5, -0.1, 1.0}), Error);
    CHECK_THROWS_AS(validate(TeacherParams{1.0, 0.5, 0.0, 1.1}), Error);
    CHECK_THROWS_AS(simulate_population(students(1, 0.5), TeacherParams{}, 0, 3, 1), Error);
    const auto p = nlohmann::json{{"g", 0.9}}.get<TeacherParams>();
    CHECK(p.g == 0.9);
    CHECK(p.j == 1.0);
}

TEST_CASE("perfect teacher fixes every wrong answer in one turn") {
    const auto pop = simulate_population(students(2, 0.0), TeacherParams{1.0, 1.0, 0.0, 1.0}, 50, 3, 1);
    for (const auto& g : pop.grids) {
        CHECK((!g.cells.col(0)).all());
        for (int t = 1; t <= 3; ++t) CHECK(g.cells.col(t).all());
    }
}

TEST_CASE("without guidance or corruption nothing moves") {
    const auto pop = simulate_population(students(3, 0.4), TeacherParams{0.7, 0.0, 0.0, 1.0}, 300, 4, 2);
    for (const auto& g : pop.grids)
        for (int t = 1; t <= 4; ++t) CHECK((g.cells.col(t) == g.cells.col(0)).all());
}

TEST_CASE("seed determinism and thread independence") {
    const auto s = students(2, 0.5, 0.8);
    const TeacherParams t{0.8, 0.6, 0.2, 0.7};
    const auto a = simulate_population(s, t, 400, 3, 77);
    SimulationOptions par;
    par.threads = 4;
    const auto b = simulate_population(s, t, 400, 3, 77, par);
    CHECK(a.grids == b.grids);
    CHECK(a.transcripts == b.transcripts);
    const auto c = simulate_population(s, t, 400, 3, 78);
    CHECK_FALSE(a.grids == c.grids);
}

TEST_CASE("transcripts agree with grids and judgments") {
    const auto pop = simulate_population(students(2, 0.5), TeacherParams{0.8, 0.5, 0.1, 1.0}, 40, 2, 5);
    REQUIRE(pop.transcripts.size() == 80);
    for (std::size_t s = 0; s < 2; ++s) {
        const auto g = build_grid(student_id(s), pop.questions, pop.transcripts);
        CHECK(g == pop.grids[s]);
    }
    const auto grouped = metrics::collect_judgments(pop.transcripts);
    REQUIRE(grouped.size() == 2);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t q = 0; q < 40; ++q) {
            CHECK(grouped[s].records[q].initially_correct == pop.judgments[s].records[q].initially_correct);
            CHECK(grouped[s].records[q].verdict == pop.judgments[s].records[q].verdict);
        }

    SimulationOptions lean;
    lean.emit_transcripts = false;
    const auto bare = simulate_population(students(2, 0.5), TeacherParams{0.8, 0.5, 0.1, 1.0}, 40, 2, 5, lean);
    CHECK(bare.transcripts.empty());
    CHECK(bare.grids == pop.grids);
}

TEST_CASE("first-turn gain with a perfect judge and half-right guidance") {
    // p0 = 0.5, j = 1, g = 0.5, adopt = 1: half the questions start wrong and half of those get fixed.
    const double expected = (1 - 0.5) * 1.0 * 0.5 * 1.0;
    for (std::uint64_t seed : {1u, 2u}) {
        const auto pop = simulate_population(students(1, 0.5), TeacherParams{1.0, 0.5, 0.0, 1.0}, 20000, 1, seed);
        CHECK(std::abs(mean_delta(pop, 1) - expected) < 0.02);
    }
}

TEST_CASE("decomposition is inapplicable without judgment errors") {
    const auto pop = simulate_population(students(2, 0.5), TeacherParams{1.0, 0.5, 0.0, 1.0}, 500, 3, 3);
    const auto rep = decomposition_report(pop, TeacherParams{1.0, 0.5, 0.0, 1.0}, 3);
    CHECK_FALSE(rep.applicable);
    CHECK(std::isnan(rep.delta_p1_predicted));
    CHECK(rep.note.find("inapplicable") != std::string::npos);
    CHECK(nlohmann::json(rep)["delta_p1_predicted"].is_null());
}

TEST_CASE("decomposition report measures its inputs") {
    const TeacherParams t{0.9, 0.5, 0.0, 1.0};
    const auto pop = simulate_population(students(1, 0.5), t, 20000, 3, 4);
    const auto rep = decomposition_report(pop, t, 3);
    REQUIRE(rep.applicable);
    CHECK(rep.p0 == doctest::Approx(0.5).epsilon(0.05));
    CHECK(rep.ja1 == doctest::Approx(0.9).epsilon(0.02));
    CHECK(rep.ja_prime == doctest::Approx(5.0).epsilon(0.1));
    CHECK(rep.ga == doctest::Approx(0.45).epsilon(0.05));
    CHECK(rep.first_turn_error == doctest::Approx(std::abs(rep.delta_p1_measured - rep.delta_p1_predicted)));

    const auto noisy = decomposition_report(pop, TeacherParams{0.9, 0.5, 0.2, 1.0}, 3);
    CHECK(noisy.note.find("alpha") != std::string::npos);
}

TEST_CASE("decay lowers reflection") {
    const auto s = students(2, 0.5);
    const auto full = simulate_population(s, TeacherParams{0.9, 0.5, 0.0, 1.0}, 20000, 4, 8);
    const auto decayed = simulate_population(s, TeacherParams{0.9, 0.5, 0.0, 0.5}, 20000, 4, 9);
    CHECK(metrics::reflection_ability(std::span<const CorrectnessGrid>(decayed.grids), 4) <
          metrics::reflection_ability(std::span<const CorrectnessGrid>(full.grids), 4));
}

TEST_CASE("property: CA is monotone in g and j over common random numbers") {
    const auto s = students(2, 0.4, 0.9);
    const double levels[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        double previous = -1;
        for (double g : levels) {
            const auto pop = simulate_population(s, TeacherParams{0.8, g, 0.1, 0.8}, 1000, 3, seed);
            const double ca = metrics::comprehensive_ability(std::span<const CorrectnessGrid>(pop.grids));
            CHECK(ca >= previous);
            previous = ca;
        }
        previous = -1;
        for (double j : levels) {
            const auto pop = simulate_population(s, TeacherParams{j, 0.6, 0.1, 0.8}, 1000, 3, seed);
            const double ca = metrics::comprehensive_ability(std::span<const CorrectnessGrid>(pop.grids));
            CHECK(ca >= previous);
            previous = ca;
        }
    }
}

TEST_CASE("property: gains shrink over turns when guidance decays") {
    std::vector<double> mean(5, 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pop = simulate_population(students(1, 0.5), TeacherParams{0.9, 0.6, 0.0, 0.6}, 5000, 4, 100 + seed);
        for (int t = 1; t <= 4; ++t) mean[static_cast<std::size_t>(t)] += mean_delta(pop, t) / 10.0;
    }
    for (int t = 2; t <= 4; ++t) CHECK(mean[static_cast<std::size_t>(t)] < mean[static_cast<std::size_t>(t) - 1]);
}

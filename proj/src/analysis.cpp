#include "guidebench/analysis.hpp"

#include "guidebench/errors.hpp"
#include "guidebench/metrics.hpp"
#include "guidebench/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace guidebench::analysis {

using text::split;
using text::trim;

namespace {

std::string number(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

/// Scores of `a` and `b` aligned by model id in the order of `a`.
std::pair<std::vector<double>, std::vector<double>> align(const RankList& a, const RankList& b) {
    if (a.entries.size() != b.entries.size())
        throw Error(ErrorKind::MismatchedIds, "rank lists have " + std::to_string(a.entries.size()) + " and " +
                                                  std::to_string(b.entries.size()) + " models");
    std::map<std::string, double> lookup;
    for (const auto& e : b.entries) lookup[e.model_id] = e.score;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& e : a.entries) {
        const auto it = lookup.find(e.model_id);
        if (it == lookup.end()) throw Error(ErrorKind::MismatchedIds, "model " + e.model_id + " missing from ranking");
        xs.push_back(e.score);
        ys.push_back(it->second);
    }
    if (xs.size() < 2) throw Error(ErrorKind::EmptyDataset, "rank correlation needs at least two models");
    return {xs, ys};
}

int sign(double x) { return (x > 0) - (x < 0); }

}  // namespace

RankList parse_rank_csv(std::string_view text) {
    RankList out;
    std::set<std::string> seen;
    int line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        const std::string line(trim(raw));
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split(line, ',');
        if (cells.size() != 2) throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected model_id,score");
        const std::string id(trim(cells[0]));
        const std::string score_text(trim(cells[1]));
        if (line_no == 1 && id == "model_id") continue;
        double score = 0;
        const auto res = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (id.empty() || res.ec != std::errc() || res.ptr != score_text.data() + score_text.size())
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad row '" + line + "'");
        if (!seen.insert(id).second) throw Error(ErrorKind::MismatchedIds, "duplicate model id " + id);
        out.entries.push_back({id, score});
    }
    return out;
}

RankList load_rank_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_rank_csv(ss.str());
}

double kendall_tau(const RankList& a, const RankList& b) {
    const auto [xs, ys] = align(a, b);
    const auto n = static_cast<std::int64_t>(xs.size());
    std::int64_t concordant_minus_discordant = 0;
    std::int64_t ties_x = 0;
    std::int64_t ties_y = 0;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t k = i + 1; k < n; ++k) {
            const int sx = sign(xs[i] - xs[k]);
            const int sy = sign(ys[i] - ys[k]);
            concordant_minus_discordant += sx * sy;
            ties_x += sx == 0;
            ties_y += sy == 0;
        }
    const std::int64_t pairs = n * (n - 1) / 2;
    const std::int64_t denom_sq = (pairs - ties_x) * (pairs - ties_y);
    if (denom_sq == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(concordant_minus_discordant) / std::sqrt(static_cast<double>(denom_sq));
}

std::vector<std::int64_t> doubled_average_ranks(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] < scores[r]; });
    std::vector<std::int64_t> ranks(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t k = i;
        while (k + 1 < order.size() && scores[order[k + 1]] == scores[order[i]]) ++k;
        // Positions i..k (0-based) share the average of 1-based ranks i+1..k+1.
        const auto doubled = static_cast<std::int64_t>(i + 1 + k + 1);
        for (std::size_t p = i; p <= k; ++p) ranks[order[p]] = doubled;
        i = k + 1;
    }
    return ranks;
}

double spearman(const RankList& a, const RankList& b) {
    const auto [xs, ys] = align(a, b);
    const auto rx = doubled_average_ranks(xs);
    const auto ry = doubled_average_ranks(ys);
    const auto n = static_cast<std::int64_t>(xs.size());
    std::int64_t sum_d2_x4 = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) sum_d2_x4 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const std::int64_t denom_x4 = 4 * n * (n * n - 1);
    return static_cast<double>(denom_x4 - 6 * sum_d2_x4) / static_cast<double>(denom_x4);
}

ConfusionMatrix confusion_matrix(std::span<const CorrectnessGrid> grids, const CorrectnessRow& teacher_row, int turn) {
    metrics::check_matching(grids);
    ConfusionMatrix m;
    m.turn = turn;
    for (const auto& g : grids) {
        metrics::check_turn(g, turn, 0);
        if (g.questions() != teacher_row.size())
            throw Error(ErrorKind::MismatchedGrids, "teacher row and grid " + g.student_id + " differ in length");
        const auto student = g.cells.col(turn);
        m.teacher_correct_student_correct += (teacher_row && student).count();
        m.teacher_correct_student_wrong += (teacher_row && !student).count();
        m.teacher_wrong_student_correct += (!teacher_row && student).count();
        m.teacher_wrong_student_wrong += (!teacher_row && !student).count();
    }
    return m;
}

std::vector<SubsetRow> leave_one_student_out(const TeacherGrids& grids, const RankList* external) {
    if (grids.empty()) throw Error(ErrorKind::MismatchedGrids, "no teachers");
    const auto& first = grids.begin()->second;
    if (first.size() < 2) throw Error(ErrorKind::MismatchedGrids, "leave-one-out needs at least two students");
    for (const auto& [teacher, gs] : grids) {
        if (gs.size() != first.size())
            throw Error(ErrorKind::MismatchedGrids, "teacher " + teacher + " has a different student roster");
        for (std::size_t s = 0; s < gs.size(); ++s)
            if (gs[s].student_id != first[s].student_id)
                throw Error(ErrorKind::MismatchedGrids, "teacher " + teacher + " lists students in a different order");
    }

    std::vector<SubsetRow> rows;
    for (std::size_t out = 0; out < first.size(); ++out) {
        SubsetRow row;
        row.left_out = first[out].student_id;
        RankList measured;
        for (const auto& [teacher, gs] : grids) {
            std::vector<CorrectnessGrid> kept;
            for (std::size_t s = 0; s < gs.size(); ++s)
                if (s != out) kept.push_back(gs[s]);
            row.ca[teacher] = metrics::comprehensive_ability(std::span<const CorrectnessGrid>(kept));
            measured.entries.push_back({teacher, row.ca[teacher]});
        }
        if (external && grids.size() >= 2) {
            row.tau = kendall_tau(measured, *external);
            row.rho = spearman(measured, *external);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> turn_sweep(std::span<const CorrectnessGrid> grids, int t_max) {
    metrics::check_matching(grids);
    std::vector<double> out;
    for (int t = 1; t <= t_max; ++t) out.push_back(metrics::comprehensive_ability(grids, t));
    return out;
}

std::map<int, LevelGain> difficulty_gain_profile(std::span<const CorrectnessGrid> grids,
                                                 std::span<const McqQuestion> questions, int turns) {
    metrics::check_matching(grids);
    std::map<int, LevelGain> out;
    for (const auto& q : questions) {
        if (!q.difficulty) throw Error(ErrorKind::MissingDifficulty, "question " + q.id + " has no difficulty label");
        out[*q.difficulty];
    }
    for (const auto& g : grids) {
        metrics::check_turn(g, turns, 1);
        if (g.questions() != static_cast<Eigen::Index>(questions.size()))
            throw Error(ErrorKind::MismatchedGrids, "grid " + g.student_id + " does not cover the question set");
        for (std::size_t i = 0; i < questions.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            if (g.cells(row, 0)) continue;
            auto& level = out[*questions[i].difficulty];
            ++level.initially_wrong;
            level.fixed += g.cells(row, turns) ? 1 : 0;
        }
    }
    for (auto& [level, gain] : out)
        if (gain.initially_wrong > 0)
            gain.ratio = static_cast<double>(gain.fixed) / static_cast<double>(gain.initially_wrong);
    return out;
}

std::string confusion_csv(const ConfusionMatrix& m, const std::string& teacher_id) {
    std::string out = "teacher_id,turn,teacher,student,count\n";
    const auto row = [&](const char* teacher, const char* student, std::int64_t count) {
        out += teacher_id + "," + std::to_string(m.turn) + "," + teacher + "," + student + "," + std::to_string(count) + "\n";
    };
    row("correct", "correct", m.teacher_correct_student_correct);
    row("correct", "wrong", m.teacher_correct_student_wrong);
    row("wrong", "correct", m.teacher_wrong_student_correct);
    row("wrong", "wrong", m.teacher_wrong_student_wrong);
    return out;
}

std::string leave_one_out_csv(std::span<const SubsetRow> rows) {
    std::string out = "left_out,teacher_id,ca,kendall_tau_b,spearman_avg_rank\n";
    for (const auto& r : rows)
        for (const auto& [teacher, ca] : r.ca)
            out += r.left_out + "," + teacher + "," + number(ca) + "," + (r.tau ? number(*r.tau) : "") + "," +
                   (r.rho ? number(*r.rho) : "") + "\n";
    return out;
}

std::string turn_sweep_csv(const std::map<std::string, std::vector<double>>& sweeps) {
    std::string out = "teacher_id,turn,ca\n";
    for (const auto& [teacher, values] : sweeps)
        for (std::size_t t = 0; t < values.size(); ++t)
            out += teacher + "," + std::to_string(t + 1) + "," + number(values[t]) + "\n";
    return out;
}

std::string difficulty_profile_csv(const std::map<std::string, std::map<int, LevelGain>>& profiles) {
    std::string out = "teacher_id,level,initially_wrong,fixed,ratio\n";
    for (const auto& [teacher, levels] : profiles)
        for (const auto& [level, gain] : levels)
            out += teacher + "," + std::to_string(level) + "," + std::to_string(gain.initially_wrong) + "," +
                   std::to_string(gain.fixed) + "," + (gain.ratio ? number(*gain.ratio) : "NA") + "\n";
    return out;
}

}  // namespace guidebench::analysis

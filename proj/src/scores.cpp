#include "guidebench/scores.hpp"

#include "guidebench/errors.hpp"
#include "guidebench/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace guidebench {

using nlohmann::json;

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

template <class F>
double guarded(F&& f, std::vector<std::string>& flags, const std::string& label) {
    try {
        return f();
    } catch (const Error& e) {
        flags.push_back(label + ": " + e.what());
        return kUndefined;
    }
}

AbilityRecord score_slice(std::span<const CorrectnessGrid> grids, std::span<const DialogueTranscript> transcripts,
                          const CorrectnessRow& direct_row, int turns, ReflectionDomain domain,
                          std::vector<std::string>& flags, const std::string& label) {
    AbilityRecord r;
    r.ca = guarded([&] { return metrics::comprehensive_ability(grids, turns); }, flags, label + " CA");
    r.aa = guarded([&] { return metrics::application_ability(direct_row); }, flags, label + " AA");
    r.ja = guarded([&] { return metrics::judgment_ability(transcripts); }, flags, label + " JA");
    r.ga = guarded(
        [&] {
            const auto ga = metrics::guidance_ability(grids);
            for (std::size_t s : ga.empty_denominator)
                flags.push_back(label + " GA: student " + grids[s].student_id +
                                " has no initially-wrong question (contributes 0)");
            return ga.value;
        },
        flags, label + " GA");
    r.ra = guarded([&] { return metrics::reflection_ability(grids, turns, domain); }, flags, label + " RA");
    return r;
}

}  // namespace

CorrectnessGrid slice_rows(const CorrectnessGrid& grid, std::span<const Eigen::Index> rows) {
    CorrectnessGrid out;
    out.student_id = grid.student_id;
    out.cells.resize(static_cast<Eigen::Index>(rows.size()), grid.cells.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.cells.row(static_cast<Eigen::Index>(i)) = grid.cells.row(rows[i]);
    return out;
}

AbilityScores score_teacher(std::span<const McqQuestion> questions, const TeacherResults& results, int turns,
                            ReflectionDomain domain) {
    AbilityScores scores;
    scores.teacher_id = results.teacher_id;
    if (results.direct_row.size() != static_cast<Eigen::Index>(questions.size()))
        throw Error(ErrorKind::MismatchedGrids, "direct-answer row does not cover the question set");

    scores.overall =
        score_slice(results.grids, results.transcripts, results.direct_row, turns, domain, scores.flags, "overall");

    for (int t = 1; t <= turns; ++t) {
        scores.per_turn_delta.push_back(guarded(
            [&] {
                double sum = 0;
                for (const auto& g : results.grids) sum += metrics::delta_p(g, t);
                if (results.grids.empty()) throw Error(ErrorKind::MismatchedGrids, "no student grids");
                return sum / static_cast<double>(results.grids.size());
            },
            scores.flags, "delta P_" + std::to_string(t)));
    }

    for (Category c : kAllCategories) {
        std::vector<Eigen::Index> rows;
        std::set<std::string> ids;
        for (std::size_t i = 0; i < questions.size(); ++i)
            if (questions[i].category == c) {
                rows.push_back(static_cast<Eigen::Index>(i));
                ids.insert(questions[i].id);
            }
        if (rows.empty()) continue;
        std::vector<CorrectnessGrid> grids;
        for (const auto& g : results.grids) grids.push_back(slice_rows(g, rows));
        std::vector<DialogueTranscript> transcripts;
        for (const auto& t : results.transcripts)
            if (ids.count(t.question_id)) transcripts.push_back(t);
        CorrectnessRow direct(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) direct(static_cast<Eigen::Index>(i)) = results.direct_row(rows[i]);
        scores.per_category[c] =
            score_slice(grids, transcripts, direct, turns, domain, scores.flags, std::string(to_string(c)));
    }
    return scores;
}

std::string format_pp(double fraction) {
    if (std::isnan(fraction)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

namespace {

json fraction_json(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json record_json(const std::string& teacher, const std::string& slice, const AbilityRecord& r) {
    json j{{"teacher_id", teacher}, {"category", slice}};
    const std::pair<const char*, double> fields[] = {{"ca", r.ca}, {"aa", r.aa}, {"ja", r.ja}, {"ga", r.ga}, {"ra", r.ra}};
    for (const auto& [name, value] : fields) {
        j[name] = fraction_json(value);
        j[std::string(name) + "_pp"] = std::isnan(value) ? json(nullptr) : json(std::stod(format_pp(value)));
    }
    return j;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

std::vector<json> flat_records(const AbilityScores& scores) {
    std::vector<json> out;
    out.push_back(record_json(scores.teacher_id, "Overall", scores.overall));
    for (const auto& [c, r] : scores.per_category) out.push_back(record_json(scores.teacher_id, std::string(to_string(c)), r));
    return out;
}

std::string scores_csv(std::span<const AbilityScores> scores) {
    std::string out = "teacher_id,category,ca,aa,ja,ga,ra,ca_pp,aa_pp,ja_pp,ga_pp,ra_pp\n";
    auto row = [&](const std::string& teacher, const std::string& slice, const AbilityRecord& r) {
        out += teacher + "," + slice;
        for (double v : {r.ca, r.aa, r.ja, r.ga, r.ra}) out += "," + csv_number(v);
        for (double v : {r.ca, r.aa, r.ja, r.ga, r.ra}) out += "," + (std::isnan(v) ? std::string() : format_pp(v));
        out += "\n";
    };
    for (const auto& s : scores) {
        row(s.teacher_id, "Overall", s.overall);
        for (const auto& [c, r] : s.per_category) row(s.teacher_id, std::string(to_string(c)), r);
    }
    return out;
}

std::string per_turn_csv(std::span<const AbilityScores> scores) {
    std::string out = "teacher_id,turn,delta_p,cumulative\n";
    for (const auto& s : scores) {
        double cumulative = 0;
        for (std::size_t t = 0; t < s.per_turn_delta.size(); ++t) {
            cumulative += s.per_turn_delta[t];
            out += s.teacher_id + "," + std::to_string(t + 1) + "," + csv_number(s.per_turn_delta[t]) + "," +
                   csv_number(cumulative) + "\n";
        }
    }
    return out;
}

std::string format_table_row(const std::string& name, const AbilityScores& scores) {
    std::string out = name;
    const auto& o = scores.overall;
    for (double v : {o.ca, o.aa, o.ja, o.ga, o.ra}) out += " | " + format_pp(v);
    for (Category c : kAllCategories) {
        const auto it = scores.per_category.find(c);
        out += " | " + (it == scores.per_category.end() ? std::string("NA") : format_pp(it->second.ca));
    }
    return out;
}

std::string format_table(std::span<const AbilityScores> scores) {
    std::string out =
        "Model | Comprehensive | Application | Judgment | Guidance | Reflection | Knowledge | Reasoning | "
        "Understanding | Multilingual\n";
    for (const auto& s : scores) out += format_table_row(s.teacher_id, s) + "\n";
    return out;
}

}  // namespace guidebench

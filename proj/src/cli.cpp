#include "guidebench/cli.hpp"

#include "guidebench/analysis.hpp"
#include "guidebench/config.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/evaluation.hpp"
#include "guidebench/forge.hpp"
#include "guidebench/jsonl.hpp"
#include "guidebench/metrics.hpp"
#include "guidebench/scores.hpp"
#include "guidebench/synthetic.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace guidebench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string storage_root;
    std::string run_id;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = true) {
    auto* opt = cmd->add_option("-c,--config", a.config_path, "Configuration file");
    if (config_required) opt->required();
    cmd->add_option("--set", a.sets, "Override a configuration key (key=value)");
    cmd->add_option("--storage-root", a.storage_root, "Storage root (overrides GUIDEBENCH_ROOT and the config)");
    cmd->add_option("--run-id", a.run_id, "Run identifier");
}

Overrides overrides_of(const CommonArgs& a) {
    Overrides o;
    for (const auto& kv : a.sets) o.push_back(parse_override(kv));
    if (!a.storage_root.empty()) {
        o.emplace_back("storage_root", fs::absolute(a.storage_root).string());
    } else if (const char* env = std::getenv("GUIDEBENCH_ROOT"); env && *env) {
        o.emplace_back("storage_root", fs::absolute(env).string());
    }
    if (!a.run_id.empty()) o.emplace_back("run_id", a.run_id);
    return o;
}

PromptTemplateSet templates_of(const CliConfig& cfg) {
    auto tpl = cfg.templates_dir.empty() ? PromptTemplateSet::defaults() : PromptTemplateSet::load(cfg.templates_dir);
    validate(tpl);
    return tpl;
}

GatewayOptions gateway_options(const CliConfig& cfg) {
    GatewayOptions o;
    o.cache_dir = cfg.cache_dir.empty() ? cfg.storage_root / "cache" : cfg.cache_dir;
    o.max_inflight_requests = cfg.run.max_inflight_requests;
    o.retry.retry_budget = cfg.run.retry_budget;
    o.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.run.request_timeout_s * 1000.0));
    o.jitter_seed = cfg.run.rng_seed;
    return o;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorKind::StorageFailure, "cannot write " + path.string());
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::StorageFailure:
        case ErrorKind::ManifestCorrupt:
            return kExitStorage;
        case ErrorKind::IncompleteRun:
        case ErrorKind::DialogueFailed:
        case ErrorKind::EndpointUnreachable:
        case ErrorKind::MalformedResponse:
        case ErrorKind::RequestRejected:
        case ErrorKind::ScriptMiss:
            return kExitPartial;
        default:
            return kExitConfig;
    }
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

std::string number(double v) {
    if (std::isnan(v)) return "NA";
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------------------

struct BuildArgs {
    CommonArgs common;
    std::string input;
    std::string output_dir;
    bool no_difficulty = false;
};

int cmd_build_dataset(const BuildArgs& a, std::ostream& out, std::ostream& err) {
    const CliConfig cfg = load_config(a.common.config_path, overrides_of(a.common));
    const auto fcfg = forge_config(cfg);
    const auto tpl = templates_of(cfg);
    const auto items = read_jsonl<forge::RawQaItem>(a.input);
    if (items.empty()) {
        report_error(err, "EmptyDataset", "corpus " + a.input + " has no items");
        return kExitPartial;
    }
    forge::GraderLadder ladder{resolve_models(cfg, cfg.graders)};
    const bool grade = !a.no_difficulty && !ladder.graders.empty();

    Gateway gateway(gateway_options(cfg));
    const auto result = forge::forge_dataset(gateway, items, fcfg, grade ? &ladder : nullptr, tpl,
                                             static_cast<unsigned>(cfg.run.max_inflight_requests));

    const fs::path dir(a.output_dir);
    fs::create_directories(dir);
    write_jsonl(dir / "questions.jsonl", result.questions);
    write_jsonl(dir / "rejections.jsonl", result.rejections);
    json manifest = result.manifest;
    manifest["config"] = snapshot(cfg);
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    out << "accepted " << result.questions.size() << ", rejected " << result.rejections.size() << "\n";
    if (result.questions.empty()) {
        report_error(err, "EmptyDataset", "no item survived the pipeline; see rejections.jsonl");
        return kExitPartial;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    CommonArgs common;
    std::string dataset;
    std::vector<std::string> teachers;
    std::size_t stop_after = 0;
};

int cmd_run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    Overrides o = overrides_of(a.common);
    if (!a.teachers.empty()) {
        std::string joined;
        for (const auto& t : a.teachers) joined += (joined.empty() ? "" : ",") + t;
        o.emplace_back("teachers", joined);
    }
    const CliConfig cfg = load_config(a.common.config_path, o);

    EvalPlan plan;
    plan.run_id = cfg.run_id;
    plan.config = cfg.run;
    plan.config_snapshot = snapshot(cfg);
    plan.teachers = resolve_models(cfg, cfg.teachers);
    plan.students = resolve_models(cfg, cfg.students);
    plan.templates = templates_of(cfg);
    plan.questions = read_jsonl<McqQuestion>(a.dataset);

    auto store = prepare_run(cfg.storage_root, plan);
    Gateway gateway(gateway_options(cfg));
    EvalOptions opts;
    opts.workers = static_cast<unsigned>(cfg.run.max_inflight_requests);
    if (a.stop_after > 0) opts.stop_after = a.stop_after;
    const auto outcome = run_evaluation(gateway, *store, plan, opts);

    out << "run " << plan.run_id << ": executed " << outcome.executed << ", failed " << outcome.failed
        << ", remaining " << outcome.remaining << "\n";
    if (!outcome.complete()) {
        for (const auto& f : outcome.failures) report_error(err, "UnitFailed", f);
        report_error(err, "PartialRun",
                     std::to_string(outcome.remaining) + " units remain; resume with the same command: run-eval --config " +
                         a.common.config_path + " --dataset " + a.dataset + " --run-id " + plan.run_id);
        return kExitPartial;
    }
    write_exports(*store, load_results(*store, plan.questions));
    out << "outputs in " << store->dir().string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
    CommonArgs common;
    bool allow_partial = false;
};

std::vector<AbilityScores> emit_metrics(const CliConfig& cfg, const RunStore& store, bool allow_partial,
                                        std::ostream& out) {
    const auto questions = load_run_dataset(store);
    const auto loaded = load_results(store, questions, allow_partial);
    const int turns = store.manifest().config.contains("effective_run_config")
                          ? store.manifest().config["effective_run_config"].at("turns_T").get<int>()
                          : cfg.run.turns;
    std::vector<AbilityScores> scores;
    for (const auto& lt : loaded) {
        if (lt.questions.empty()) {
            AbilityScores s;
            s.teacher_id = lt.results.teacher_id;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            s.overall = {nan, nan, nan, nan, nan};
            s.flags.push_back("no completed questions");
            scores.push_back(std::move(s));
            continue;
        }
        scores.push_back(score_teacher(lt.questions, lt.results, turns, cfg.run.reflection_domain));
    }

    const fs::path reports = store.reports_dir();
    fs::create_directories(reports);
    std::vector<json> records;
    for (const auto& s : scores)
        for (auto& r : flat_records(s)) records.push_back(std::move(r));
    write_jsonl(reports / "scores.jsonl", records);
    write_text(reports / "scores.csv", scores_csv(scores));
    write_text(reports / "per_turn.csv", per_turn_csv(scores));
    write_text(reports / "table.txt", format_table(scores));
    json flags = json::object();
    for (const auto& s : scores) flags[s.teacher_id] = s.flags;
    write_text(reports / "flags.json", flags.dump(2) + "\n");

    out << format_table(scores);
    for (const auto& s : scores)
        for (const auto& f : s.flags) out << "note: " << s.teacher_id << ": " << f << "\n";
    return scores;
}

int cmd_metrics(const MetricsArgs& a, std::ostream& out, std::ostream&) {
    const CliConfig cfg = load_config(a.common.config_path, overrides_of(a.common));
    const auto store = RunStore::open(cfg.storage_root, cfg.run_id);
    emit_metrics(cfg, *store, a.allow_partial, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string params;
    std::string output_dir;
    unsigned threads = 1;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
    std::ifstream in(a.params);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read params " + a.params);
    json p;
    try {
        p = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("params: ") + e.what());
    }
    synthetic::TeacherParams teacher;
    std::vector<synthetic::StudentParams> students;
    int n_questions = 0;
    int turns = 3;
    std::uint64_t seed = 0;
    try {
        teacher = p.at("teacher").get<synthetic::TeacherParams>();
        if (p.contains("students")) {
            students = p.at("students").get<std::vector<synthetic::StudentParams>>();
        } else {
            const auto one = p.value("student", json::object()).get<synthetic::StudentParams>();
            students.assign(static_cast<std::size_t>(p.value("n_students", 1)), one);
        }
        n_questions = p.at("n_questions").get<int>();
        turns = p.value("turns", 3);
        seed = p.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("params: ") + e.what());
    }

    synthetic::SimulationOptions opts;
    opts.threads = a.threads;
    opts.emit_transcripts = !a.output_dir.empty() && p.value("emit_transcripts", false);
    const auto pop = synthetic::simulate_population(students, teacher, n_questions, turns, seed, opts);
    const std::span<const CorrectnessGrid> grids(pop.grids);

    json metrics_json;
    metrics_json["ca"] = metrics::comprehensive_ability(grids, turns);
    metrics_json["ja"] = metrics::judgment_ability(std::span<const metrics::StudentJudgments>(pop.judgments));
    metrics_json["ga"] = metrics::guidance_ability(grids).value;
    if (turns >= 2) {
        try {
            metrics_json["ra"] = metrics::reflection_ability(grids, turns);
        } catch (const Error& e) {
            metrics_json["ra"] = nullptr;
            metrics_json["ra_note"] = e.what();
        }
    }
    json deltas = json::array();
    for (int t = 1; t <= turns; ++t) {
        double sum = 0;
        for (const auto& g : pop.grids) sum += metrics::delta_p(g, t);
        deltas.push_back(sum / static_cast<double>(pop.grids.size()));
    }
    metrics_json["delta_p"] = deltas;

    json summary{{"params", p}, {"metrics", metrics_json}};
    if (turns >= 2) summary["decomposition"] = synthetic::decomposition_report(pop, teacher, turns);
    else summary["decomposition"] = {{"applicable", false}, {"note", "decomposition needs at least two turns"}};

    if (!a.output_dir.empty()) {
        const fs::path dir(a.output_dir);
        fs::create_directories(dir);
        write_text(dir / "simulation.json", summary.dump(2) + "\n");
        std::vector<json> grid_lines;
        for (const auto& g : pop.grids) grid_lines.push_back({{"teacher_id", pop.teacher_id}, {"grid", g}});
        write_jsonl(dir / "grids.jsonl", grid_lines);
        if (opts.emit_transcripts) write_jsonl(dir / "transcripts.jsonl", pop.transcripts);
    }
    out << summary.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    CommonArgs common;
    std::string mode = "all";
    std::string ranks;
    bool allow_partial = false;
};

int run_analyses(const CliConfig& cfg, const RunStore& store, const AnalyzeArgs& a, std::ostream& out) {
    const auto questions = load_run_dataset(store);
    const auto loaded = load_results(store, questions, a.allow_partial);
    const int turns = cfg.run.turns;
    const fs::path reports = store.reports_dir();
    fs::create_directories(reports);
    const bool all = a.mode == "all";
    std::optional<analysis::RankList> external;
    if (!a.ranks.empty()) external = analysis::load_rank_list(a.ranks);

    if (a.mode == "correlation" || (all && external)) {
        if (!external) throw Error(ErrorKind::ConfigError, "correlation mode needs --ranks");
        analysis::RankList ca_list;
        analysis::RankList aa_list;
        for (const auto& lt : loaded) {
            const auto grids = std::span<const CorrectnessGrid>(lt.results.grids);
            ca_list.entries.push_back({lt.results.teacher_id, metrics::comprehensive_ability(grids, turns)});
            aa_list.entries.push_back({lt.results.teacher_id, metrics::application_ability(lt.results.direct_row)});
        }
        std::string csv = "measure,n,kendall_tau_b,spearman_avg_rank\n";
        for (const auto& [name, list] : {std::pair{"ca", &ca_list}, std::pair{"aa", &aa_list}}) {
            const double tau = analysis::kendall_tau(*list, *external);
            const double rho = analysis::spearman(*list, *external);
            csv += std::string(name) + "," + std::to_string(list->entries.size()) + "," + number(tau) + "," +
                   number(rho) + "\n";
            out << name << ": kendall_tau_b " << number(tau) << ", spearman " << number(rho) << "\n";
        }
        write_text(reports / "correlation.csv", csv);
    }
    if (a.mode == "confusion" || all) {
        std::string csv;
        for (const auto& lt : loaded)
            for (int t : {0, turns}) {
                const auto m = analysis::confusion_matrix(lt.results.grids, lt.results.direct_row, t);
                std::string part = analysis::confusion_csv(m, lt.results.teacher_id);
                csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
            }
        write_text(reports / "confusion.csv", csv);
        out << "confusion matrices written\n";
    }
    if (a.mode == "leave-one-out" || all) {
        analysis::TeacherGrids tg;
        for (const auto& lt : loaded) tg[lt.results.teacher_id] = lt.results.grids;
        if (tg.begin()->second.size() >= 2) {
            const auto rows = analysis::leave_one_student_out(tg, external ? &*external : nullptr);
            write_text(reports / "leave_one_out.csv", analysis::leave_one_out_csv(rows));
            out << "leave-one-out: " << rows.size() << " subsets\n";
        } else if (!all) {
            throw Error(ErrorKind::ConfigError, "leave-one-out needs at least two students");
        }
    }
    if (a.mode == "turn-sweep" || all) {
        std::map<std::string, std::vector<double>> sweeps;
        for (const auto& lt : loaded) sweeps[lt.results.teacher_id] = analysis::turn_sweep(lt.results.grids, turns);
        write_text(reports / "turn_sweep.csv", analysis::turn_sweep_csv(sweeps));
        out << "turn sweep written\n";
    }
    if (a.mode == "difficulty" || all) {
        try {
            std::map<std::string, std::map<int, analysis::LevelGain>> profiles;
            for (const auto& lt : loaded)
                profiles[lt.results.teacher_id] = analysis::difficulty_gain_profile(lt.results.grids, lt.questions, turns);
            write_text(reports / "difficulty_profile.csv", analysis::difficulty_profile_csv(profiles));
            out << "difficulty profile written\n";
        } catch (const Error& e) {
            if (!all || e.kind() != ErrorKind::MissingDifficulty) throw;
            out << "note: difficulty profile skipped: " << e.what() << "\n";
        }
    }
    static const std::set<std::string> modes = {"all", "correlation", "confusion", "leave-one-out", "turn-sweep",
                                                "difficulty"};
    if (!modes.count(a.mode)) throw Error(ErrorKind::ConfigError, "unknown analysis mode " + a.mode);
    return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream&) {
    const CliConfig cfg = load_config(a.common.config_path, overrides_of(a.common));
    const auto store = RunStore::open(cfg.storage_root, cfg.run_id);
    return run_analyses(cfg, *store, a, out);
}

int cmd_report(const AnalyzeArgs& a, std::ostream& out, std::ostream&) {
    const CliConfig cfg = load_config(a.common.config_path, overrides_of(a.common));
    const auto store = RunStore::open(cfg.storage_root, cfg.run_id);
    std::map<std::string, int> counts{{"pending", 0}, {"complete", 0}, {"failed", 0}};
    for (const auto& [unit, status] : store->status_map()) ++counts[std::string(to_string(status))];
    const json status{{"run_id", cfg.run_id}, {"units", store->manifest().units.size()}, {"status", counts}};
    fs::create_directories(store->reports_dir());
    write_text(store->reports_dir() / "status.json", status.dump(2) + "\n");
    out << "run " << cfg.run_id << ": " << counts["complete"] << " complete, " << counts["failed"] << " failed, "
        << counts["pending"] << " pending\n";
    emit_metrics(cfg, *store, a.allow_partial, out);
    return run_analyses(cfg, *store, a, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Indirect evaluation of language models through guided dialogue with weak students", "guidebench"};
    app.require_subcommand(1);

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build-dataset", "Build a multiple-choice dataset from open-ended QA pairs");
    add_common(build_cmd, build.common);
    build_cmd->add_option("-i,--input", build.input, "Line-delimited raw QA corpus")->required();
    build_cmd->add_option("-o,--output-dir", build.output_dir, "Output directory")->required();
    build_cmd->add_flag("--no-difficulty", build.no_difficulty, "Skip the grader ladder");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("run-eval", "Run (or resume) an evaluation");
    add_common(eval_cmd, eval.common);
    eval_cmd->add_option("-d,--dataset", eval.dataset, "Line-delimited questions")->required();
    eval_cmd->add_option("--teachers", eval.teachers, "Teacher ids (default: config)")->delimiter(',');
    eval_cmd->add_option("--stop-after", eval.stop_after)->group("");

    MetricsArgs met;
    auto* met_cmd = app.add_subcommand("metrics", "Compute ability scores for a run");
    add_common(met_cmd, met.common);
    met_cmd->add_flag("--allow-partial", met.allow_partial, "Score completed units of an unfinished run");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate synthetic agents and check the gain decomposition");
    sim_cmd->add_option("-p,--params", sim.params, "JSON parameter file")->required();
    sim_cmd->add_option("-o,--output-dir", sim.output_dir, "Write simulation outputs here");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads")->check(CLI::PositiveNumber);

    AnalyzeArgs ana;
    auto* ana_cmd = app.add_subcommand("analyze", "Correlation, confusion, ablation, sweep and difficulty reports");
    add_common(ana_cmd, ana.common);
    ana_cmd->add_option("-m,--mode", ana.mode, "all|correlation|confusion|leave-one-out|turn-sweep|difficulty");
    ana_cmd->add_option("-r,--ranks", ana.ranks, "External ranking CSV (model_id,score)");
    ana_cmd->add_flag("--allow-partial", ana.allow_partial, "Analyze completed units of an unfinished run");

    AnalyzeArgs rep;
    auto* rep_cmd = app.add_subcommand("report", "Run status, scores and every applicable analysis");
    add_common(rep_cmd, rep.common);
    rep_cmd->add_option("-r,--ranks", rep.ranks, "External ranking CSV (model_id,score)");
    rep_cmd->add_flag("--allow-partial", rep.allow_partial, "Report on an unfinished run");

    std::vector<const char*> argv{"guidebench"};
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        report_error(err, "UsageError", e.what());
        return kExitConfig;
    }

    try {
        if (*build_cmd) return cmd_build_dataset(build, out, err);
        if (*eval_cmd) return cmd_run_eval(eval, out, err);
        if (*met_cmd) return cmd_metrics(met, out, err);
        if (*sim_cmd) return cmd_simulate(sim, out, err);
        if (*ana_cmd) return cmd_analyze(ana, out, err);
        if (*rep_cmd) return cmd_report(rep, out, err);
    } catch (const Error& e) {
        report_error(err, std::string(to_string(e.kind())), e.what());
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        report_error(err, "StorageFailure", e.what());
        return kExitStorage;
    } catch (const std::exception& e) {
        report_error(err, "InternalError", e.what());
        return kExitPartial;
    }
    return kExitConfig;
}

}  // namespace guidebench

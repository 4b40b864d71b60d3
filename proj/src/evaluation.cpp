#include "guidebench/evaluation.hpp"

#include "guidebench/errors.hpp"
#include "guidebench/jsonl.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace guidebench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kDataset = "dataset.jsonl";

std::string dataset_text(const std::vector<McqQuestion>& questions) {
    std::string out;
    for (const auto& q : questions) out += json(q).dump() + "\n";
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw Error(ErrorKind::StorageFailure, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::StorageFailure, "rename " + tmp.string() + ": " + ec.message());
}

const ModelSpec& find_model(const std::vector<ModelSpec>& models, const std::string& id) {
    for (const auto& m : models)
        if (m.model_id == id) return m;
    throw Error(ErrorKind::ConfigError, "model " + id + " is not part of this run");
}

}  // namespace

RunManifest make_manifest(const EvalPlan& plan) {
    RunManifest m;
    m.run_id = plan.run_id;
    m.config = plan.config_snapshot;
    for (const auto& t : plan.teachers) m.teachers.push_back(t.model_id);
    for (const auto& s : plan.students) m.students.push_back(s.model_id);
    m.dataset_digest = dataset_digest(plan.questions);
    for (const auto& t : plan.teachers)
        for (const auto& q : plan.questions) m.units.push_back({UnitKind::Direct, t.model_id, "", q.id});
    for (const auto& t : plan.teachers)
        for (const auto& s : plan.students)
            for (const auto& q : plan.questions) m.units.push_back({UnitKind::Dialogue, t.model_id, s.model_id, q.id});
    return m;
}

std::unique_ptr<RunStore> prepare_run(const fs::path& storage_root, const EvalPlan& plan) {
    validate(plan.config);
    validate(plan.templates);
    if (plan.questions.empty()) throw Error(ErrorKind::EmptyDataset, "dataset has no questions");
    if (plan.teachers.empty() || plan.students.empty())
        throw Error(ErrorKind::ConfigError, "a run needs at least one teacher and one student");
    std::set<std::string> ids;
    for (const auto& q : plan.questions) {
        const auto violations = validate_question(q);
        if (!violations.empty()) throw Error(ErrorKind::InvalidQuestion, q.id + ": " + violations.front());
        if (!ids.insert(q.id).second) throw Error(ErrorKind::InvalidQuestion, "duplicate question id " + q.id);
    }
    auto store = RunStore::create(storage_root, make_manifest(plan));
    const fs::path copy = store->dir() / kDataset;
    if (!fs::exists(copy)) write_file(copy, dataset_text(plan.questions));
    load_run_dataset(*store);
    return store;
}

std::vector<McqQuestion> load_run_dataset(const RunStore& store) {
    const fs::path copy = store.dir() / kDataset;
    if (!fs::exists(copy)) throw Error(ErrorKind::ManifestCorrupt, "run has no dataset copy at " + copy.string());
    auto questions = read_jsonl<McqQuestion>(copy);
    if (dataset_digest(questions) != store.manifest().dataset_digest)
        throw Error(ErrorKind::ManifestCorrupt, "dataset copy does not match the manifest digest");
    return questions;
}

EvalOutcome run_evaluation(Gateway& gateway, RunStore& store, const EvalPlan& plan, const EvalOptions& options) {
    std::map<std::string, const McqQuestion*> by_id;
    for (const auto& q : plan.questions) by_id[q.id] = &q;
    const auto todo = store.resume_plan();

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> executed{0};
    std::mutex failures_mutex;
    EvalOutcome outcome;

    auto run_unit = [&](const UnitKey& unit) {
        const McqQuestion& q = *by_id.at(unit.question_id);
        const ModelSpec& teacher = find_model(plan.teachers, unit.teacher_id);
        if (unit.kind == UnitKind::Direct) {
            DirectRecord r{unit.teacher_id, unit.question_id,
                           direct_answer(gateway, teacher, q, plan.config.teacher_decoding, plan.templates)};
            store.append_direct(r);
        } else {
            const ModelSpec& student = find_model(plan.students, unit.student_id);
            store.append_transcript(run_dialogue(gateway, teacher, student, q, plan.config, plan.templates));
        }
    };

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next++;
            if (options.stop_after && i >= *options.stop_after) return;
            if (i >= todo.size()) return;
            try {
                run_unit(todo[i]);
                ++executed;
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::StorageFailure) throw;
                store.record_failure(todo[i], e.what());
                std::lock_guard lock(failures_mutex);
                outcome.failures.push_back(to_string(todo[i]) + ": " + e.what());
            }
        }
    };

    const unsigned n_workers = std::max(1u, options.workers);
    std::vector<std::thread> pool;
    std::exception_ptr storage_error;
    std::mutex error_mutex;
    auto guarded = [&] {
        try {
            worker();
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!storage_error) storage_error = std::current_exception();
            next = todo.size();
        }
    };
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(guarded);
    guarded();
    for (auto& t : pool) t.join();
    if (storage_error) std::rethrow_exception(storage_error);

    std::sort(outcome.failures.begin(), outcome.failures.end());
    outcome.executed = executed.load();
    outcome.failed = outcome.failures.size();
    outcome.remaining = store.resume_plan().size();
    return outcome;
}

std::vector<LoadedTeacher> load_results(const RunStore& store, const std::vector<McqQuestion>& questions,
                                        bool allow_partial) {
    const auto& manifest = store.manifest();
    if (!allow_partial && !store.complete())
        throw Error(ErrorKind::IncompleteRun, std::to_string(store.resume_plan().size()) + " units of run " +
                                                  manifest.run_id + " are not complete");

    std::map<std::pair<std::string, std::string>, std::map<std::string, DialogueTranscript>> dialogues;
    for (auto& t : store.transcripts()) dialogues[{t.teacher_id, t.student_id}][t.question_id] = std::move(t);
    std::map<std::string, std::map<std::string, StudentAnswer>> direct;
    for (auto& r : store.direct_records()) direct[r.teacher_id][r.question_id] = std::move(r.answer);

    std::vector<LoadedTeacher> out;
    for (const auto& teacher : manifest.teachers) {
        LoadedTeacher lt;
        lt.results.teacher_id = teacher;
        for (const auto& q : questions) {
            bool covered = direct[teacher].count(q.id) > 0;
            for (const auto& s : manifest.students) covered = covered && dialogues[{teacher, s}].count(q.id) > 0;
            if (covered) lt.questions.push_back(q);
        }
        const auto n = static_cast<Eigen::Index>(lt.questions.size());
        lt.results.direct_row.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) lt.results.direct_row(i) = direct[teacher].at(lt.questions[i].id).is_correct;
        for (const auto& s : manifest.students) {
            std::vector<DialogueTranscript> mine;
            for (const auto& q : lt.questions) mine.push_back(dialogues[{teacher, s}].at(q.id));
            lt.results.grids.push_back(build_grid(s, lt.questions, mine));
            for (auto& t : mine) lt.results.transcripts.push_back(std::move(t));
        }
        out.push_back(std::move(lt));
    }
    return out;
}

void write_exports(const RunStore& store, const std::vector<LoadedTeacher>& loaded) {
    std::string grids;
    std::string rows;
    std::string transcripts;
    for (const auto& lt : loaded) {
        for (const auto& g : lt.results.grids) grids += json{{"teacher_id", lt.results.teacher_id}, {"grid", g}}.dump() + "\n";
        json correct = json::array();
        json ids = json::array();
        for (Eigen::Index i = 0; i < lt.results.direct_row.size(); ++i) {
            correct.push_back(static_cast<bool>(lt.results.direct_row(i)));
            ids.push_back(lt.questions[static_cast<std::size_t>(i)].id);
        }
        rows += json{{"teacher_id", lt.results.teacher_id}, {"question_ids", ids}, {"correct", correct}}.dump() + "\n";
        // results.transcripts is already grouped by student, then dataset order.
        for (const auto& t : lt.results.transcripts) transcripts += json(t).dump() + "\n";
    }
    write_file(store.dir() / "grids.jsonl", grids);
    write_file(store.dir() / "teacher_rows.jsonl", rows);
    write_file(store.dir() / "transcripts.final.jsonl", transcripts);
}

}  // namespace guidebench

#pragma once

// Executes a run: the zero-shot pass of every teacher, then every
// (teacher, student, question) dialogue, persisting each unit as it finishes.
// Re-running against the same store only executes units that are not complete.

#include "guidebench/dialogue.hpp"
#include "guidebench/domain.hpp"
#include "guidebench/model_gateway.hpp"
#include "guidebench/scores.hpp"
#include "guidebench/store.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace guidebench {

struct EvalPlan {
    std::string run_id;
    RunConfig config;
    nlohmann::json config_snapshot;  // effective configuration recorded in the manifest
    std::vector<ModelSpec> teachers;
    std::vector<ModelSpec> students;
    std::vector<McqQuestion> questions;
    PromptTemplateSet templates;
};

/// Direct units for every teacher first, then dialogue units in teacher, student, question order.
RunManifest make_manifest(const EvalPlan& plan);

/// Creates or reopens the run directory and stores a copy of the dataset beside the manifest.
/// Throws ManifestCorrupt when an existing run was made with different settings or data.
std::unique_ptr<RunStore> prepare_run(const std::filesystem::path& storage_root, const EvalPlan& plan);

/// Reads the dataset copy of a run, checking it against the manifest digest.
std::vector<McqQuestion> load_run_dataset(const RunStore& store);

struct EvalOptions {
    unsigned workers = 1;
    std::optional<std::size_t> stop_after;  // claim at most this many units (simulated interruption)
};

struct EvalOutcome {
    std::size_t executed = 0;
    std::size_t failed = 0;
    std::size_t remaining = 0;
    std::vector<std::string> failures;  // "unit: message"

    bool complete() const noexcept { return remaining == 0; }
};

EvalOutcome run_evaluation(Gateway& gateway, RunStore& store, const EvalPlan& plan, const EvalOptions& options = {});

struct LoadedTeacher {
    TeacherResults results;
    std::vector<McqQuestion> questions;  // the questions the results cover, dataset order
};

/// Assembles per-teacher results from the store. Without `allow_partial` every unit must be
/// complete (IncompleteRun otherwise); with it, each teacher is restricted to the questions
/// complete for its zero-shot pass and all of its students.
std::vector<LoadedTeacher> load_results(const RunStore& store, const std::vector<McqQuestion>& questions,
                                        bool allow_partial = false);

/// Writes canonical, order-independent exports: grids.jsonl, teacher_rows.jsonl and
/// transcripts.final.jsonl, all sorted by teacher, student and dataset position.
void write_exports(const RunStore& store, const std::vector<LoadedTeacher>& loaded);

}  // namespace guidebench

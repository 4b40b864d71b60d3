#pragma once

// Flat `key = value` configuration with `#` comments. Lists are comma separated.
// Relative paths resolve against the directory of the config file.
//
//   storage_root = runs
//   run_id = pilot
//   turns = 3
//   teachers = teacher-a
//   students = student-1, student-2
//   model.teacher-a.kind = remote
//   model.teacher-a.endpoint_url = https://host/v1/chat/completions
//   model.teacher-a.auth_token_env_var = TEACHER_A_TOKEN
//   model.student-1.kind = scripted
//   model.student-1.script_path = scripts/student-1.jsonl

#include "guidebench/domain.hpp"
#include "guidebench/forge.hpp"
#include "guidebench/model_gateway.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace guidebench {

struct CliConfig {
    std::filesystem::path base_dir;
    std::filesystem::path storage_root;
    std::string run_id = "run";
    RunConfig run;
    std::filesystem::path templates_dir;  // empty = built-in templates
    std::filesystem::path cache_dir;      // empty = <storage_root>/cache
    std::vector<std::string> teachers;
    std::vector<std::string> students;
    std::vector<std::string> graders;
    std::map<std::string, ModelSpec> models;

    std::vector<std::string> forge_distractor_models;
    std::string forge_rewriter;
    std::string forge_reviewer;
    int forge_max_attempts = 20;
    DecodingParams forge_sampling{0.7, 256, std::nullopt};
    std::uint64_t forge_rng_seed = 0;

    /// Effective key/value pairs after overrides, as recorded in run manifests.
    std::map<std::string, std::string> entries;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Throws ConfigError on unknown keys, malformed values or unresolvable model references.
CliConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, const Overrides& overrides = {});
CliConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// "key=value" -> pair; throws ConfigError without '='.
std::pair<std::string, std::string> parse_override(std::string_view kv);

const ModelSpec& resolve_model(const CliConfig& cfg, const std::string& id);
std::vector<ModelSpec> resolve_models(const CliConfig& cfg, const std::vector<std::string>& ids);

forge::ForgeConfig forge_config(const CliConfig& cfg);
nlohmann::json snapshot(const CliConfig& cfg);

}  // namespace guidebench

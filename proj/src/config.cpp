#include "guidebench/config.hpp"

#include "guidebench/errors.hpp"
#include "guidebench/text.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace guidebench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string>& plain_keys() {
    static const std::set<std::string> keys = {
        "storage_root",        "run_id",           "turns",
        "max_inflight_requests", "rng_seed",       "retry_budget",
        "request_timeout_s",   "reflection_domain", "templates_dir",
        "cache_dir",           "teachers",         "students",
        "graders",             "student.temperature", "student.max_tokens",
        "student.seed",        "teacher.temperature", "teacher.max_tokens",
        "teacher.seed",        "forge.distractor_models", "forge.rewriter",
        "forge.reviewer",      "forge.max_attempts", "forge.temperature",
        "forge.max_tokens",    "forge.rng_seed"};
    return keys;
}

const std::set<std::string>& model_fields() {
    static const std::set<std::string> fields = {"kind", "endpoint_url", "auth_token_env_var", "script_path",
                                                 "remote_name"};
    return fields;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error(ErrorKind::ConfigError, key + ": expected " + expected + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value, "a number");
    return out;
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    for (const auto& item : text::split(value, ',')) {
        std::string trimmed(text::trim(item));
        if (!trimmed.empty()) out.push_back(std::move(trimmed));
    }
    return out;
}

fs::path resolve_path(const fs::path& base, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace

std::pair<std::string, std::string> parse_override(std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::ConfigError, "override '" + std::string(kv) + "' lacks '='");
    return {std::string(text::trim(kv.substr(0, eq))), std::string(text::trim(kv.substr(eq + 1)))};
}

CliConfig parse_config(std::string_view source, const fs::path& base_dir, const Overrides& overrides) {
    CliConfig cfg;
    cfg.base_dir = base_dir;
    int line_no = 0;
    for (const auto& raw : text::split(source, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(text::trim(line.substr(0, eq)));
        if (cfg.entries.count(key)) throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": duplicate key " + key);
        cfg.entries[key] = std::string(text::trim(line.substr(eq + 1)));
    }
    for (const auto& [k, v] : overrides) cfg.entries[k] = v;

    cfg.storage_root = base_dir / "runs";
    for (const auto& [key, value] : cfg.entries) {
        if (key.rfind("model.", 0) == 0) {
            const auto dot = key.rfind('.');
            const std::string id = key.substr(6, dot > 6 ? dot - 6 : 0);
            const std::string field = key.substr(dot + 1);
            if (dot <= 6 || id.empty() || !model_fields().count(field))
                throw Error(ErrorKind::ConfigError, "unknown key " + key);
            ModelSpec& m = cfg.models[id];
            m.model_id = id;
            if (field == "kind") {
                if (value == "remote")
                    m.kind = ModelKind::RemoteEndpoint;
                else if (value == "scripted")
                    m.kind = ModelKind::Scripted;
                else
                    bad_value(key, value, "remote or scripted");
            } else if (field == "endpoint_url") {
                m.endpoint_url = value;
            } else if (field == "auth_token_env_var") {
                m.auth_token_env_var = value;
            } else if (field == "script_path") {
                m.script_path = resolve_path(base_dir, value);
            } else {
                m.remote_name = value;
            }
            continue;
        }
        if (!plain_keys().count(key)) throw Error(ErrorKind::ConfigError, "unknown key " + key);
        if (key == "storage_root") cfg.storage_root = resolve_path(base_dir, value);
        else if (key == "run_id") cfg.run_id = value;
        else if (key == "turns") cfg.run.turns = parse_number<int>(key, value);
        else if (key == "max_inflight_requests") cfg.run.max_inflight_requests = parse_number<int>(key, value);
        else if (key == "rng_seed") cfg.run.rng_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "retry_budget") cfg.run.retry_budget = parse_number<int>(key, value);
        else if (key == "request_timeout_s") cfg.run.request_timeout_s = parse_number<double>(key, value);
        else if (key == "reflection_domain") {
            if (value == "all") cfg.run.reflection_domain = ReflectionDomain::AllQuestions;
            else if (value == "previously_correct") cfg.run.reflection_domain = ReflectionDomain::PreviouslyCorrect;
            else bad_value(key, value, "all or previously_correct");
        }
        else if (key == "templates_dir") cfg.templates_dir = resolve_path(base_dir, value);
        else if (key == "cache_dir") cfg.cache_dir = resolve_path(base_dir, value);
        else if (key == "teachers") cfg.teachers = parse_list(value);
        else if (key == "students") cfg.students = parse_list(value);
        else if (key == "graders") cfg.graders = parse_list(value);
        else if (key == "student.temperature") cfg.run.student_decoding.temperature = parse_number<double>(key, value);
        else if (key == "student.max_tokens") cfg.run.student_decoding.max_tokens = parse_number<int>(key, value);
        else if (key == "student.seed") cfg.run.student_decoding.seed = parse_number<std::int64_t>(key, value);
        else if (key == "teacher.temperature") cfg.run.teacher_decoding.temperature = parse_number<double>(key, value);
        else if (key == "teacher.max_tokens") cfg.run.teacher_decoding.max_tokens = parse_number<int>(key, value);
        else if (key == "teacher.seed") cfg.run.teacher_decoding.seed = parse_number<std::int64_t>(key, value);
        else if (key == "forge.distractor_models") cfg.forge_distractor_models = parse_list(value);
        else if (key == "forge.rewriter") cfg.forge_rewriter = value;
        else if (key == "forge.reviewer") cfg.forge_reviewer = value;
        else if (key == "forge.max_attempts") cfg.forge_max_attempts = parse_number<int>(key, value);
        else if (key == "forge.temperature") cfg.forge_sampling.temperature = parse_number<double>(key, value);
        else if (key == "forge.max_tokens") cfg.forge_sampling.max_tokens = parse_number<int>(key, value);
        else if (key == "forge.rng_seed") cfg.forge_rng_seed = parse_number<std::uint64_t>(key, value);
    }

    validate(cfg.run);
    for (const auto& [id, m] : cfg.models) {
        try {
            validate(m);
        } catch (const Error& e) {
            throw Error(ErrorKind::ConfigError, std::string("model ") + id + ": " + e.what());
        }
    }
    std::vector<std::string> referenced = cfg.teachers;
    for (const auto* list : {&cfg.students, &cfg.graders, &cfg.forge_distractor_models})
        referenced.insert(referenced.end(), list->begin(), list->end());
    for (const auto* single : {&cfg.forge_rewriter, &cfg.forge_reviewer})
        if (!single->empty()) referenced.push_back(*single);
    for (const auto& id : referenced) resolve_model(cfg, id);
    return cfg;
}

CliConfig load_config(const fs::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const fs::path base = fs::absolute(path).parent_path();
    return parse_config(ss.str(), base, overrides);
}

const ModelSpec& resolve_model(const CliConfig& cfg, const std::string& id) {
    const auto it = cfg.models.find(id);
    if (it == cfg.models.end()) throw Error(ErrorKind::ConfigError, "unknown model id " + id);
    return it->second;
}

std::vector<ModelSpec> resolve_models(const CliConfig& cfg, const std::vector<std::string>& ids) {
    std::vector<ModelSpec> out;
    for (const auto& id : ids) out.push_back(resolve_model(cfg, id));
    return out;
}

forge::ForgeConfig forge_config(const CliConfig& cfg) {
    if (cfg.forge_rewriter.empty() || cfg.forge_reviewer.empty())
        throw Error(ErrorKind::ConfigError, "forge.rewriter and forge.reviewer must be set");
    forge::ForgeConfig f;
    f.distractor_models = resolve_models(cfg, cfg.forge_distractor_models);
    f.sampling = cfg.forge_sampling;
    f.max_attempts = cfg.forge_max_attempts;
    f.rewriter = resolve_model(cfg, cfg.forge_rewriter);
    f.reviewer = resolve_model(cfg, cfg.forge_reviewer);
    f.rng_seed = cfg.forge_rng_seed;
    forge::validate(f);
    return f;
}

json snapshot(const CliConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.entries)
        if (k != "storage_root" && k != "cache_dir") j[k] = v;
    j["effective_run_config"] = cfg.run;
    return j;
}

}  // namespace guidebench

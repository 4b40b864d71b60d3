#include "guidebench/model_gateway.hpp"

#include "guidebench/digest.hpp"
#include "guidebench/text.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace guidebench {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

void validate(const ModelSpec& spec) {
    if (spec.model_id.empty()) throw Error(ErrorKind::InvalidModelSpec, "empty model_id");
    if (spec.kind == ModelKind::RemoteEndpoint && (!spec.endpoint_url || spec.endpoint_url->empty()))
        throw Error(ErrorKind::InvalidModelSpec, spec.model_id + ": remote endpoint requires endpoint_url");
    if (spec.kind == ModelKind::Scripted && (!spec.script_path || spec.script_path->empty()))
        throw Error(ErrorKind::InvalidModelSpec, spec.model_id + ": scripted model requires script_path");
}

void to_json(json& j, const ChatMessage& m) { j = json{{"role", to_string(m.role)}, {"content", m.content}}; }

void to_json(json& j, const ModelSpec& m) {
    j = json{{"model_id", m.model_id}, {"kind", m.kind == ModelKind::RemoteEndpoint ? "RemoteEndpoint" : "Scripted"}};
    j["endpoint_url"] = m.endpoint_url ? json(*m.endpoint_url) : json(nullptr);
    j["auth_token_env_var"] = m.auth_token_env_var ? json(*m.auth_token_env_var) : json(nullptr);
    j["script_path"] = m.script_path ? json(m.script_path->generic_string()) : json(nullptr);
    j["remote_name"] = m.remote_name ? json(*m.remote_name) : json(nullptr);
}

void from_json(const json& j, ModelSpec& m) {
    m.model_id = j.at("model_id").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "RemoteEndpoint")
        m.kind = ModelKind::RemoteEndpoint;
    else if (kind == "Scripted")
        m.kind = ModelKind::Scripted;
    else
        throw Error(ErrorKind::InvalidModelSpec, "unknown model kind '" + kind + "'");
    auto opt = [&](const char* key) -> std::optional<std::string> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) return std::nullopt;
        return it->get<std::string>();
    };
    m.endpoint_url = opt("endpoint_url");
    m.auth_token_env_var = opt("auth_token_env_var");
    if (auto p = opt("script_path")) m.script_path = fs::path(*p);
    m.remote_name = opt("remote_name");
}

std::string input_digest(std::span<const ChatMessage> messages) {
    json arr = json::array();
    for (const auto& m : messages) arr.push_back(m);
    return sha256_hex(arr.dump());
}

std::string cache_key(std::string_view model_id, std::span<const ChatMessage> messages,
                      const DecodingParams& params) {
    json arr = json::array();
    for (const auto& m : messages) arr.push_back(m);
    const json key{{"model_id", model_id}, {"messages", std::move(arr)}, {"params", params}};
    return sha256_hex(key.dump());
}

// ---------------------------------------------------------------------------
// HTTP transport

json build_chat_request(const ModelSpec& model, std::span<const ChatMessage> messages,
                        const DecodingParams& params) {
    json arr = json::array();
    for (const auto& m : messages) arr.push_back(m);
    json body{{"model", model.remote_name.value_or(model.model_id)},
              {"messages", std::move(arr)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"stream", false}};
    if (params.seed) body["seed"] = *params.seed;
    return body;
}

std::string parse_chat_response(std::string_view body) {
    json parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorKind::MalformedResponse, "response is not JSON");
    const auto choices = parsed.find("choices");
    if (choices == parsed.end() || !choices->is_array() || choices->empty())
        throw Error(ErrorKind::MalformedResponse, "response has no choices");
    const json& first = (*choices)[0];
    const auto message = first.find("message");
    if (message == first.end() || !message->is_object())
        throw Error(ErrorKind::MalformedResponse, "first choice has no message");
    const auto content = message->find("content");
    if (content == message->end() || !content->is_string())
        throw Error(ErrorKind::MalformedResponse, "message has no text content");
    return content->get<std::string>();
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidModelSpec, "endpoint_url lacks scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string HttpChatTransport::send(const ModelSpec& model, std::span<const ChatMessage> messages,
                                    const DecodingParams& params, std::chrono::milliseconds timeout) {
    const auto [origin, path] = split_url(*model.endpoint_url);
    httplib::Client client(origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (model.auth_token_env_var) {
        const char* token = std::getenv(model.auth_token_env_var->c_str());
        if (token == nullptr)
            throw Error(ErrorKind::InvalidModelSpec,
                        model.model_id + ": environment variable " + *model.auth_token_env_var + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    const auto result =
        client.Post(path, headers, build_chat_request(model, messages, params).dump(), "application/json");
    if (!result) throw TransientError(model.model_id + ": " + httplib::to_string(result.error()));
    const int status = result->status;
    if (status == 429 || status >= 500)
        throw TransientError(model.model_id + ": HTTP " + std::to_string(status));
    if (status < 200 || status >= 300)
        throw Error(ErrorKind::RequestRejected, model.model_id + ": HTTP " + std::to_string(status) + ": " +
                                                    result->body.substr(0, 200));
    return parse_chat_response(result->body);
}

// ---------------------------------------------------------------------------
// Scripted models

std::shared_ptr<ScriptedModel> ScriptedModel::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidModelSpec, "cannot open script " + path.string());
    std::multimap<std::string, std::string> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.contains("input_digest") || !record.contains("response"))
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad script record");
        entries.emplace(record["input_digest"].get<std::string>(), record["response"].get<std::string>());
    }
    return std::make_shared<ScriptedModel>(std::move(entries));
}

ScriptedModel::ScriptedModel(std::multimap<std::string, std::string> entries) {
    for (auto& [digest, response] : entries) entries_[digest].push_back(std::move(response));
}

std::string ScriptedModel::respond(std::span<const ChatMessage> messages) {
    const std::string digest = input_digest(messages);
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(digest);
    if (it == entries_.end()) throw Error(ErrorKind::ScriptMiss, "no scripted response for digest " + digest);
    std::size_t& cursor = cursor_[digest];
    std::string out = it->second[cursor % it->second.size()];
    ++cursor;
    return out;
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(ErrorKind::StorageFailure, "cannot create cache dir " + dir_.string());
    }
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (dir_.empty()) return std::nullopt;
    std::ifstream in(dir_ / (key + ".txt"), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    std::lock_guard lock(mutex_);
    memory_.emplace(key, text);
    return text;
}

void ResponseCache::put(const std::string& key, const std::string& text) {
    if (!dir_.empty()) {
        // write-then-rename: readers never observe a partial entry
        std::ostringstream tmpname;
        tmpname << key << ".tmp." << std::this_thread::get_id();
        const fs::path tmp = dir_ / tmpname.str();
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << text;
            if (!out) throw Error(ErrorKind::StorageFailure, "cannot write cache entry " + tmp.string());
        }
        std::error_code ec;
        fs::rename(tmp, dir_ / (key + ".txt"), ec);
        if (ec) throw Error(ErrorKind::StorageFailure, "cannot commit cache entry " + key);
    }
    std::lock_guard lock(mutex_);
    memory_[key] = text;
}

// ---------------------------------------------------------------------------
// Retry + limiter

std::chrono::milliseconds RetryPolicy::nominal_delay(int retry) const {
    const double ms = static_cast<double>(initial.count()) * std::pow(factor, retry);
    return std::chrono::milliseconds(static_cast<long long>(std::min(ms, static_cast<double>(cap.count()))));
}

std::chrono::milliseconds RetryPolicy::jittered_delay(int retry, Rng& rng) const {
    const double nominal = static_cast<double>(nominal_delay(retry).count());
    const double scale = 1.0 + jitter * (2.0 * rng.uniform() - 1.0);
    return std::chrono::milliseconds(static_cast<long long>(std::llround(nominal * scale)));
}

InflightLimiter::InflightLimiter(int limit) : limit_(limit) {
    if (limit < 1) throw Error(ErrorKind::ConfigError, "max_inflight_requests must be >= 1");
}

void InflightLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_use_ < limit_; });
    ++in_use_;
}

void InflightLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        --in_use_;
    }
    cv_.notify_one();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayOptions options, std::shared_ptr<ChatTransport> transport)
    : options_(std::move(options)),
      transport_(transport ? std::move(transport) : std::make_shared<HttpChatTransport>()),
      cache_(options_.cache_dir),
      limiter_(options_.max_inflight_requests),
      jitter_rng_(options_.jitter_seed) {
    if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

GatewayStats Gateway::stats() const noexcept {
    return {remote_attempts_.load(), cache_hits_.load(), scripted_calls_.load()};
}

std::shared_ptr<ScriptedModel> Gateway::script_for(const ModelSpec& model) {
    std::lock_guard lock(scripts_mutex_);
    auto& slot = scripts_[*model.script_path];
    if (!slot) slot = ScriptedModel::load(*model.script_path);
    return slot;
}

std::string Gateway::call_remote(const ModelSpec& model, std::span<const ChatMessage> messages,
                                 const DecodingParams& params) {
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retry.retry_budget; ++attempt) {
        if (attempt > 0) {
            std::chrono::milliseconds delay;
            {
                std::lock_guard lock(jitter_mutex_);
                delay = options_.retry.jittered_delay(attempt - 1, jitter_rng_);
            }
            options_.sleeper(delay);
        }
        limiter_.acquire();
        ++remote_attempts_;
        try {
            std::string text = transport_->send(model, messages, params, options_.timeout);
            limiter_.release();
            return text;
        } catch (const TransientError& e) {
            limiter_.release();
            last_error = e.what();
        } catch (...) {
            limiter_.release();
            throw;
        }
    }
    throw Error(ErrorKind::EndpointUnreachable, model.model_id + ": retries exhausted after " +
                                                    std::to_string(options_.retry.retry_budget + 1) +
                                                    " attempts; last error: " + last_error);
}

std::string Gateway::complete(const ModelSpec& model, std::span<const ChatMessage> messages,
                              const DecodingParams& params) {
    if (messages.empty()) throw Error(ErrorKind::MalformedResponse, "complete() needs at least one message");
    validate(model);
    const bool cacheable = params.temperature == 0.0;
    std::string key;
    if (cacheable) {
        key = cache_key(model.model_id, messages, params);
        if (auto hit = cache_.get(key)) {
            ++cache_hits_;
            return *hit;
        }
    }
    std::string text;
    if (model.kind == ModelKind::Scripted) {
        ++scripted_calls_;
        text = script_for(model)->respond(messages);
    } else {
        text = call_remote(model, messages, params);
    }
    if (cacheable) cache_.put(key, text);
    return text;
}

}  // namespace guidebench

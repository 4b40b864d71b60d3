#pragma once

// Uniform access to chat models: remote chat-completion endpoints and
// scripted fixtures, behind one bounded, retrying, caching gateway.

#include "guidebench/domain.hpp"
#include "guidebench/errors.hpp"
#include "guidebench/rng.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace guidebench {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r) noexcept;

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class ModelKind { RemoteEndpoint, Scripted };

struct ModelSpec {
    std::string model_id;
    ModelKind kind = ModelKind::Scripted;
    std::optional<std::string> endpoint_url;
    std::optional<std::string> auth_token_env_var;
    std::optional<std::filesystem::path> script_path;
    /// Name sent in the request body; defaults to model_id.
    std::optional<std::string> remote_name;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Throws InvalidModelSpec when kind-specific fields are missing.
void validate(const ModelSpec& spec);

void to_json(nlohmann::json& j, const ChatMessage& m);
void to_json(nlohmann::json& j, const ModelSpec& m);
void from_json(const nlohmann::json& j, ModelSpec& m);

/// Digest identifying a scripted-model input: SHA-256 of the canonical message list.
std::string input_digest(std::span<const ChatMessage> messages);

/// Digest keying the response cache; covers model, messages and every decoding parameter.
std::string cache_key(std::string_view model_id, std::span<const ChatMessage> messages, const DecodingParams& params);

/// Raised by transports for failures worth retrying (connection errors, 429, 5xx).
class TransientError : public Error {
public:
    explicit TransientError(const std::string& message) : Error(ErrorKind::EndpointUnreachable, message) {}
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::string send(const ModelSpec& model, std::span<const ChatMessage> messages,
                             const DecodingParams& params, std::chrono::milliseconds timeout) = 0;
};

/// Chat-completion over HTTP+JSON: POST {model, messages, temperature, max_tokens[, seed]},
/// reads choices[0].message.content.
class HttpChatTransport final : public ChatTransport {
public:
    std::string send(const ModelSpec& model, std::span<const ChatMessage> messages, const DecodingParams& params,
                     std::chrono::milliseconds timeout) override;
};

nlohmann::json build_chat_request(const ModelSpec& model, std::span<const ChatMessage> messages,
                                  const DecodingParams& params);
/// Throws MalformedResponse when no assistant text is present.
std::string parse_chat_response(std::string_view body);

/// Line-delimited {input_digest, response} records. Repeated digests form a
/// sequence served in order (cycling), so sampled calls can vary.
class ScriptedModel {
public:
    static std::shared_ptr<ScriptedModel> load(const std::filesystem::path& path);
    explicit ScriptedModel(std::multimap<std::string, std::string> entries);

    /// Throws ScriptMiss when the digest has no entry.
    std::string respond(std::span<const ChatMessage> messages);

private:
    std::map<std::string, std::vector<std::string>> entries_;
    std::map<std::string, std::size_t> cursor_;
    std::mutex mutex_;
};

/// One file per digest under `dir`; an empty path keeps entries in memory only.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir = {});

    std::optional<std::string> get(const std::string& key);
    void put(const std::string& key, const std::string& text);

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> memory_;
    std::mutex mutex_;
};

struct RetryPolicy {
    int retry_budget = 5;
    std::chrono::milliseconds initial{1000};
    double factor = 2.0;
    double jitter = 0.2;
    std::chrono::milliseconds cap{60000};

    /// Nominal delay before retry number `retry` (0-based), before jitter.
    std::chrono::milliseconds nominal_delay(int retry) const;
    std::chrono::milliseconds jittered_delay(int retry, Rng& rng) const;
};

/// Bounds concurrent in-flight calls.
class InflightLimiter {
public:
    explicit InflightLimiter(int limit);
    void acquire();
    void release();
    int limit() const noexcept { return limit_; }

private:
    int limit_;
    int in_use_ = 0;
    std::mutex mutex_;
    std::condition_variable cv_;
};

struct GatewayOptions {
    std::filesystem::path cache_dir;
    int max_inflight_requests = 4;
    RetryPolicy retry{};
    std::chrono::milliseconds timeout{120000};
    std::function<void(std::chrono::milliseconds)> sleeper;  // defaults to std::this_thread::sleep_for
    std::uint64_t jitter_seed = 0;
};

struct GatewayStats {
    std::uint64_t remote_attempts = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t scripted_calls = 0;
};

class Gateway {
public:
    explicit Gateway(GatewayOptions options, std::shared_ptr<ChatTransport> transport = nullptr);

    /// Returns the assistant text. Temperature-0 results are cached; remote calls are
    /// retried on transient failure up to retry_budget times with exponential backoff.
    std::string complete(const ModelSpec& model, std::span<const ChatMessage> messages,
                         const DecodingParams& params);

    GatewayStats stats() const noexcept;

private:
    std::string call_remote(const ModelSpec& model, std::span<const ChatMessage> messages,
                            const DecodingParams& params);
    std::shared_ptr<ScriptedModel> script_for(const ModelSpec& model);

    GatewayOptions options_;
    std::shared_ptr<ChatTransport> transport_;
    ResponseCache cache_;
    InflightLimiter limiter_;
    std::mutex scripts_mutex_;
    std::map<std::filesystem::path, std::shared_ptr<ScriptedModel>> scripts_;
    std::mutex jitter_mutex_;
    Rng jitter_rng_;
    std::atomic<std::uint64_t> remote_attempts_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> scripted_calls_{0};
};

}  // namespace guidebench

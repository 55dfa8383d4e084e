#pragma once

// Chat-completion client. Speaks the common chat-completions JSON shape over
// HTTP, or answers from a deterministic rule table for offline runs.

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "benign/error.hpp"
#include "benign/json.hpp"

namespace benign::gateway {

enum class Role { system, user, assistant };

std::string_view to_string(Role r) noexcept;

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed = 0;

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

void validate(const ChatRequest& r);
Json to_wire_json(const ChatRequest& r);
ChatRequest chat_request_from_wire_json(const Json& j);

struct BackendConfig {
    std::string endpoint_url;
    std::string auth_token_env_name;
    std::int64_t timeout_ms = 60000;
    int max_retries = 3;
    int requests_per_minute = 600;
    std::int64_t backoff_base_ms = 500;
    bool backoff_jitter = true;
};

void validate(const BackendConfig& c);

// Monotonic time source for rate limiting and backoff.
class Ticker {
public:
    virtual ~Ticker() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
};

class RealTicker final : public Ticker {
public:
    std::int64_t now_ms() override;
    void sleep_ms(std::int64_t ms) override;
};

// Sleeping advances the clock instantly.
class VirtualTicker final : public Ticker {
public:
    std::int64_t now_ms() override { return now_.load(); }
    void sleep_ms(std::int64_t ms) override {
        if (ms > 0) now_.fetch_add(ms);
    }

private:
    std::atomic<std::int64_t> now_{0};
};

// At most `per_minute` permits in any 60 s window.
class RateLimiter {
public:
    RateLimiter(int per_minute, Ticker& ticker);

    // Blocks (through the ticker) until a permit is free; returns the issue time.
    std::int64_t acquire();

    std::vector<std::int64_t> issued() const;

private:
    static constexpr std::int64_t kWindowMs = 60000;

    int per_minute_;
    Ticker& ticker_;
    mutable std::mutex mu_;
    std::deque<std::int64_t> window_;
    std::vector<std::int64_t> history_;
};

struct HttpReply {
    int status = 0;
    std::string body;
};

// One POST of a wire request. Network-level failures throw
// Error(transport_failure).
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post(const std::string& body) = 0;
};

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(BackendConfig config);
    HttpReply post(const std::string& body) override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

struct MockRule {
    std::string trigger;
    std::string response;
    bool refusal = false;
};

// Reads line-delimited {trigger, response[, refusal]} records.
std::vector<MockRule> load_mock_rules(const std::filesystem::path& path);

// Answers from an ordered rule list: the first rule whose trigger occurs in the
// concatenated message contents wins. Without a match the fallthrough handler
// is used, which by default echoes the last message.
class MockTransport final : public Transport {
public:
    using Fallthrough = std::function<std::string(const ChatRequest&)>;

    explicit MockTransport(std::vector<MockRule> rules, Fallthrough fallthrough = {});

    HttpReply post(const std::string& body) override;

    std::uint64_t calls() const noexcept { return calls_.load(); }
    // Concatenated message text of every request seen, in arrival order.
    std::vector<std::string> seen() const;

private:
    std::vector<MockRule> rules_;
    Fallthrough fallthrough_;
    std::atomic<std::uint64_t> calls_{0};
    mutable std::mutex mu_;
    std::vector<std::string> seen_;
};

// Builds an OpenAI-style completion body.
std::string completion_body(const std::string& content, bool refusal = false);

struct Completion {
    std::string text;
    int attempts = 0;
    int retry_count() const noexcept { return attempts - 1; }
};

using BatchItem = std::variant<Completion, Error>;

class ChatClient {
public:
    ChatClient(BackendConfig config, std::shared_ptr<Transport> transport,
               std::shared_ptr<Ticker> ticker = std::make_shared<RealTicker>());

    // Errors: transport_failure / rate_limited once retries are exhausted,
    // malformed_response, refusal.
    Completion complete(const ChatRequest& request);

    // Results are index-aligned with requests. Per-item failures are embedded;
    // only invalid configuration (parallelism < 1) throws.
    std::vector<BatchItem> complete_batch(const std::vector<ChatRequest>& requests, int parallelism);

    const BackendConfig& config() const noexcept { return config_; }
    RateLimiter& limiter() noexcept { return limiter_; }

private:
    std::int64_t backoff_delay(const ChatRequest& request, int attempt) const;

    BackendConfig config_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Ticker> ticker_;
    RateLimiter limiter_;
};

// Parses a completion body; throws malformed_response or refusal.
std::string parse_completion_body(const std::string& body);

}  // namespace benign::gateway

#include "benign/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <exception>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "benign/digest.hpp"
#include "benign/text.hpp"

namespace benign::gateway {

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

namespace {

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw Error(Errc::parse_error, "unknown role: " + std::string(s));
}

std::string joined_content(const ChatRequest& r) {
    std::string out;
    for (const auto& m : r.messages) {
        if (!out.empty()) out.push_back('\n');
        out += m.content;
    }
    return out;
}

}  // namespace

void validate(const ChatRequest& r) {
    if (r.model_id.empty()) throw Error(Errc::config_error, "model id is empty");
    if (r.messages.empty()) throw Error(Errc::invalid_argument, "chat request has no messages");
    if (r.messages.front().role == Role::assistant) {
        throw Error(Errc::invalid_argument, "first message must be system or user");
    }
    for (const auto& m : r.messages) {
        if (m.content.empty()) throw Error(Errc::invalid_argument, "message content is empty");
    }
    if (!(r.temperature >= 0.0)) throw Error(Errc::invalid_argument, "temperature must be >= 0");
    if (r.max_tokens <= 0) throw Error(Errc::invalid_argument, "max_tokens must be positive");
}

Json to_wire_json(const ChatRequest& r) {
    Json messages = Json::array();
    for (const auto& m : r.messages) {
        messages.push_back(Json{{"role", to_string(m.role)}, {"content", m.content}});
    }
    Json j{{"model", r.model_id},
           {"messages", messages},
           {"temperature", r.temperature},
           {"max_tokens", r.max_tokens}};
    if (r.seed) j["seed"] = *r.seed;
    return j;
}

ChatRequest chat_request_from_wire_json(const Json& j) {
    ChatRequest r;
    r.model_id = require_string(j, "model");
    for (const auto& m : require(j, "messages")) {
        r.messages.push_back({role_from_string(require_string(m, "role")), require_string(m, "content")});
    }
    if (auto it = j.find("temperature"); it != j.end()) r.temperature = it->get<double>();
    if (auto it = j.find("max_tokens"); it != j.end()) r.max_tokens = it->get<int>();
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
        r.seed = it->get<std::int64_t>();
    } else {
        r.seed.reset();
    }
    return r;
}

void validate(const BackendConfig& c) {
    if (c.timeout_ms <= 0) throw Error(Errc::config_error, "timeout_ms must be > 0");
    if (c.backoff_base_ms <= 0) throw Error(Errc::config_error, "backoff base_ms must be > 0");
    if (c.max_retries < 0) throw Error(Errc::config_error, "max_retries must be >= 0");
    if (c.requests_per_minute <= 0) throw Error(Errc::config_error, "requests_per_minute must be positive");
}

// ---------------------------------------------------------------------------
// Time and rate limiting

std::int64_t RealTicker::now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

void RealTicker::sleep_ms(std::int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

RateLimiter::RateLimiter(int per_minute, Ticker& ticker) : per_minute_(per_minute), ticker_(ticker) {
    if (per_minute_ <= 0) throw Error(Errc::config_error, "requests_per_minute must be positive");
}

std::int64_t RateLimiter::acquire() {
    std::lock_guard lock(mu_);
    std::int64_t now = ticker_.now_ms();
    while (!window_.empty() && window_.front() + kWindowMs <= now) window_.pop_front();
    if (static_cast<int>(window_.size()) >= per_minute_) {
        ticker_.sleep_ms(window_.front() + kWindowMs - now);
        now = ticker_.now_ms();
        while (!window_.empty() && window_.front() + kWindowMs <= now) window_.pop_front();
    }
    window_.push_back(now);
    history_.push_back(now);
    return now;
}

std::vector<std::int64_t> RateLimiter::issued() const {
    std::lock_guard lock(mu_);
    return history_;
}

// ---------------------------------------------------------------------------
// HTTP transport

HttpTransport::HttpTransport(BackendConfig config) : config_(std::move(config)) {
    validate(config_);
    const std::string& url = config_.endpoint_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::config_error, "endpoint url lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

HttpReply HttpTransport::post(const std::string& body) {
    httplib::Client client(scheme_host_port_);
    const auto secs = config_.timeout_ms / 1000;
    const auto usecs = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!config_.auth_token_env_name.empty()) {
        const char* token = std::getenv(config_.auth_token_env_name.c_str());
        if (token == nullptr || *token == '\0') {
            throw Error(Errc::config_error, "auth token env var is unset: " + config_.auth_token_env_name);
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) throw Error(Errc::transport_failure, httplib::to_string(res.error()));
    return HttpReply{res->status, res->body};
}

// ---------------------------------------------------------------------------
// Mock transport

std::vector<MockRule> load_mock_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::unreadable_file, path.string());
    std::vector<MockRule> rules;
    std::string line;
    while (std::getline(in, line)) {
        if (text::is_blank(line)) continue;
        const Json j = parse_json(line);
        MockRule rule{require_string(j, "trigger"), optional_string(j, "response"), false};
        if (auto it = j.find("refusal"); it != j.end()) rule.refusal = it->get<bool>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::string completion_body(const std::string& content, bool refusal) {
    Json message{{"role", "assistant"}, {"content", refusal ? Json(nullptr) : Json(content)}};
    if (refusal) message["refusal"] = content.empty() ? "declined" : content;
    Json choice{{"index", 0},
                {"message", message},
                {"finish_reason", refusal ? "content_filter" : "stop"}};
    return dump_line(Json{{"object", "chat.completion"}, {"choices", Json::array({choice})}});
}

MockTransport::MockTransport(std::vector<MockRule> rules, Fallthrough fallthrough)
    : rules_(std::move(rules)), fallthrough_(std::move(fallthrough)) {}

HttpReply MockTransport::post(const std::string& body) {
    calls_.fetch_add(1);
    ChatRequest request;
    try {
        request = chat_request_from_wire_json(parse_json(body));
    } catch (const Error&) {
        return HttpReply{400, R"({"error":"bad request"})"};
    }
    const std::string all = joined_content(request);
    {
        std::lock_guard lock(mu_);
        seen_.push_back(all);
    }
    for (const auto& rule : rules_) {
        if (all.find(rule.trigger) != std::string::npos) {
            return HttpReply{200, completion_body(rule.response, rule.refusal)};
        }
    }
    if (fallthrough_) return HttpReply{200, completion_body(fallthrough_(request))};
    return HttpReply{200, completion_body(request.messages.back().content)};
}

std::vector<std::string> MockTransport::seen() const {
    std::lock_guard lock(mu_);
    return seen_;
}

// ---------------------------------------------------------------------------
// Client

std::string parse_completion_body(const std::string& body) {
    Json j;
    try {
        j = parse_json(body);
    } catch (const Error&) {
        throw Error(Errc::malformed_response, "completion body is not JSON");
    }
    if (!j.is_object()) throw Error(Errc::malformed_response, "completion body is not an object");
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw Error(Errc::malformed_response, "completion has no choices");
    }
    const Json& choice = (*choices)[0];
    auto message = choice.find("message");
    if (message == choice.end() || !message->is_object()) {
        throw Error(Errc::malformed_response, "choice has no message");
    }
    if (auto r = message->find("refusal"); r != message->end() && r->is_string() && !r->get<std::string>().empty()) {
        throw Error(Errc::refusal, r->get<std::string>());
    }
    if (auto f = choice.find("finish_reason"); f != choice.end() && f->is_string() && *f == "content_filter") {
        throw Error(Errc::refusal, "content filtered by backend");
    }
    auto content = message->find("content");
    if (content == message->end() || !content->is_string()) {
        throw Error(Errc::malformed_response, "message content is not a string");
    }
    return content->get<std::string>();
}

ChatClient::ChatClient(BackendConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<Ticker> ticker)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      ticker_(std::move(ticker)),
      limiter_((validate(config_), config_.requests_per_minute), *ticker_) {
    if (!transport_) throw Error(Errc::config_error, "no transport configured");
}

std::int64_t ChatClient::backoff_delay(const ChatRequest& request, int attempt) const {
    std::int64_t delay = config_.backoff_base_ms << std::min(attempt, 20);
    if (config_.backoff_jitter) {
        // Seeded from the request so retries stay reproducible.
        std::mt19937_64 rng(std::hash<std::string>{}(joined_content(request)) + static_cast<unsigned>(attempt));
        const double factor = 0.5 + 0.5 * (static_cast<double>(rng() >> 11) / static_cast<double>(1ULL << 53));
        delay = static_cast<std::int64_t>(static_cast<double>(delay) * factor);
    }
    return std::max<std::int64_t>(delay, 1);
}

Completion ChatClient::complete(const ChatRequest& request) {
    validate(request);
    const std::string body = dump_line(to_wire_json(request));
    Error last(Errc::transport_failure, "no attempt made");
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) ticker_->sleep_ms(backoff_delay(request, attempt - 1));
        limiter_.acquire();
        HttpReply reply;
        try {
            reply = transport_->post(body);
        } catch (const Error& e) {
            if (e.code() != Errc::transport_failure) throw;
            last = e;
            continue;
        }
        if (reply.status == 429) {
            last = Error(Errc::rate_limited, "backend returned 429");
            continue;
        }
        if (reply.status >= 500) {
            last = Error(Errc::transport_failure, "backend returned " + std::to_string(reply.status));
            continue;
        }
        if (reply.status < 200 || reply.status >= 300) {
            throw Error(Errc::transport_failure, "backend rejected request with " + std::to_string(reply.status));
        }
        return Completion{parse_completion_body(reply.body), attempt + 1};
    }
    throw last;
}

std::vector<BatchItem> ChatClient::complete_batch(const std::vector<ChatRequest>& requests, int parallelism) {
    if (parallelism < 1) throw Error(Errc::config_error, "parallelism must be >= 1");
    std::vector<std::optional<BatchItem>> slots(requests.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < requests.size() && !abort.load(); i = next.fetch_add(1)) {
            try {
                slots[i].emplace(complete(requests[i]));
            } catch (const Error& e) {
                if (e.code() != Errc::config_error) {
                    slots[i].emplace(e);
                    continue;
                }
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                abort.store(true);
            } catch (...) {
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                abort.store(true);
            }
        }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), requests.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    if (fatal) std::rethrow_exception(fatal);
    std::vector<BatchItem> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace benign::gateway

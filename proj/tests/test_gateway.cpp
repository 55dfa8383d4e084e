#include <doctest.h>

#include <random>

#include "benign/gateway.hpp"
#include "support.hpp"

using namespace benign;
using namespace benign::gateway;
using testsupport::ScriptedTransport;

namespace {

ChatRequest user_request(const std::string& text) {
    ChatRequest r;
    r.model_id = "m";
    r.messages = {{Role::user, text}};
    return r;
}

ChatClient mock_client(std::vector<MockRule> rules) {
    return ChatClient(testsupport::mock_config(), std::make_shared<MockTransport>(std::move(rules)),
                      std::make_shared<VirtualTicker>());
}

}  // namespace

TEST_CASE("mock backend answers from its rule table") {
    auto client = mock_client({{"Men are naturally better leaders than women.",
                                "Leadership skills are not determined by gender.", false}});
    auto c = client.complete(user_request("Rewrite: Men are naturally better leaders than women."));
    CHECK(c.text == "Leadership skills are not determined by gender.");
    CHECK(c.retry_count() == 0);
    CHECK(client.complete(user_request("no rule here")).text == "no rule here");
}

TEST_CASE("429 twice then success reports two retries") {
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{
        {429, ""}, {429, ""}, {200, completion_body("done")}});
    ChatClient client(testsupport::mock_config(), transport, std::make_shared<VirtualTicker>());
    auto c = client.complete(user_request("x"));
    CHECK(c.text == "done");
    CHECK(c.retry_count() == 2);
    CHECK(transport->calls() == 3);
}

TEST_CASE("non-conforming body is malformed-response") {
    for (const std::string body : {"not json", "{}", R"({"choices":[]})", R"({"choices":[{"message":{}}]})"}) {
        auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{{200, body}});
        ChatClient client(testsupport::mock_config(), transport, std::make_shared<VirtualTicker>());
        try {
            client.complete(user_request("x"));
            FAIL("expected malformed");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::malformed_response);
            CHECK_FALSE(e.retryable());
        }
        CHECK(transport->calls() == 1);
    }
}

TEST_CASE("retry bound holds for every max_retries") {
    for (int retries = 0; retries <= 6; ++retries) {
        auto cfg = testsupport::mock_config();
        cfg.max_retries = retries;
        for (int status : {429, 503}) {
            auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{{status, ""}});
            ChatClient client(cfg, transport, std::make_shared<VirtualTicker>());
            try {
                client.complete(user_request("x"));
                FAIL("expected failure");
            } catch (const Error& e) {
                CHECK(e.code() == (status == 429 ? Errc::rate_limited : Errc::transport_failure));
                CHECK(e.retryable());
            }
            CHECK(transport->calls() == static_cast<std::size_t>(1 + retries));
        }
    }
}

TEST_CASE("request validation") {
    ChatRequest r;
    r.model_id = "m";
    CHECK_THROWS_AS(validate(r), Error);
    r.messages = {{Role::assistant, "hi"}};
    CHECK_THROWS_AS(validate(r), Error);
    r.messages = {{Role::system, "sys"}, {Role::user, ""}};
    CHECK_THROWS_AS(validate(r), Error);
    r.messages = {{Role::system, "sys"}, {Role::user, "u"}};
    validate(r);
    auto wire = to_wire_json(r);
    CHECK(chat_request_from_wire_json(wire) == r);
    BackendConfig c;
    c.timeout_ms = 0;
    CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("batch results are index-aligned") {
    std::vector<MockRule> rules;
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 5; ++i) {
        rules.push_back({"item-" + std::to_string(i), "answer-" + std::to_string(i), false});
        reqs.push_back(user_request("item-" + std::to_string(i)));
    }
    for (int p : {1, 2, 3, 8}) {
        auto client = mock_client(rules);
        auto out = client.complete_batch(reqs, p);
        REQUIRE(out.size() == 5);
        for (int i = 0; i < 5; ++i) {
            REQUIRE(std::holds_alternative<Completion>(out[i]));
            CHECK(std::get<Completion>(out[i]).text == "answer-" + std::to_string(i));
        }
    }
    auto client = mock_client(rules);
    CHECK_THROWS_AS(client.complete_batch(reqs, 0), Error);
}

TEST_CASE("refusal is isolated to its index") {
    auto client = mock_client({{"one", "ok one", false}, {"two", "", true}, {"three", "ok three", false}});
    auto out = client.complete_batch({user_request("one"), user_request("two"), user_request("three")}, 2);
    REQUIRE(out.size() == 3);
    CHECK(std::get<Completion>(out[0]).text == "ok one");
    REQUIRE(std::holds_alternative<Error>(out[1]));
    CHECK(std::get<Error>(out[1]).code() == Errc::refusal);
    CHECK(std::get<Completion>(out[2]).text == "ok three");
}

TEST_CASE("identical requests give identical outputs") {
    auto client = mock_client({{"lead", "same answer", false}});
    std::vector<ChatRequest> reqs(100, user_request("lead the team"));
    auto out = client.complete_batch(reqs, 4);
    for (const auto& item : out) CHECK(std::get<Completion>(item).text == "same answer");
}

TEST_CASE("rate limiter keeps every 60 s window under the cap") {
    for (int cap : {1, 5, 60}) {
        VirtualTicker ticker;
        RateLimiter limiter(cap, ticker);
        std::mt19937_64 rng(static_cast<std::uint64_t>(cap));
        for (int i = 0; i < 400; ++i) {
            limiter.acquire();
            ticker.sleep_ms(static_cast<std::int64_t>(rng() % 3000));
        }
        auto issued = limiter.issued();
        REQUIRE(issued.size() == 400);
        for (std::size_t i = 0; i < issued.size(); ++i) {
            std::size_t in_window = 0;
            for (std::size_t j = i; j < issued.size() && issued[j] < issued[i] + 60000; ++j) ++in_window;
            CHECK(in_window <= static_cast<std::size_t>(cap));
        }
    }
}

TEST_CASE("rate limit holds through the client under parallel load") {
    auto cfg = testsupport::mock_config();
    cfg.requests_per_minute = 10;
    auto ticker = std::make_shared<VirtualTicker>();
    ChatClient client(cfg, std::make_shared<MockTransport>(std::vector<MockRule>{}), ticker);
    std::vector<ChatRequest> reqs(50, user_request("x"));
    client.complete_batch(reqs, 4);
    auto issued = client.limiter().issued();
    std::sort(issued.begin(), issued.end());
    for (std::size_t i = 0; i < issued.size(); ++i) {
        std::size_t n = 0;
        for (std::size_t j = i; j < issued.size() && issued[j] < issued[i] + 60000; ++j) ++n;
        CHECK(n <= 10u);
    }
}

TEST_CASE("mock rules load from a file") {
    auto rules = load_mock_rules(testsupport::fixture("mock_rules_10_refusal.jsonl"));
    REQUIRE(rules.size() == 10);
    CHECK(rules[5].refusal);
    CHECK_FALSE(rules[0].refusal);
}

#include <httplib.h>
#include <cstdlib>
#include <thread>

TEST_CASE("http transport speaks the chat-completions shape with bearer auth") {
    httplib::Server server;
    std::string seen_auth;
    std::string seen_model;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_model = parse_json(req.body)["model"].get<std::string>();
        res.set_content(completion_body("served"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("BENIGN_TEST_BACKEND_TOKEN", "s3cret", 1);
    auto cfg = testsupport::mock_config();
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.auth_token_env_name = "BENIGN_TEST_BACKEND_TOKEN";
    ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), std::make_shared<VirtualTicker>());
    auto c = client.complete(user_request("hello"));
    CHECK(c.text == "served");
    CHECK(seen_auth == "Bearer s3cret");
    CHECK(seen_model == "m");

    server.stop();
    t.join();

    auto dead = cfg;
    dead.max_retries = 1;
    ChatClient offline(dead, std::make_shared<HttpTransport>(dead), std::make_shared<VirtualTicker>());
    try {
        offline.complete(user_request("hello"));
        FAIL("expected transport failure");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::transport_failure);
    }
}

TEST_CASE("configuration errors abort the whole batch") {
    auto client = mock_client({});
    std::vector<ChatRequest> reqs(4, user_request("x"));
    reqs[2].model_id.clear();
    try {
        client.complete_batch(reqs, 2);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_error);
    }
}

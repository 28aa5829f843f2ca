// Copyright 2026 The beyondrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <set>

#include "beyondrec/llm_gateway.hpp"
#include "mock_server.hpp"
#include "support.hpp"

using namespace beyondrec;
using beyondrec::testing::MockChatServer;
using beyondrec::testing::MockReply;
using beyondrec::testing::TempDir;

namespace {

// Transport that replays a fixed list of replies.
class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::vector<HttpReply> replies) : replies_(std::move(replies)) {}
    HttpReply post(const std::string& body) override {
        bodies.push_back(body);
        if (calls_ >= replies_.size()) throw TransportError("connection refused");
        return replies_[calls_++];
    }
    std::vector<std::string> bodies;

private:
    std::vector<HttpReply> replies_;
    std::size_t calls_ = 0;
};

std::string ok_body(const std::string& text) {
    return json{{"choices", json::array({{{"message", {{"content", text}}}}})}}.dump();
}

GatewayConfig fast_config(const fs::path& cache = {}) {
    GatewayConfig c;
    c.retry.initial_backoff = Millis(100);
    c.retry.max_backoff = Millis(1000);
    c.retry.max_attempts = 4;
    c.cache_dir = cache;
    c.api_key_env.clear();
    return c;
}

CompletionRequest request(const std::string& prompt, int repeat = 0) {
    return CompletionRequest{"mock-model", prompt, 0.0, 64, repeat};
}

}  // namespace

TEST_CASE("cache key is a stable content hash") {
    const auto a = request("hello");
    CHECK(a.cache_key() == request("hello").cache_key());
    CHECK(a.cache_key().size() == 64);
    CHECK(a.cache_key() != request("hello!").cache_key());
    CHECK(a.cache_key() != request("hello", 1).cache_key());
    auto warm = a;
    warm.temperature = 0.7;
    CHECK(a.cache_key() != warm.cache_key());
    auto longer = a;
    longer.max_tokens = 999;
    CHECK(a.cache_key() == longer.cache_key());
}

TEST_CASE("backoff schedule") {
    RetryPolicy p;
    p.initial_backoff = Millis(100);
    p.multiplier = 2.0;
    p.max_backoff = Millis(500);
    CHECK(p.backoff_for(1) == Millis(100));
    CHECK(p.backoff_for(2) == Millis(200));
    CHECK(p.backoff_for(3) == Millis(400));
    CHECK(p.backoff_for(4) == Millis(500));
}

TEST_CASE("wire format") {
    const auto body = json::parse(encode_chat_request(request("hi")));
    CHECK(body.at("model") == "mock-model");
    CHECK(body.at("messages").at(0).at("content") == "hi");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("max_tokens") == 64);
    CHECK(decode_chat_response(ok_body("1. A")) == "1. A");
    CHECK_THROWS_AS(decode_chat_response("{}"), TransportError);
    CHECK_THROWS_AS(decode_chat_response("not json"), TransportError);
}

TEST_CASE("retry after 429 then success") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpReply>{{429, "slow down", Millis(700)}, {200, ok_body("1. A"), std::nullopt}});
    std::vector<Millis> sleeps;
    LlmGateway gw(fast_config(), transport, [&](Millis d) { sleeps.push_back(d); });
    const auto r = gw.complete(request("p"));
    CHECK(r.text == "1. A");
    CHECK(r.attempt_count == 2);
    CHECK_FALSE(r.from_cache);
    CHECK(sleeps == std::vector<Millis>{Millis(700)});
}

TEST_CASE("backoff delays without retry-after") {
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{
        {503, "", std::nullopt}, {500, "", Millis(10)}, {502, "", std::nullopt}, {200, ok_body("x"), std::nullopt}});
    std::vector<Millis> sleeps;
    LlmGateway gw(fast_config(), transport, [&](Millis d) { sleeps.push_back(d); });
    CHECK(gw.complete(request("p")).attempt_count == 4);
    // A shorter Retry-After never undercuts the backoff.
    CHECK(sleeps == std::vector<Millis>{Millis(100), Millis(200), Millis(400)});
}

TEST_CASE("exhausted retries raise a transport error") {
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>(10, HttpReply{500, "boom", {}}));
    int sleeps = 0;
    LlmGateway gw(fast_config(), transport, [&](Millis) { ++sleeps; });
    CHECK_THROWS_AS(gw.complete(request("p")), TransportError);
    CHECK(transport->bodies.size() == 4);
    CHECK(sleeps == 3);

    auto refused = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{});
    LlmGateway gw2(fast_config(), refused, [](Millis) {});
    CHECK_THROWS_AS(gw2.complete(request("p")), TransportError);
}

TEST_CASE("client errors are not retried") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpReply>{{400, "bad request body", {}}, {200, ok_body("x"), {}}});
    LlmGateway gw(fast_config(), transport, [](Millis) {});
    try {
        gw.complete(request("p"));
        FAIL("expected HttpError");
    } catch (const HttpError& e) {
        CHECK(e.status() == 400);
        CHECK(e.body() == "bad request body");
    }
    CHECK(transport->bodies.size() == 1);
}

TEST_CASE("empty completion is an error") {
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{{200, ok_body(""), {}}});
    LlmGateway gw(fast_config(), transport, [](Millis) {});
    CHECK_THROWS_AS(gw.complete(request("p")), EmptyCompletion);
}

TEST_CASE("disk cache round trip") {
    TempDir dir;
    {
        auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{{200, ok_body("1. A\n2. B"), {}}});
        LlmGateway gw(fast_config(dir / "cache"), transport, [](Millis) {});
        const auto first = gw.complete(request("p"));
        const auto second = gw.complete(request("p"));
        CHECK_FALSE(first.from_cache);
        CHECK(second.from_cache);
        CHECK(second.text == first.text);
        CHECK(gw.network_calls() == 1);
    }
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpReply>{});
    LlmGateway gw(fast_config(dir / "cache"), transport, [](Millis) {});
    const auto reloaded = gw.complete(request("p"));
    CHECK(reloaded.from_cache);
    CHECK(reloaded.text == "1. A\n2. B");
    CHECK(gw.network_calls() == 0);
    CHECK(gw.cache_hits() == 1);
    const auto stored = json::parse(read_file(dir / "cache" / (request("p").cache_key() + ".json")));
    CHECK(stored.at("request").at("prompt") == "p");
    CHECK(stored.at("response").at("text") == "1. A\n2. B");
}

TEST_CASE("http transport against a mock server") {
    MockChatServer server([](std::size_t i, const json& body) {
        if (i == 0) return MockReply{429, "busy", "0"};
        return MockReply{200, "ok " + body.at("model").get<std::string>(), {}};
    });
    auto config = fast_config();
    config.endpoint = server.endpoint();
    std::vector<Millis> sleeps;
    LlmGateway gw(config, std::make_shared<HttpTransport>(config.endpoint, "secret", Millis(5000)),
                  [&](Millis d) { sleeps.push_back(d); });
    const auto r = gw.complete(request("hello"));
    CHECK(r.text == "ok mock-model");
    CHECK(r.attempt_count == 2);
    CHECK(server.requests() == 2);
    CHECK(sleeps == std::vector<Millis>{Millis(100)});
    CHECK_THROWS_AS(HttpTransport("no-scheme", "", Millis(1000)), UsageError);
    HttpTransport dead("http://127.0.0.1:1/v1", "", Millis(1000));
    CHECK_THROWS_AS(dead.post("{}"), TransportError);
}

TEST_CASE("bounded concurrency over a batch") {
    TempDir dir;
    MockChatServer server(MockChatServer::echo(), 2);
    auto config = fast_config(dir / "cache");
    config.endpoint = server.endpoint();
    config.max_in_flight = 8;
    config.audit_log = dir / "audit.jsonl";
    std::vector<CompletionRequest> requests;
    for (int i = 0; i < 1000; ++i) requests.push_back(request("prompt " + std::to_string(i)));
    {
        LlmGateway gw(config);
        const auto results = gw.complete_all(requests);
        REQUIRE(results.size() == 1000);
        for (std::size_t i = 0; i < results.size(); ++i) {
            REQUIRE(results[i].response);
            CHECK(results[i].response->text == "echo: prompt " + std::to_string(i));
        }
        CHECK(server.max_in_flight() <= 8);
        CHECK(gw.max_observed_in_flight() <= 8);
        CHECK(gw.max_observed_in_flight() >= 2);
        CHECK(gw.network_calls() == 1000);
    }
    CHECK(read_jsonl(dir / "audit.jsonl").size() == 1000);

    LlmGateway again(config);
    const auto cached = again.complete_all(requests);
    for (const auto& r : cached) CHECK(r.response->from_cache);
    CHECK(again.network_calls() == 0);
    CHECK(again.cache_hits() == 1000);
    CHECK(server.requests() == 1000);
}

TEST_CASE("duplicate keys in flight hit the network once") {
    MockChatServer server(MockChatServer::echo(), 20);
    auto config = fast_config();
    config.endpoint = server.endpoint();
    LlmGateway gw(config);
    const std::vector<CompletionRequest> requests(16, request("same"));
    const auto results = gw.complete_all(requests);
    for (const auto& r : results) CHECK(r.response->text == "echo: same");
    CHECK(server.requests() == 1);
    CHECK(gw.network_calls() == 1);
}

TEST_CASE("batch failures are reported per request") {
    MockChatServer server([](std::size_t, const json& body) {
        const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
        if (prompt == "bad") return MockReply{400, "rejected", {}};
        if (prompt == "empty") return MockReply{200, "", {}};
        return MockReply{200, "fine", {}};
    });
    auto config = fast_config();
    config.endpoint = server.endpoint();
    LlmGateway gw(config);
    const std::vector<CompletionRequest> requests{request("good"), request("bad"), request("empty")};
    const auto results = gw.complete_all(requests);
    CHECK(results[0].response);
    CHECK_FALSE(results[1].response);
    CHECK(results[1].transport_failure);
    CHECK(results[1].error.find("rejected") != std::string::npos);
    CHECK_FALSE(results[2].response);
    CHECK_FALSE(results[2].transport_failure);
}

TEST_CASE("gateway config json") {
    auto c = fast_config("/tmp/x");
    c.endpoint = "http://h/v1";
    c.audit_log = "/tmp/a.jsonl";
    const auto back = gateway_config_from_json(to_json(c));
    CHECK(back.endpoint == c.endpoint);
    CHECK(back.retry.max_attempts == 4);
    CHECK(back.retry.initial_backoff == Millis(100));
    CHECK(back.cache_dir == c.cache_dir);
    CHECK(back.audit_log == c.audit_log);
    CHECK_THROWS_AS(gateway_config_from_json({{"max_in_flight", 0}}), UsageError);
}

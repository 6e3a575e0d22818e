#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "eae/text.hpp"
#include "support.hpp"

using namespace eae;
using namespace eae::llm;
using testsupport::ScriptedTransport;
using testsupport::request;

namespace {

std::string ok_body(const std::string& content, bool with_usage = true) {
    nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}};
    if (with_usage) j["usage"] = {{"prompt_tokens", 7}, {"completion_tokens", 3}};
    return j.dump();
}

// Real-time delay inside the transport so concurrent calls overlap.
class SlowTransport final : public Transport {
public:
    HttpResult post(const std::string&, const std::vector<std::pair<std::string, std::string>>&, const std::string& body,
                    std::uint64_t) override {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(15));
        const auto req = request_from_wire(nlohmann::json::parse(body));
        return {200, ok_body("Final Answers:\nX: \"" + req.messages.back().content + "\"")};
    }
    std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("cache_key") {
    CHECK(cache_key(request("hello")) == cache_key(request("hello")));
    CHECK(cache_key(request("hello", 0.0)) != cache_key(request("hello", 0.7)));
    CHECK(cache_key(request("hello")) != cache_key(request("hellp")));
    auto r = request("hello");
    r.max_completion_tokens = 65;
    CHECK(cache_key(r) != cache_key(request("hello")));
    r = request("hello");
    r.model = "other";
    CHECK(cache_key(r) != cache_key(request("hello")));
    CHECK(cache_key(request("hello")).size() == 64);
    CHECK(cache_key(request("hello")) == text::sha256_hex(canonical_request(request("hello"))));
    // Canonical form carries no incidental whitespace.
    CHECK(canonical_request(request("a b")).find(": ") == std::string::npos);
}

TEST_CASE("sha256 known answers") {
    CHECK(text::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(text::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("request validation") {
    ChatRequest r;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = request("x");
    r.messages.push_back({Role::system, "late"});
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = request("x", -1.0);
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = request("x");
    r.max_completion_tokens = 0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    CHECK_NOTHROW(request("x").validate());
}

TEST_CASE("wire format") {
    const auto req = request("hi", 0.5);
    const auto w = wire_request(req);
    CHECK(w.at("model") == "test-model");
    CHECK(w.at("max_tokens") == 64);
    CHECK(w.at("temperature") == 0.5);
    CHECK(w.at("messages").size() == 2);
    CHECK(w.at("messages")[0].at("role") == "system");
    CHECK(w.at("messages")[1].at("content") == "hi");
    CHECK(request_from_wire(w) == req);

    const auto with = parse_wire_response(ok_body("answer"), req);
    CHECK(with.content == "answer");
    CHECK(with.finish_reason == FinishReason::stop);
    CHECK(with.usage == Usage{7, 3, false});

    const auto without = parse_wire_response(ok_body("abcdefgh", false), req);
    CHECK(without.usage.estimated);
    CHECK(without.usage.completion_tokens == 2);
    CHECK(without.usage.prompt_tokens == prompt::count_tokens("syshi"));

    CHECK_THROWS(parse_wire_response("{}", req));
    CHECK_THROWS(parse_wire_response("not json", req));
}

TEST_CASE("complete: caching, retries and errors") {
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    ScriptedTransport transport;
    ChatClient client(testsupport::mock_provider(), transport, cache, ledger, clock, 1);

    SUBCASE("second identical request is a cache hit") {
        const auto a = client.complete(request("q"));
        const auto b = client.complete(request("q"));
        CHECK(a == b);
        CHECK(transport.calls() == 1);
        CHECK(client.stats().cache_hits == 1);
        CHECK(transport.last_url() == "https://api.openai.com/v1/chat/completions");
    }
    SUBCASE("429 twice then 200") {
        transport.push({429, "slow down"});
        transport.push({429, "slow down"});
        const auto r = client.complete(request("q"));
        CHECK(r.content == "Final Answers:\nPlace: \"Paris\"");
        CHECK(client.stats().retries == 2);
        CHECK(transport.calls() == 3);
        CHECK(ledger.totals().dispatches == 3);
        CHECK(ledger.records().at(0).attempts == 3);
        // Backoff 100*2^0 + jitter, then 100*2^1 + jitter, jitter in [0, 100).
        CHECK(clock.now_ms() >= 300);
        CHECK(clock.now_ms() < 500);
    }
    SUBCASE("5xx, thrown transport errors and malformed bodies are retried") {
        transport.push({503, ""});
        transport.push({0, "", true});
        transport.push({200, "{\"choices\": []}"});
        CHECK(client.complete(request("q")).content == "Final Answers:\nPlace: \"Paris\"");
        CHECK(client.stats().retries == 3);
    }
    SUBCASE("exhausted 429s") {
        for (int i = 0; i < 6; ++i) transport.push({429, ""});
        CHECK_THROWS_AS(client.complete(request("q")), RateLimitExhausted);
        CHECK(transport.calls() == 6);
    }
    SUBCASE("exhausted 500s") {
        for (int i = 0; i < 6; ++i) transport.push({500, ""});
        CHECK_THROWS_AS(client.complete(request("q")), TransportError);
        CHECK_FALSE(cache.contains(cache_key(request("q"))));
    }
    SUBCASE("auth failures are not retried") {
        transport.push({401, "bad key"});
        CHECK_THROWS_AS(client.complete(request("q")), AuthError);
        CHECK(transport.calls() == 1);
    }
    SUBCASE("other 4xx fail without retry") {
        transport.push({404, "no such model"});
        CHECK_THROWS_AS(client.complete(request("q")), TransportError);
        CHECK(transport.calls() == 1);
    }
}

TEST_CASE("ledger cap stops dispatch before the network") {
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostCaps caps;
    caps.max_requests = 1;
    CostLedger ledger(caps);
    ScriptedTransport transport;
    ChatClient client(testsupport::mock_provider(), transport, cache, ledger, clock);
    client.complete(request("one"));
    CHECK_THROWS_AS(client.complete(request("two")), BudgetExceeded);
    CHECK(transport.calls() == 1);
    // Cache hits do not count against the cap.
    CHECK_NOTHROW(client.complete(request("one")));

    CostCaps tokens;
    tokens.max_total_tokens = 15;
    CostLedger small(tokens);
    auto cache2 = ResponseCache::in_memory();
    ChatClient c2(testsupport::mock_provider(), transport, cache2, small, clock);
    c2.complete(request("a"));  // 10 + 5 tokens
    CHECK_THROWS_AS(c2.complete(request("b")), BudgetExceeded);
}

TEST_CASE("api key handling") {
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    ScriptedTransport transport;
    auto cfg = testsupport::mock_provider();
    cfg.api_key_env = "EAE_TEST_KEY_FOR_LLM";
    cfg.base_url = "http://localhost:9/v1";
    ::unsetenv("EAE_TEST_KEY_FOR_LLM");
    ChatClient client(cfg, transport, cache, ledger, clock);
    CHECK_THROWS_AS(client.complete(request("q")), AuthError);
    CHECK(transport.calls() == 0);
    ::setenv("EAE_TEST_KEY_FOR_LLM", "sk-test", 1);
    client.complete(request("q"));
    const auto headers = transport.last_headers();
    CHECK(std::find(headers.begin(), headers.end(), std::make_pair(std::string("Authorization"), std::string("Bearer sk-test"))) !=
          headers.end());
    CHECK(transport.last_url() == "http://localhost:9/v1/chat/completions");
    CHECK(nlohmann::json::parse(transport.last_body()) == wire_request(request("q")));
    ::unsetenv("EAE_TEST_KEY_FOR_LLM");
}

TEST_CASE("persistent cache") {
    testsupport::TempDir dir;
    const auto key = cache_key(request("q"));
    ChatResponse resp{"Final Answers:\nA: \"b\"", FinishReason::stop, {5, 2, true}, 12};
    {
        auto cache = ResponseCache::open(dir / "c");
        cache.put({key, resp, "2026-01-01T00:00:00Z", "m"});
        cache.put({"other", resp, "2026-01-01T00:00:00Z", "m"});
        CHECK(cache.size() == 2);
    }
    SUBCASE("reopen") {
        auto cache = ResponseCache::open(dir / "c");
        CHECK(cache.size() == 2);
        CHECK(cache.get(key) == resp);
        CHECK_FALSE(cache.get("missing").has_value());
    }
    SUBCASE("missing index is rebuilt") {
        std::filesystem::remove(dir / "c" / "index.tsv");
        auto cache = ResponseCache::open(dir / "c");
        CHECK(cache.get(key) == resp);
    }
    SUBCASE("torn tail is dropped") {
        {
            std::ofstream out(dir / "c" / "entries.jsonl", std::ios::app | std::ios::binary);
            out << "{\"key\": \"half";
        }
        auto cache = ResponseCache::open(dir / "c");
        CHECK(cache.size() == 2);
        cache.put({"third", resp, "t", "m"});
        auto again = ResponseCache::open(dir / "c");
        CHECK(again.size() == 3);
        CHECK(again.get("third") == resp);
    }
    SUBCASE("clear") {
        auto cache = ResponseCache::open(dir / "c");
        cache.clear();
        CHECK(cache.size() == 0);
        CHECK(ResponseCache::open(dir / "c").size() == 0);
    }
}

TEST_CASE("rate limiter holds the sliding window") {
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    ScriptedTransport transport;
    ChatClient client(testsupport::mock_provider(1, 5), transport, cache, ledger, clock);
    for (int i = 0; i < 20; ++i) client.complete(request("q" + std::to_string(i)));
    const auto h = client.rate_limiter().history();
    REQUIRE(h.size() == 20);
    for (std::size_t i = 0; i + 5 < h.size(); ++i) CHECK(h[i + 5] - h[i] >= 60000);
    CHECK(clock.now_ms() >= 3 * 60000);
}

TEST_CASE("concurrency gate and in-flight sharing") {
    SystemClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    SlowTransport transport;
    ChatClient client(testsupport::mock_provider(2, 100000), transport, cache, ledger, clock);

    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { client.complete(request("q" + std::to_string(i))); });
    for (auto& t : threads) t.join();
    CHECK(client.gate().peak() <= 2);
    CHECK(transport.calls == 8);

    threads.clear();
    std::vector<ChatResponse> out(6);
    for (int i = 0; i < 6; ++i) threads.emplace_back([&, i] { out[i] = client.complete(request("same")); });
    for (auto& t : threads) t.join();
    CHECK(transport.calls == 9);
    for (const auto& r : out) CHECK(r == out[0]);
}

TEST_CASE("ledger conservation and log") {
    testsupport::TempDir dir;
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger(CostCaps{}, dir / "ledger.jsonl");
    MockScript script;
    MockTransport transport(script);
    ChatClient client(testsupport::mock_provider(), transport, cache, ledger, clock);
    for (int i = 0; i < 5; ++i) client.complete(request(std::string(i * 10 + 1, 'x')));
    const auto totals = ledger.totals();
    std::size_t p = 0, c = 0;
    for (const auto& r : ledger.records()) {
        p += r.usage.prompt_tokens;
        c += r.usage.completion_tokens;
        CHECK(r.usage.estimated);
    }
    CHECK(totals.prompt_tokens == p);
    CHECK(totals.completion_tokens == c);
    CHECK(totals.responses == 5);
    CHECK(totals.estimated_responses == 5);
    CHECK(text::split_lines(testsupport::read_file(dir / "ledger.jsonl")).size() >= 5);
}

TEST_CASE("mock provider") {
    MockScript script;
    const auto scripted = request("scripted");
    script.by_key[cache_key(scripted)] = "Final Answers:\nAgent: \"x\"";
    script.by_substring.emplace_back("needle", "Final Answers:\nPlace: \"y\"");

    CHECK(mock_complete(scripted, script).content == "Final Answers:\nAgent: \"x\"");
    CHECK(mock_complete(scripted, script).finish_reason == FinishReason::stop);
    CHECK(mock_complete(request("unscripted"), script).content == "Final Answers:\n(none)");
    CHECK(mock_complete(request("with a needle in it"), script).content == "Final Answers:\nPlace: \"y\"");
    CHECK(mock_complete(scripted, script) == mock_complete(scripted, script));
    CHECK(mock_complete(scripted, script).usage.estimated);

    testsupport::TempDir dir;
    testsupport::write_file(dir / "s.json", R"({"default": "nothing", "responses": [
        {"contains": "abc", "response": "R1"}, {"key": ")" + cache_key(scripted) + R"(", "response": "R2"}]})");
    const auto loaded = MockScript::load(dir / "s.json");
    CHECK(mock_complete(request("xabcx"), loaded).content == "R1");
    CHECK(mock_complete(scripted, loaded).content == "R2");
    CHECK(mock_complete(request("zzz"), loaded).content == "nothing");

    MockTransport transport(script);
    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    ChatClient client(testsupport::mock_provider(), transport, cache, ledger, clock);
    CHECK(client.complete(scripted).content == "Final Answers:\nAgent: \"x\"");
    CHECK(transport.calls() == 1);
}

TEST_CASE("simulated clock") {
    SimulatedClock clock(100);
    clock.sleep_for_ms(50);
    CHECK(clock.now_ms() == 150);
    clock.advance(10);
    CHECK(clock.now_ms() == 160);
}

TEST_CASE("http transport against a loopback server") {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(ok_body("Final Answers:\nPlace: \"Lyon\""), "application/json");
    });
    server.Post("/v1/fail/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("busy", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpTransport http;
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    const auto r = http.post(base + "/v1/chat/completions", {{"Authorization", "Bearer k"}}, "{\"x\":1}", 5000);
    CHECK(r.status == 200);
    CHECK(seen_auth == "Bearer k");
    CHECK(seen_body == "{\"x\":1}");
    CHECK(http.post(base + "/v1/fail/chat/completions", {}, "{}", 5000).status == 503);

    SimulatedClock clock;
    auto cache = ResponseCache::in_memory();
    CostLedger ledger;
    auto cfg = testsupport::mock_provider();
    cfg.base_url = base + "/v1";
    ChatClient client(cfg, http, cache, ledger, clock);
    const auto resp = client.complete(request("q"));
    CHECK(resp.content == "Final Answers:\nPlace: \"Lyon\"");
    CHECK(resp.usage == Usage{7, 3, false});
    CHECK(nlohmann::json::parse(seen_body) == wire_request(request("q")));

    server.stop();
    worker.join();
    CHECK_THROWS_AS(http.post(base + "/v1/chat/completions", {}, "{}", 500), TransportError);
    CHECK_THROWS_AS(http.post("no-scheme", {}, "{}", 500), TransportError);
}

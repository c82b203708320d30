#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <regex>
#include <thread>

#include "cmda/llm_gateway.hpp"
#include "cmda/storage.hpp"
#include "support.hpp"

using namespace cmda;
using namespace cmda::llm;

namespace {

CompletionRequest req(const std::string& text) { return ModelConfig{}.request(text); }

// Provider that sleeps so concurrent callers overlap.
class SlowProvider : public Provider {
 public:
  std::string name() const override { return "slow"; }
  CompletionResponse complete(const CompletionRequest& r) override {
    int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active;
    CompletionResponse out;
    out.text = r.user_text;
    return out;
  }
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
};

}  // namespace

TEST_SUITE("llm_gateway") {
  TEST_CASE("mock resolution order: keyed, queue, echo") {
    MockProvider m;
    m.add_keyed("P", {"R", {}, {}, {}});
    m.enqueue("R1");
    m.enqueue("R2");
    CHECK(m.complete(req("P")).text == "R");
    CHECK(m.complete(req("x")).text == "R1");
    CHECK(m.complete(req("y")).text == "R2");
    CHECK(m.complete(req("P")).text == "R");  // keyed replies are reusable
    try {
      m.complete(req("z"));
      FAIL("exhausted mock answered");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::script_exhausted);
    }
    m.set_echo(true);
    CHECK(m.complete(req("echo me")).text == "echo me");
    CHECK(m.calls() == 6);
  }

  TEST_CASE("mock is deterministic") {
    auto m = MockProvider::configure(Json{{"keyed", {{"P", "R"}}}});
    auto a = m->complete(req("P"));
    auto b = m->complete(req("P"));
    CHECK(to_json(a).dump() == to_json(b).dump());
  }

  TEST_CASE("scripted token counts") {
    auto m = MockProvider::configure(
        Json{{"queue", {{{"text", "ok"}, {"prompt_tokens", 932}, {"completion_tokens", 137}}}}});
    Gateway g(m, nullptr);
    auto r = g.complete(req("prompt"));
    CHECK(r.prompt_tokens == 932);
    CHECK(r.completion_tokens == 137);
    CHECK(r.total_tokens() == 1069);
    CHECK(g.local_traces().at(0).response["total_tokens"] == 1069);
  }

  TEST_CASE("configure rejects bad scripts") {
    CHECK_THROWS_AS(MockProvider::configure(Json::array()), Error);
    CHECK_THROWS_AS(MockProvider::configure(Json::object()), Error);
    CHECK_THROWS_AS(MockProvider::configure(Json{{"queue", {{{"error", "nonsense"}}}}}), Error);
    auto m = MockProvider::configure(Json{{"queue", {{{"error", "transient"}}}}});
    try {
      m->complete(req("x"));
      FAIL("scripted failure not raised");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::transient);
      CHECK(e.retryable());
    }
  }

  TEST_CASE("every call leaves exactly one trace") {
    testing::World w;
    auto m = std::make_shared<MockProvider>();
    m->enqueue("first");
    m->enqueue(MockProvider::Reply::failure(ErrorCode::upstream_rejected));
    Gateway g(m, w.store.get());
    auto r = g.complete(ModelConfig{}.request("hello", std::string("task-9")));
    CHECK(r.trace_id == "trace-000001");
    CHECK_THROWS_AS(g.complete(req("again")), Error);
    try {
      g.complete(req(""));
      FAIL("empty prompt sent");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_argument);
    }
    CHECK(m->calls() == 2);  // validation failure never reached the provider
    auto traces = w.store->query<TraceRecord>();
    REQUIRE(traces.size() == 3);
    CHECK(traces[0].task_id == "task-9");
    CHECK(traces[0].response["text"] == "first");
    CHECK(traces[1].response["code"] == "upstream_rejected");
    CHECK(traces[2].response["code"] == "invalid_argument");
    CHECK(g.calls() == 3);
  }

  TEST_CASE("request validation") {
    CHECK(validate(req("x")).empty());
    auto r = req("");
    r.model_id = "";
    r.temperature = 3;
    r.max_tokens = 0;
    CHECK(validate(r).size() == 4);
  }

  TEST_CASE("trace file mirror") {
    auto path = std::filesystem::temp_directory_path() / "cmda_gateway_traces.jsonl";
    std::filesystem::remove(path);
    {
      auto m = MockProvider::configure(Json{{"echo", true}});
      Gateway g(m, nullptr, GatewayOptions{4, path});
      g.complete(req("a"));
      g.complete(req("b"));
    }
    auto text = testing::read_file(path);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    std::filesystem::remove(path);
  }

  TEST_CASE("concurrency cap") {
    auto slow = std::make_shared<SlowProvider>();
    Gateway g(slow, nullptr, GatewayOptions{3, std::nullopt});
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) threads.emplace_back([&] { g.complete(req("x")); });
    for (auto& t : threads) t.join();
    CHECK(slow->peak.load() <= 3);
    CHECK(g.max_observed_in_flight() <= 3);
    CHECK(g.calls() == 12);
  }

  TEST_CASE("http provider speaks chat completions") {
    httplib::Server server;
    std::atomic<int> mode{200};
    std::string seen_body, seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& r, httplib::Response& res) {
      seen_body = r.body;
      seen_auth = r.get_header_value("Authorization");
      res.status = mode.load();
      if (mode == 200) {
        res.set_content(R"({"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}})",
                        "application/json");
      } else if (mode == 201) {
        res.status = 200;
        res.set_content("not json", "text/plain");
      } else {
        res.set_content("{}", "application/json");
      }
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpProviderConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "secret";
    cfg.timeout = std::chrono::milliseconds(5000);
    auto provider = make_http_provider(cfg);
    Gateway g(provider, nullptr);

    auto r = g.complete(req("hello"));
    CHECK(r.text == "hi");
    CHECK(r.total_tokens() == 6);
    CHECK(seen_auth == "Bearer secret");
    auto body = Json::parse(seen_body);
    CHECK(body["messages"][0]["content"] == "hello");
    CHECK(body["model"] == "gemini-2.0-flash-lite");
    CHECK_FALSE(body.contains("task_id"));

    auto code_for = [&](int status) {
      mode = status;
      try {
        g.complete(req("hello"));
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::internal;
    };
    CHECK(code_for(500) == ErrorCode::transient);
    CHECK(code_for(429) == ErrorCode::transient);
    CHECK(code_for(400) == ErrorCode::upstream_rejected);
    CHECK(code_for(201) == ErrorCode::transient);

    server.stop();
    th.join();

    cfg.base_url = "http://127.0.0.1:1";
    Gateway down(make_http_provider(cfg), nullptr);
    CHECK_THROWS_AS(down.complete(req("x")), Error);
    CHECK_THROWS_AS(make_http_provider(HttpProviderConfig{}), Error);
  }

  TEST_CASE("only the http provider talks to the network") {
    namespace fs = std::filesystem;
    std::vector<std::string> offenders;
    for (const auto& entry : fs::recursive_directory_iterator(fs::path(CMDA_SOURCE_DIR) / "src")) {
      if (!entry.is_regular_file()) continue;
      auto text = testing::read_file(entry.path());
      if (text.find("httplib::Client") != std::string::npos && entry.path().filename() != "http_provider.cpp") {
        offenders.push_back(entry.path().filename().string());
      }
    }
    CHECK(offenders.empty());
  }
}

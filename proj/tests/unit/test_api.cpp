#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "cmda/api_service.hpp"
#include "support.hpp"

using namespace cmda;
using testing::World;

namespace {

struct Rig {
  World w;
  std::shared_ptr<llm::MockProvider> mock = std::make_shared<llm::MockProvider>();
  llm::Gateway gateway{mock, w.store.get()};
  std::shared_ptr<fetch::StubFetcher> fetcher = std::make_shared<fetch::StubFetcher>();
  orchestrator::TaskEngine engine{*w.store, gateway, fetcher};
  api::Router router{*w.store, engine, gateway};

  api::Response call(const std::string& method, const std::string& path, const Json& body = nullptr,
                     std::map<std::string, std::string> headers = {}) {
    api::Request r;
    r.method = method;
    r.path = path;
    if (!body.is_null()) r.body = body.dump();
    r.headers = std::move(headers);
    return router.handle(r);
  }
};

std::string error_code(const api::Response& r) { return r.body["error"]["code"].get<std::string>(); }

}  // namespace

TEST_SUITE("api") {
  TEST_CASE("inventory has twelve routes") {
    CHECK(api::route_inventory().size() == 12);
    CHECK(api::http_status(ErrorCode::gone) == 410);
    CHECK(api::http_status(ErrorCode::conflict) == 409);
    CHECK(api::http_status(ErrorCode::validation_failed) == 422);
  }

  TEST_CASE("papers") {
    Rig r;
    auto created = r.call("POST", "/papers", Json{{"title", "A Study"}, {"id", "paper-x"}, {"full_text", "Body."}});
    CHECK(created.status == 202);
    CHECK(created.body["paper"]["id"] == "paper-x");
    auto task_id = created.body["task_id"].get<std::string>();
    CHECK(r.w.store->get<AgentTask>(task_id)->status == TaskStatus::queued);
    CHECK(r.call("POST", "/papers", Json{{"title", "Again"}, {"id", "paper-x"}}).status == 409);
    auto bad = r.call("POST", "/papers", Json::object());
    CHECK(bad.status == 422);
    CHECK(bad.body["error"]["field"] == "title");
    auto listed = r.call("GET", "/papers");
    CHECK(listed.status == 200);
    CHECK(listed.body["papers"].size() == 1);
    CHECK(r.call("GET", "/papers/paper-x/questions").body["questions"].empty());
    CHECK(r.call("GET", "/papers/nope/questions").status == 404);

    api::Request raw;
    raw.method = "POST";
    raw.path = "/papers";
    raw.body = "{not json";
    auto res = r.router.handle(raw);
    CHECK(res.status == 400);
    CHECK(error_code(res) == "bad_request");
  }

  TEST_CASE("unknown routes and methods") {
    Rig r;
    auto missing = r.call("GET", "/nothing/here");
    CHECK(missing.status == 404);
    CHECK(error_code(missing) == "route_not_found");
    auto wrong = r.call("PUT", "/papers");
    CHECK(wrong.status == 405);
    CHECK(error_code(wrong) == "method_not_allowed");
  }

  TEST_CASE("question editing routes") {
    Rig r;
    auto a = r.w.basic();
    auto path = "/questions/" + a.id;

    auto ok = r.call("PATCH", path,
                     Json{{"field_name", "question"}, {"original_value", a.current_question}, {"new_value", "New Q?"}},
                     {{"x-participant-id", "p1"}});
    CHECK(ok.status == 200);
    CHECK(ok.body["question"]["current_question"] == "New Q?");
    CHECK(r.w.store->count<UserInteraction>() == 1);

    auto stale = r.call("PATCH", path,
                        Json{{"field_name", "question"}, {"original_value", a.current_question}, {"new_value", "X?"}});
    CHECK(stale.status == 409);
    CHECK(error_code(stale) == "conflict");
    auto banana = r.call("PATCH", path, Json{{"field_name", "banana"}, {"original_value", "x"}, {"new_value", "y"}});
    CHECK(banana.status == 422);
    CHECK(banana.body["error"]["field"] == "field_name");
    CHECK(r.call("PATCH", path, Json{{"field_name", "question"}}).status == 422);
    CHECK(r.call("PATCH", "/questions/rq-none",
                 Json{{"field_name", "question"}, {"original_value", "a"}, {"new_value", "b"}})
              .status == 404);

    CHECK(r.call("POST", path + "/rating", Json{{"rating", 6}}).status == 422);
    CHECK(r.call("POST", path + "/rating", Json{{"rating", "4"}}).status == 422);
    auto rated = r.call("POST", path + "/rating", Json{{"rating", 4}});
    CHECK(rated.status == 200);
    CHECK(rated.body["question"]["quality_rating"] == 4);

    auto hist = r.call("GET", path + "/history");
    CHECK(hist.status == 200);
    auto& entries = hist.body["history"];
    REQUIRE(entries.size() == 2);
    CHECK(entries[1]["edit_type"] == "rating");
    CHECK(entries[1]["diff"].empty());
    // diff hunks agree with the library diff
    Json expected = Json::array();
    for (const auto& h : compute_diff(a.current_question, "New Q?")) {
      expected.push_back({{"op", to_string(h.op)}, {"text", h.text}});
    }
    CHECK(entries[0]["diff"][0]["field"] == "question");
    CHECK(entries[0]["diff"][0]["hunks"] == expected);

    r.mock->enqueue("How do people read noisy charts?");
    auto regen = r.call("POST", path + "/regenerate", Json{{"scope", "question"}, {"user_prompt", "mention noise"}});
    CHECK(regen.status == 200);
    CHECK(regen.body["question"]["current_question"] == "How do people read noisy charts?");
    CHECK(r.call("POST", path + "/regenerate", Json{{"scope", "title"}, {"user_prompt", "x"}}).status == 422);
    CHECK(r.call("POST", path + "/regenerate", Json{{"scope", "question"}}).status == 422);
    // mock script exhausted surfaces as an upstream failure
    CHECK(r.call("POST", path + "/regenerate", Json{{"scope", "question"}, {"user_prompt", "x"}}).status == 502);

    CHECK(r.call("DELETE", path).status == 200);
    auto gone = r.call("PATCH", path,
                       Json{{"field_name", "question"}, {"original_value", "How do people read noisy charts?"},
                            {"new_value", "Z?"}});
    CHECK(gone.status == 410);
    CHECK(r.call("POST", path + "/rating", Json{{"rating", 3}}).status == 410);
    CHECK(r.call("DELETE", path).status == 410);
    CHECK(r.call("GET", "/questions/rq-none/history").status == 404);
  }

  TEST_CASE("task lifecycle") {
    Rig r;
    r.w.paper("paper-1", "");
    r.fetcher->add("paper-1", {"T", "", "", "Fetched."});
    CHECK(r.call("POST", "/tasks", Json{{"task_type", "summarize"}, {"input_data", Json::object()}}).status == 422);
    auto bad = r.call("POST", "/tasks", Json{{"task_type", "fetch_paper_content"}, {"input_data", Json::object()}});
    CHECK(bad.status == 422);
    CHECK(bad.body["error"]["field"] == "paper_id");

    auto created =
        r.call("POST", "/tasks", Json{{"task_type", "fetch_paper_content"}, {"input_data", {{"paper_id", "paper-1"}}}});
    CHECK(created.status == 202);
    auto id = created.body["task_id"].get<std::string>();
    CHECK(r.call("GET", "/tasks/" + id).body["status"] == "queued");
    auto claimed = r.engine.claim_next("w");
    REQUIRE(claimed);
    CHECK(r.call("GET", "/tasks/" + id).body["status"] == "running");
    r.engine.execute_task(*claimed);
    auto done = r.call("GET", "/tasks/" + id);
    CHECK(done.status == 200);
    CHECK(done.body["status"] == "completed");
    CHECK(done.body["attempts"] == 1);
    CHECK(done.body["history"].size() == 2);
    CHECK(done.body.contains("output_data"));
    CHECK_FALSE(done.body["logs"].empty());
    CHECK(r.call("GET", "/tasks/task-404").status == 404);
  }

  TEST_CASE("knowledge and stats") {
    Rig r;
    auto a = r.w.basic();
    r.w.participant("p2", 2);
    r.w.edit(a.id, "question", "Edited?");
    r.mock->enqueue(testing::fixture("extraction_example.json"));
    knowledge::run_extraction_pass(*r.w.store, r.gateway, r.w.project);

    auto all = r.call("GET", "/projects/" + r.w.project + "/knowledge");
    CHECK(all.status == 200);
    CHECK(all.body["entries"].size() == 2);
    api::Request q;
    q.method = "GET";
    q.path = "/projects/" + r.w.project + "/knowledge";
    q.query["participant_id"] = "p2";
    auto scoped = r.router.handle(q);
    CHECK(scoped.body["rendered"].get<std::string>().rfind("ACCUMULATED KNOWLEDGE", 0) == 0);
    auto stats = r.call("GET", "/projects/" + r.w.project + "/stats");
    CHECK(stats.status == 200);
    CHECK(stats.body["total"] == 2);
    CHECK(r.call("GET", "/projects/other/stats").body["total"] == 0);
  }

  TEST_CASE("served over http") {
    Rig r;
    r.w.basic();
    httplib::Server server;
    api::bind(server, r.router);
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto listed = client.Get("/papers");
    REQUIRE(listed);
    CHECK(listed->status == 200);
    CHECK(Json::parse(listed->body)["papers"].size() == 1);
    auto rated = client.Post("/questions/rq-1/rating", R"({"rating": 5})", "application/json");
    REQUIRE(rated);
    CHECK(rated->status == 200);
    auto missing = client.Get("/nope");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto put = client.Put("/papers", "{}", "application/json");
    REQUIRE(put);
    CHECK(put->status == 405);

    server.stop();
    th.join();
  }
}

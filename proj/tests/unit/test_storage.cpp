#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include "cmda/storage.hpp"
#include "support.hpp"

using namespace cmda;
using testing::World;

namespace {

AgentTask queued_task(Store& store, TaskType type = TaskType::fetch_paper_content) {
  AgentTask t;
  t.id = store.next_id("task");
  t.task_type = type;
  t.input_data = Json{{"paper_id", "paper-1"}};
  t.created_at = store.now();
  store.put(t);
  return t;
}

KnowledgeEntry entry(Store& store, const std::string& text, KnowledgeScope scope, const std::string& source) {
  KnowledgeEntry k;
  k.id = store.next_id("knowledge");
  k.text = text;
  k.category = KnowledgeCategory::conceptual_depth_changes;
  k.scope = std::move(scope);
  k.source_question_ids = {source};
  k.created_at = store.now();
  k.created_by = "p1";
  store.put(k);
  return k;
}

}  // namespace

TEST_SUITE("storage") {
  TEST_CASE("put rejects invariant violations") {
    World w;
    PaperRecord p;
    p.id = "paper-x";
    try {
      w.store->put(p);
      FAIL("empty title accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::validation_failed);
    }
    CHECK_FALSE(w.store->get<PaperRecord>("paper-x"));
  }

  TEST_CASE("knowledge entries round-trip and need resolvable provenance") {
    World w;
    auto a = w.basic();
    auto k = entry(*w.store, "Specify the population.", KnowledgeScope::project(w.project), a.id);
    CHECK(w.store->get<KnowledgeEntry>(k.id) == k);

    KnowledgeEntry orphan = k;
    orphan.id = "knowledge-x";
    orphan.source_question_ids = {"rq-missing"};
    CHECK_THROWS_AS(w.store->put(orphan), Error);
    orphan.source_question_ids.clear();
    CHECK_THROWS_AS(w.store->put(orphan), Error);
    // entries are append-only
    CHECK_THROWS_AS(w.store->put(k), Error);
  }

  TEST_CASE("transactions are all-or-nothing") {
    World w;
    w.paper("paper-1");
    CHECK_THROWS(w.store->transact([&](Transaction& tx) {
      PaperRecord p;
      p.id = "paper-2";
      p.title = "ok";
      tx.put(p);
      CHECK(tx.get<PaperRecord>("paper-2"));  // read-your-writes
      PaperRecord bad;
      bad.id = "paper-3";
      tx.put(bad);
    }));
    CHECK_FALSE(w.store->get<PaperRecord>("paper-2"));
    CHECK(w.store->count<PaperRecord>() == 1);
  }

  TEST_CASE("initial artifact state is immutable") {
    World w;
    auto a = w.basic();
    a.initial_question = "rewritten";
    refresh_distances(a);
    try {
      w.store->put(a);
      FAIL("initial state changed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::conflict);
    }
  }

  TEST_CASE("artifacts need an existing session and paper") {
    World w;
    w.paper("paper-1");
    ResearchQuestionArtifact a;
    a.id = "rq-1";
    a.paper_id = "paper-1";
    a.session_id = "nope";
    CHECK_THROWS_AS(w.store->put(a), Error);
  }

  TEST_CASE("edit records are immutable apart from the processed flag") {
    World w;
    w.basic();
    auto out = w.edit("rq-1", "question", "How do novices read charts?");
    auto e = out.edit;
    e.new_value = "tampered";
    CHECK_THROWS_AS(w.store->put(e), Error);
    std::vector<std::string> ids{out.edit.id};
    CHECK(w.store->mark_edits_processed(ids) == 1);
    CHECK(w.store->mark_edits_processed(ids) == 0);
    auto back = *w.store->get<EditRecord>(out.edit.id);
    CHECK(back.processed);
    back.processed = false;
    CHECK_THROWS_AS(w.store->put(back), Error);
  }

  TEST_CASE("participant order is unique per project") {
    World w;
    w.participant("p1", 1);
    CHECK_THROWS_AS(w.participant("p2", 1), Error);
    w.participant("p3", 1, "other-project");
  }

  TEST_CASE("unprocessed edits in creation order") {
    World w;
    CHECK(w.store->query_unprocessed_edits(w.project).empty());
    CHECK(w.store->query_unprocessed_edits("unknown").empty());
    w.basic();
    auto e1 = w.edit("rq-1", "question", "Q1").edit;
    auto e2 = w.edit("rq-1", "question", "Q2").edit;
    auto e3 = w.edit("rq-1", "contribution", "C1").edit;
    std::vector<std::string> first{e1.id};
    w.store->mark_edits_processed(first);
    auto pending = w.store->query_unprocessed_edits(w.project);
    REQUIRE(pending.size() == 2);
    CHECK(pending[0].id == e2.id);
    CHECK(pending[1].id == e3.id);
  }

  TEST_CASE("knowledge by scope puts the user first") {
    World w;
    auto a = w.basic();
    w.participant("p2", 2);
    for (int i = 0; i < 5; ++i) entry(*w.store, "Project note " + std::to_string(i) + ".", KnowledgeScope::project(w.project), a.id);
    auto g = entry(*w.store, "Global note.", KnowledgeScope::global(), a.id);
    auto u = entry(*w.store, "User note.", KnowledgeScope::user("p1"), a.id);
    entry(*w.store, "Someone else.", KnowledgeScope::user("p2"), a.id);
    auto all = w.store->knowledge_by_scope("p1", w.project);
    REQUIRE(all.size() == 7);
    CHECK(all.front().id == u.id);
    CHECK(all.back().id == g.id);
    for (std::size_t i = 1; i < 6; ++i) CHECK(all[i].scope.kind == ScopeKind::project);
  }

  TEST_CASE("artifact processed flag CAS") {
    World w;
    w.basic();
    CHECK(w.store->compare_and_set_artifact_processed("rq-1", false, true));
    CHECK_FALSE(w.store->compare_and_set_artifact_processed("rq-1", false, true));
    CHECK(w.store->get<ResearchQuestionArtifact>("rq-1")->knowledge_processed);
    CHECK_THROWS_AS(w.store->compare_and_set_artifact_processed("nope", false, true), Error);
  }

  TEST_CASE("claims are FIFO and exclusive") {
    World w;
    CHECK_FALSE(w.store->claim_next_task("w"));
    auto t1 = queued_task(*w.store);
    auto t2 = queued_task(*w.store);
    auto c1 = w.store->claim_next_task("w1");
    REQUIRE(c1);
    CHECK(c1->id == t1.id);
    CHECK(c1->attempts == 1);
    CHECK(c1->status == TaskStatus::running);
    CHECK(w.store->claim_next_task("w2")->id == t2.id);
    CHECK_FALSE(w.store->claim_next_task("w3"));
  }

  TEST_CASE("two workers racing over one task") {
    for (int iter = 0; iter < 1000; ++iter) {
      World w;
      queued_task(*w.store);
      std::atomic<int> claims{0};
      auto race = [&](const char* name) {
        if (w.store->claim_next_task(name)) ++claims;
      };
      std::thread a(race, "a"), b(race, "b");
      a.join();
      b.join();
      REQUIRE(claims.load() == 1);
    }
  }

  TEST_CASE("task CAS honours status, attempts and legality") {
    World w;
    auto t = queued_task(*w.store);
    CHECK_FALSE(w.store->transition_task(t.id, TaskStatus::running, TaskStatus::completed));
    w.store->claim_next_task("w");
    CHECK_FALSE(w.store->transition_task(t.id, TaskStatus::running, TaskStatus::completed, 2));
    CHECK_THROWS_AS(w.store->transition_task(t.id, TaskStatus::running, TaskStatus::queued), Error);
    CHECK(w.store->transition_task(t.id, TaskStatus::running, TaskStatus::completed, 1,
                                   [](AgentTask& task) { task.output_data = Json{{"ok", true}}; }));
    auto done = *w.store->get<AgentTask>(t.id);
    CHECK(done.status == TaskStatus::completed);
    REQUIRE(done.history.size() == 2);
    for (const auto& h : done.history) CHECK(is_legal_transition(h.from, h.to));
    // missing output payload on completion is rejected
    auto t2 = queued_task(*w.store);
    w.store->claim_next_task("w");
    CHECK_THROWS_AS(w.store->transition_task(t2.id, TaskStatus::running, TaskStatus::completed), Error);
    CHECK(w.store->get<AgentTask>(t2.id)->status == TaskStatus::running);
  }

  TEST_CASE("task logs are gapless per task") {
    World w;
    auto t = queued_task(*w.store);
    auto first = w.store->append_task_log(t.id, LogType::info, "hello");
    CHECK(first.sequence_no == 1);
    for (int i = 0; i < 99; ++i) w.store->append_task_log(t.id, LogType::info, "line");
    StoreQuery q;
    q.task_id = t.id;
    auto logs = w.store->query<TaskLogEntry>(q);
    REQUIRE(logs.size() == 100);
    for (std::size_t i = 0; i < logs.size(); ++i) CHECK(logs[i].sequence_no == static_cast<std::int64_t>(i + 1));
    CHECK_THROWS_AS(w.store->append_task_log("task-missing", LogType::info, "x"), Error);
  }

  TEST_CASE("concurrent writers lose nothing") {
    World w;
    w.store = std::make_unique<Store>(std::make_shared<SystemClock>());
    auto a = w.basic();
    std::vector<std::thread> threads;
    std::mutex shadow_mu;
    std::vector<std::string> shadow;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 125; ++i) {
          PaperRecord p;
          p.id = "paper-w" + std::to_string(t) + "-" + std::to_string(i);
          p.title = "t";
          p.created_at = w.store->now();
          w.store->put(p);
          std::lock_guard lock(shadow_mu);
          shadow.push_back(p.id);
        }
      });
    }
    for (auto& th : threads) th.join();
    REQUIRE(shadow.size() == 1000);
    for (const auto& id : shadow) CHECK(w.store->get<PaperRecord>(id));
    CHECK(w.store->count<PaperRecord>() == 1001);
  }

  TEST_CASE("snapshot round-trip and write-through") {
    auto dir = std::filesystem::temp_directory_path() / "cmda_storage_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto file = dir / "store.json";
    std::string edit_id;
    {
      auto store = Store::open(file, std::make_shared<ManualClock>(testing::epoch()));
      World w;
      w.store = std::move(store);
      auto a = w.basic();
      edit_id = w.edit(a.id, "question", "How do novices read charts?").edit.id;
      entry(*w.store, "Specify the population.", KnowledgeScope::project(w.project), a.id);
      auto t = queued_task(*w.store);
      w.store->append_task_log(t.id, LogType::info, "one");
    }
    auto reopened = Store::open(file, std::make_shared<ManualClock>(testing::epoch()));
    CHECK(reopened->get<EditRecord>(edit_id));
    CHECK(reopened->get<ResearchQuestionArtifact>("rq-1")->current_question == "How do novices read charts?");
    CHECK(reopened->count<KnowledgeEntry>() == 1);
    // counters survive, so new ids never collide
    CHECK(reopened->next_id("edit") != edit_id);
    auto logs = reopened->query<TaskLogEntry>();
    REQUIRE(logs.size() == 1);
    CHECK(reopened->append_task_log(logs[0].task_id, LogType::info, "two").sequence_no == 2);

    auto snap = reopened->snapshot();
    CHECK(snap["tables"].contains("implicit_domain_knowledge"));
    CHECK(snap["tables"].contains("ai_entity_edits"));
    Store copy(std::make_shared<ManualClock>(testing::epoch()));
    copy.load_snapshot(snap);
    CHECK(copy.snapshot() == snap);
    CHECK_THROWS_AS(copy.load_snapshot(Json{{"format", "other"}}), Error);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("ids are sequential per prefix") {
    World w;
    CHECK(w.store->next_id("edit") == "edit-000001");
    CHECK(w.store->next_id("edit") == "edit-000002");
    CHECK(w.store->next_id("task") == "task-000001");
  }
}

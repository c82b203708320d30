#include <doctest.h>

#include <algorithm>
#include <random>

#include "cmda/context_assembler.hpp"
#include "support.hpp"

using namespace cmda;
using namespace cmda::context;
using testing::World;

namespace {

KnowledgeEntry put_entry(World& w, const std::string& id, const std::string& text, KnowledgeCategory cat,
                         KnowledgeScope scope, const std::string& by = "p1", const std::string& source = "rq-1") {
  KnowledgeEntry k;
  k.id = id;
  k.text = text;
  k.category = cat;
  k.scope = std::move(scope);
  k.source_question_ids = {source};
  k.created_at = w.store->now();
  k.created_by = by;
  w.store->put(k);
  return k;
}

}  // namespace

TEST_SUITE("context_assembler") {
  TEST_CASE("empty store") {
    World w;
    auto ctx = assemble_context(*w.store, "p1", w.project);
    CHECK(ctx.empty());
    CHECK(render_knowledge_block(ctx) == "");
  }

  TEST_CASE("user entries come first regardless of age") {
    World w;
    w.basic();
    auto p1 = put_entry(w, "k-a", "Project one.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project));
    auto p2 = put_entry(w, "k-b", "Project two.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project));
    auto u = put_entry(w, "k-c", "Mine.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::user("p1"));
    auto ctx = assemble_context(*w.store, "p1", w.project);
    REQUIRE(ctx.entries.size() == 3);
    CHECK(ctx.entries[0].id == u.id);
    CHECK(ctx.entries[1].id == p1.id);
    CHECK(ctx.entries[2].id == p2.id);
    // other participants' user entries are invisible
    CHECK(assemble_context(*w.store, "p2", w.project).entries.size() == 2);
  }

  TEST_CASE("ordering matches a (rank, time, id) oracle") {
    std::mt19937_64 rng(5);
    std::vector<KnowledgeEntry> entries;
    for (int i = 0; i < 200; ++i) {
      KnowledgeEntry k;
      k.id = "k-" + std::to_string(rng() % 1000);
      k.scope.kind = static_cast<ScopeKind>(rng() % 3);
      k.created_at = testing::epoch() + std::chrono::seconds(rng() % 20);
      k.category = kAllCategories[rng() % 3];
      k.source_question_ids = {"rq-" + std::to_string(rng() % 7)};
      entries.push_back(k);
    }
    auto ctx = make_context(entries);
    auto key = [](const KnowledgeEntry& e) { return std::make_tuple(scope_rank(e.scope.kind), e.created_at, e.id); };
    for (std::size_t i = 1; i < ctx.entries.size(); ++i) CHECK(key(ctx.entries[i - 1]) <= key(ctx.entries[i]));
    std::size_t total = ctx.count(KnowledgeCategory::conceptual_depth_changes) +
                        ctx.count(KnowledgeCategory::methodological_refinements) +
                        ctx.count(KnowledgeCategory::domain_terminology_evolution);
    CHECK(total == 200);
    CHECK(ctx.distinct_sources <= 7);
  }

  TEST_CASE("minimal render") {
    World w;
    w.basic();
    put_entry(w, "k-1", "Name the population.", KnowledgeCategory::domain_terminology_evolution,
              KnowledgeScope::project(w.project));
    auto block = render_knowledge_block(assemble_context(*w.store, "p1", w.project));
    CHECK(block ==
          "ACCUMULATED KNOWLEDGE FROM PREVIOUS PARTICIPANTS:\n"
          "\n"
          "Domain Terminology Evolution:\n"
          "- Name the population.\n");
  }

  TEST_CASE("five entry golden render is stable") {
    World w;
    w.basic();
    put_entry(w, "k-1", "Conceptual one.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project));
    put_entry(w, "k-2", "Method one.", KnowledgeCategory::methodological_refinements, KnowledgeScope::project(w.project));
    put_entry(w, "k-3", "Term one.", KnowledgeCategory::domain_terminology_evolution, KnowledgeScope::global());
    put_entry(w, "k-4", "Conceptual two.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::user("p1"));
    put_entry(w, "k-5", "Method two.", KnowledgeCategory::methodological_refinements, KnowledgeScope::project(w.project));
    auto ctx = assemble_context(*w.store, "p1", w.project);
    auto first = render_knowledge_block(ctx);
    CHECK(first == render_knowledge_block(assemble_context(*w.store, "p1", w.project)));
    CHECK(first ==
          "ACCUMULATED KNOWLEDGE FROM PREVIOUS PARTICIPANTS:\n"
          "\n"
          "Domain Terminology Evolution:\n"
          "- Term one.\n"
          "\n"
          "Methodological Refinements:\n"
          "- Method one.\n"
          "- Method two.\n"
          "\n"
          "Conceptual Depth Changes:\n"
          "- Conceptual two.\n"
          "- Conceptual one.\n");
    for (const auto& e : ctx.entries) CHECK(first.find(e.text) != std::string::npos);
  }

  TEST_CASE("cap drops global, then project, oldest first") {
    World w;
    w.basic();
    put_entry(w, "k-g1", "G1.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::global());
    put_entry(w, "k-p1", "P1.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project));
    put_entry(w, "k-g2", "G2.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::global());
    put_entry(w, "k-u1", "U1.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::user("p1"));
    put_entry(w, "k-p2", "P2.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project));
    auto ctx = assemble_context(*w.store, "p1", w.project, 2);
    CHECK(ctx.dropped == std::vector<std::string>{"k-g1", "k-g2", "k-p1"});
    REQUIRE(ctx.entries.size() == 2);
    CHECK(ctx.entries[0].id == "k-u1");
    CHECK(ctx.entries[1].id == "k-p2");
    CHECK(assemble_context(*w.store, "p1", w.project, 10).dropped.empty());
  }

  TEST_CASE("stats") {
    World w;
    CHECK(knowledge_stats(*w.store, w.project).total == 0);
    w.basic();
    w.participant("p2", 2);
    w.participant("q1", 1, "other");
    put_entry(w, "k-1", "A.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project), "p1");
    put_entry(w, "k-2", "B.", KnowledgeCategory::conceptual_depth_changes, KnowledgeScope::project(w.project), "p2");
    put_entry(w, "k-3", "C.", KnowledgeCategory::methodological_refinements, KnowledgeScope::user("p2"), "p2");
    put_entry(w, "k-4", "D.", KnowledgeCategory::domain_terminology_evolution, KnowledgeScope::user("q1"), "q1");
    put_entry(w, "k-5", "E.", KnowledgeCategory::domain_terminology_evolution, KnowledgeScope::global(), "p1");
    auto s = knowledge_stats(*w.store, w.project);
    CHECK(s.total == 3);
    CHECK(s.count(KnowledgeCategory::conceptual_depth_changes) == 2);
    CHECK(s.count(KnowledgeCategory::methodological_refinements) == 1);
    CHECK(s.count(KnowledgeCategory::domain_terminology_evolution) == 0);
    CHECK(s.per_participant.at("p2") == 2);
    auto j = s.to_json();
    CHECK(j["per_category"]["conceptual_depth_changes"] == 2);
  }
}

#include "cmda/context_assembler.hpp"

#include <algorithm>
#include <set>

namespace cmda::context {

int scope_rank(ScopeKind kind) {
  switch (kind) {
    case ScopeKind::user: return 0;
    case ScopeKind::project: return 1;
    case ScopeKind::global: return 2;
  }
  return 3;
}

AdaptiveContext make_context(std::vector<KnowledgeEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const KnowledgeEntry& a, const KnowledgeEntry& b) {
    auto ra = scope_rank(a.scope.kind), rb = scope_rank(b.scope.kind);
    if (ra != rb) return ra < rb;
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    return a.id < b.id;
  });
  AdaptiveContext ctx;
  std::set<std::string> sources;
  for (const auto& e : entries) {
    ++ctx.per_category[static_cast<std::size_t>(e.category)];
    sources.insert(e.source_question_ids.begin(), e.source_question_ids.end());
  }
  ctx.distinct_sources = sources.size();
  ctx.entries = std::move(entries);
  return ctx;
}

AdaptiveContext assemble_context(const Store& store, const std::string& participant_id,
                                 const std::string& project_id, std::optional<std::size_t> cap) {
  auto entries = store.knowledge_by_scope(participant_id, project_id);
  std::vector<std::string> dropped;
  if (cap) {
    // Sorted by precedence, so the first entry of the last scope group is the
    // oldest lowest-precedence one.
    auto ordered = make_context(std::move(entries)).entries;
    while (ordered.size() > *cap) {
      auto worst = scope_rank(ordered.back().scope.kind);
      auto it = std::find_if(ordered.begin(), ordered.end(),
                             [&](const KnowledgeEntry& e) { return scope_rank(e.scope.kind) == worst; });
      dropped.push_back(it->id);
      ordered.erase(it);
    }
    entries = std::move(ordered);
  }
  auto ctx = make_context(std::move(entries));
  ctx.dropped = std::move(dropped);
  return ctx;
}

std::string render_knowledge_block(const AdaptiveContext& ctx) {
  if (ctx.entries.empty()) return {};
  std::string out(kKnowledgeHeader);
  out += '\n';
  for (auto category : kAllCategories) {
    if (ctx.count(category) == 0) continue;
    out += '\n';
    out += category_title(category);
    out += ":\n";
    for (const auto& e : ctx.entries) {
      if (e.category != category) continue;
      out += "- ";
      out += e.text;
      out += '\n';
    }
  }
  return out;
}

Json KnowledgeStats::to_json() const {
  Json cats = Json::object();
  for (auto c : kAllCategories) cats[std::string(to_string(c))] = count(c);
  return Json{{"total", total}, {"per_category", cats}, {"per_participant", per_participant}};
}

KnowledgeStats knowledge_stats(const Store& store, const std::string& project_id) {
  StoreQuery pq;
  pq.project_id = project_id;
  std::set<std::string> members;
  for (const auto& p : store.query<Participant>(pq)) members.insert(p.id);

  KnowledgeStats stats;
  for (const auto& e : store.query<KnowledgeEntry>()) {
    bool in_project = (e.scope.kind == ScopeKind::project && e.scope.owner == project_id) ||
                      (e.scope.kind == ScopeKind::user && members.count(e.scope.owner));
    if (!in_project) continue;
    ++stats.per_category[static_cast<std::size_t>(e.category)];
    ++stats.total;
    ++stats.per_participant[e.created_by];
  }
  return stats;
}

}  // namespace cmda::context

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmda/domain.hpp"
#include "cmda/storage.hpp"

namespace cmda::context {

inline constexpr std::string_view kKnowledgeHeader = "ACCUMULATED KNOWLEDGE FROM PREVIOUS PARTICIPANTS:";

int scope_rank(ScopeKind kind);  // user 0, project 1, global 2

struct AdaptiveContext {
  std::vector<KnowledgeEntry> entries;  // (scope rank, created_at, id)
  std::array<std::size_t, 3> per_category{};
  std::size_t distinct_sources = 0;
  std::vector<std::string> dropped;  // ids removed by the size cap, in drop order

  std::size_t count(KnowledgeCategory c) const { return per_category[static_cast<std::size_t>(c)]; }
  bool empty() const { return entries.empty(); }
};

// Orders entries and fills in the derived counts.
AdaptiveContext make_context(std::vector<KnowledgeEntry> entries);

// Entries visible to the participant: their own user scope, the project scope,
// and global. With a cap, lowest-precedence entries go first (global, then
// project, then user; oldest first within a scope).
AdaptiveContext assemble_context(const Store& store, const std::string& participant_id,
                                 const std::string& project_id, std::optional<std::size_t> cap = std::nullopt);

// Header, then one heading per non-empty category with "- " bullets. Empty
// context renders as "".
std::string render_knowledge_block(const AdaptiveContext& ctx);

struct KnowledgeStats {
  std::array<std::size_t, 3> per_category{};
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_participant;

  std::size_t count(KnowledgeCategory c) const { return per_category[static_cast<std::size_t>(c)]; }
  Json to_json() const;
};

// Entries in the project's scope plus user-scope entries created by the
// project's participants.
KnowledgeStats knowledge_stats(const Store& store, const std::string& project_id);

}  // namespace cmda::context

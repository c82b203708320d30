#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cmda/clock.hpp"
#include "cmda/domain.hpp"
#include "cmda/errors.hpp"

namespace cmda {

// Filter set shared by every entity kind. Filters that do not apply to a kind
// are ignored for it. Results are ordered by created_at ascending, ties broken
// by primary key.
struct StoreQuery {
  std::optional<std::string> id;
  std::optional<std::string> paper_id;
  std::optional<std::string> project_id;
  std::optional<std::string> session_id;
  std::optional<std::string> participant_id;
  std::optional<std::string> entity_id;
  std::optional<std::string> task_id;
  std::optional<bool> processed;
  std::optional<ScopeKind> scope;
  std::optional<std::size_t> limit;
};

using Entity = std::variant<PaperRecord, ResearchQuestionArtifact, EditRecord, GenerationMetadata, KnowledgeEntry,
                            Participant, EvaluationSession, AgentTask, TaskLogEntry, TaskAction, ApiLog, TraceRecord,
                            UserInteraction>;

std::string log_key(const std::string& task_id, std::int64_t sequence_no);

// Table names follow the relational schema (see docs/schema.sql).
template <typename T>
struct TableTraits;

#define CMDA_TABLE(Type, Name, KeyExpr, TimeExpr, Immutable)          \
  template <>                                                         \
  struct TableTraits<Type> {                                          \
    static constexpr std::string_view name = Name;                    \
    static constexpr bool immutable = Immutable;                      \
    static std::string key(const Type& v) { return KeyExpr; }         \
    static Timestamp created([[maybe_unused]] const Type& v) { return TimeExpr; } \
  };

CMDA_TABLE(PaperRecord, "publication_raw", v.id, v.created_at, false)
CMDA_TABLE(ResearchQuestionArtifact, "evaluation_research_questions", v.id, v.created_at, false)
CMDA_TABLE(EditRecord, "ai_entity_edits", v.id, v.created_at, true)
CMDA_TABLE(GenerationMetadata, "ai_entity_metadata", v.entity_id, v.created_at, true)
CMDA_TABLE(KnowledgeEntry, "implicit_domain_knowledge", v.id, v.created_at, true)
CMDA_TABLE(Participant, "evaluation_participants", v.id, Timestamp{}, false)
CMDA_TABLE(EvaluationSession, "evaluation_sessions", v.id, v.started_at, false)
CMDA_TABLE(AgentTask, "agent_tasks", v.id, v.created_at, false)
CMDA_TABLE(TaskLogEntry, "project_agent_log", log_key(v.task_id, v.sequence_no), v.created_at, true)
CMDA_TABLE(TaskAction, "task_action", v.id, v.started_at, false)
CMDA_TABLE(ApiLog, "api_logs", v.id, v.created_at, true)
CMDA_TABLE(TraceRecord, "llm_traces", v.trace_id, v.created_at, true)
CMDA_TABLE(UserInteraction, "user_interactions", v.id, v.created_at, true)

#undef CMDA_TABLE

namespace detail {

template <typename T>
struct Table {
  std::map<std::string, T> rows;
};

template <typename... Ts>
struct TableSet {
  std::tuple<Table<Ts>...> tables;

  template <typename T>
  Table<T>& of() {
    return std::get<Table<T>>(tables);
  }
  template <typename T>
  const Table<T>& of() const {
    return std::get<Table<T>>(tables);
  }
};

struct State {
  TableSet<PaperRecord, ResearchQuestionArtifact, EditRecord, GenerationMetadata, KnowledgeEntry, Participant,
           EvaluationSession, AgentTask, TaskLogEntry, TaskAction, ApiLog, TraceRecord, UserInteraction>
      data;
  std::map<std::string, std::uint64_t, std::less<>> id_counters;
  std::map<std::string, std::int64_t> log_sequence;  // last sequence_no per task
};

// Read access used by filter predicates that need joins.
class Lookup {
 public:
  virtual ~Lookup() = default;
  virtual std::optional<ResearchQuestionArtifact> artifact(const std::string& id) const = 0;
  virtual std::optional<EvaluationSession> session(const std::string& id) const = 0;
  virtual std::optional<Participant> participant(const std::string& id) const = 0;
};

bool matches(const PaperRecord& v, const StoreQuery& q, const Lookup& l);
bool matches(const ResearchQuestionArtifact& v, const StoreQuery& q, const Lookup& l);
bool matches(const EditRecord& v, const StoreQuery& q, const Lookup& l);
bool matches(const GenerationMetadata& v, const StoreQuery& q, const Lookup& l);
bool matches(const KnowledgeEntry& v, const StoreQuery& q, const Lookup& l);
bool matches(const Participant& v, const StoreQuery& q, const Lookup& l);
bool matches(const EvaluationSession& v, const StoreQuery& q, const Lookup& l);
bool matches(const AgentTask& v, const StoreQuery& q, const Lookup& l);
bool matches(const TaskLogEntry& v, const StoreQuery& q, const Lookup& l);
bool matches(const TaskAction& v, const StoreQuery& q, const Lookup& l);
bool matches(const ApiLog& v, const StoreQuery& q, const Lookup& l);
bool matches(const TraceRecord& v, const StoreQuery& q, const Lookup& l);
bool matches(const UserInteraction& v, const StoreQuery& q, const Lookup& l);

template <typename T>
void sort_rows(std::vector<T>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const T& a, const T& b) {
    const auto ta = TableTraits<T>::created(a);
    const auto tb = TableTraits<T>::created(b);
    if (ta != tb) return ta < tb;
    return TableTraits<T>::key(a) < TableTraits<T>::key(b);
  });
}

}  // namespace detail

class Store;

// Staged writes applied atomically when the enclosing Store::transact returns.
// Reads see staged values first (read-your-writes).
class Transaction : public detail::Lookup {
 public:
  template <typename T>
  std::optional<T> get(const std::string& key) const {
    const auto& staged = staged_.of<T>().rows;
    if (auto it = staged.find(key); it != staged.end()) return it->second;
    const auto& base = base_.data.of<T>().rows;
    if (auto it = base.find(key); it != base.end()) return it->second;
    return std::nullopt;
  }

  template <typename T>
  std::vector<T> query(const StoreQuery& q = {}) const {
    std::vector<T> rows;
    const auto& staged = staged_.of<T>().rows;
    for (const auto& [key, row] : base_.data.of<T>().rows) {
      if (staged.count(key)) continue;
      if (detail::matches(row, q, *this)) rows.push_back(row);
    }
    for (const auto& [key, row] : staged) {
      if (detail::matches(row, q, *this)) rows.push_back(row);
    }
    detail::sort_rows(rows);
    if (q.limit && rows.size() > *q.limit) rows.resize(*q.limit);
    return rows;
  }

  // Validates against type invariants and the store contract; throws before
  // anything is staged.
  template <typename T>
  void put(const T& value);

  void put(const Entity& value) {
    std::visit([this](const auto& v) { put(v); }, value);
  }

  Timestamp now();
  std::string next_id(std::string_view prefix);

  std::optional<ResearchQuestionArtifact> artifact(const std::string& id) const override {
    return get<ResearchQuestionArtifact>(id);
  }
  std::optional<EvaluationSession> session(const std::string& id) const override {
    return get<EvaluationSession>(id);
  }
  std::optional<Participant> participant(const std::string& id) const override { return get<Participant>(id); }

 private:
  friend class Store;
  Transaction(Store& store, detail::State& base) : store_(store), base_(base) {}

  void check(const PaperRecord& v) const;
  void check(const ResearchQuestionArtifact& v) const;
  void check(const EditRecord& v) const;
  void check(const GenerationMetadata& v) const;
  void check(const KnowledgeEntry& v) const;
  void check(const Participant& v) const;
  void check(const EvaluationSession& v) const;
  void check(const AgentTask& v) const;
  void check(const TaskLogEntry& v) const;
  void check(const TaskAction& v) const;
  void check(const ApiLog& v) const;
  void check(const TraceRecord& v) const;
  void check(const UserInteraction& v) const;

  void commit();

  Store& store_;
  detail::State& base_;
  decltype(detail::State{}.data) staged_;
  bool dirty_ = false;
};

// Single source of truth. Concurrent readers; writers serialized. Every write
// goes through a Transaction so multi-entity updates are all-or-nothing. When
// opened on a snapshot file every committed transaction is written through.
class Store : public detail::Lookup {
 public:
  explicit Store(std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

  // Loads the snapshot if the file exists and persists every later commit to it.
  static std::unique_ptr<Store> open(const std::filesystem::path& snapshot,
                                     std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

  Timestamp now() { return clock_->now(); }
  Clock& clock() { return *clock_; }
  std::string next_id(std::string_view prefix);

  template <typename F>
  decltype(auto) transact(F&& fn) {
    std::unique_lock lock(mu_);
    Transaction tx(*this, state_);
    if constexpr (std::is_void_v<std::invoke_result_t<F, Transaction&>>) {
      fn(tx);
      tx.commit();
    } else {
      auto result = fn(tx);
      tx.commit();
      return result;
    }
  }

  template <typename T>
  std::string put(const T& value) {
    transact([&](Transaction& tx) { tx.put(value); });
    return TableTraits<T>::key(value);
  }
  std::string put(const Entity& value);

  template <typename T>
  std::optional<T> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    const auto& rows = state_.data.of<T>().rows;
    if (auto it = rows.find(key); it != rows.end()) return it->second;
    return std::nullopt;
  }

  template <typename T>
  std::vector<T> query(const StoreQuery& q = {}) const {
    std::shared_lock lock(mu_);
    return query_locked<T>(q);
  }

  template <typename T>
  std::size_t count() const {
    std::shared_lock lock(mu_);
    return state_.data.of<T>().rows.size();
  }

  // Unprocessed edits whose artifact belongs to a session of the project,
  // created_at ascending. Unknown project -> empty.
  std::vector<EditRecord> query_unprocessed_edits(const std::string& project_id) const;

  // User scope first, then project, then global; created_at then id within each.
  std::vector<KnowledgeEntry> knowledge_by_scope(const std::string& participant_id,
                                                 const std::string& project_id) const;

  // Idempotent; returns how many records actually flipped.
  std::size_t mark_edits_processed(std::span<const std::string> edit_ids);

  bool compare_and_set_artifact_processed(const std::string& artifact_id, bool expected, bool desired);

  // Oldest queued task (created_at, id) -> running with attempts + 1.
  std::optional<AgentTask> claim_next_task(const std::string& worker_id);

  // Atomic status CAS. `expected_attempts`, when given, must also match (lets a
  // worker that lost its lease detect it). `mutate` may set payload fields.
  bool transition_task(const std::string& task_id, TaskStatus expected, TaskStatus desired,
                       std::optional<int> expected_attempts = std::nullopt,
                       const std::function<void(AgentTask&)>& mutate = {});

  TaskLogEntry append_task_log(const std::string& task_id, LogType type, std::string message);

  Json snapshot() const;
  void load_snapshot(const Json& snapshot);

  std::optional<ResearchQuestionArtifact> artifact(const std::string& id) const override;
  std::optional<EvaluationSession> session(const std::string& id) const override;
  std::optional<Participant> participant(const std::string& id) const override;

 private:
  friend class Transaction;

  template <typename T>
  std::vector<T> query_locked(const StoreQuery& q) const {
    std::vector<T> rows;
    LockedLookup lookup{state_};
    for (const auto& [key, row] : state_.data.of<T>().rows) {
      if (detail::matches(row, q, lookup)) rows.push_back(row);
    }
    detail::sort_rows(rows);
    if (q.limit && rows.size() > *q.limit) rows.resize(*q.limit);
    return rows;
  }

  struct LockedLookup : detail::Lookup {
    explicit LockedLookup(const detail::State& s) : state(s) {}
    const detail::State& state;
    std::optional<ResearchQuestionArtifact> artifact(const std::string& id) const override;
    std::optional<EvaluationSession> session(const std::string& id) const override;
    std::optional<Participant> participant(const std::string& id) const override;
  };

  std::string next_id_locked(std::string_view prefix);
  Json snapshot_locked() const;
  void persist_locked();

  mutable std::shared_mutex mu_;
  mutable std::mutex id_mu_;
  detail::State state_;
  std::shared_ptr<Clock> clock_;
  std::optional<std::filesystem::path> snapshot_path_;
};

template <typename T>
void Transaction::put(const T& value) {
  check(value);
  staged_.of<T>().rows.insert_or_assign(TableTraits<T>::key(value), value);
  dirty_ = true;
}

}  // namespace cmda

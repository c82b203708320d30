#include "cmda/storage.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cmda {

std::string log_key(const std::string& task_id, std::int64_t sequence_no) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%012lld", static_cast<long long>(sequence_no));
  return task_id + "#" + buf;
}

namespace detail {

namespace {

template <typename V>
bool eq(const std::optional<std::string>& filter, const V& value) {
  return !filter || *filter == value;
}

std::optional<std::string> project_of_session(const std::string& session_id, const Lookup& l) {
  auto s = l.session(session_id);
  if (!s) return std::nullopt;
  return s->project_id;
}

}  // namespace

bool matches(const PaperRecord& v, const StoreQuery& q, const Lookup&) { return eq(q.id, v.id); }

bool matches(const ResearchQuestionArtifact& v, const StoreQuery& q, const Lookup& l) {
  if (!eq(q.id, v.id) || !eq(q.paper_id, v.paper_id) || !eq(q.session_id, v.session_id)) return false;
  if (q.task_id && v.task_id != q.task_id) return false;
  if (q.processed && v.knowledge_processed != *q.processed) return false;
  if (q.project_id && project_of_session(v.session_id, l) != q.project_id) return false;
  if (q.participant_id) {
    auto s = l.session(v.session_id);
    if (!s || s->participant_id != *q.participant_id) return false;
  }
  return true;
}

bool matches(const EditRecord& v, const StoreQuery& q, const Lookup& l) {
  if (!eq(q.id, v.id) || !eq(q.entity_id, v.entity_id)) return false;
  if (q.processed && v.processed != *q.processed) return false;
  if (q.project_id || q.session_id) {
    auto a = l.artifact(v.entity_id);
    if (!a) return false;
    if (!eq(q.session_id, a->session_id)) return false;
    if (q.project_id && project_of_session(a->session_id, l) != q.project_id) return false;
  }
  return true;
}

bool matches(const GenerationMetadata& v, const StoreQuery& q, const Lookup&) {
  return eq(q.entity_id, v.entity_id) && eq(q.id, v.entity_id);
}

bool matches(const KnowledgeEntry& v, const StoreQuery& q, const Lookup&) {
  if (!eq(q.id, v.id) || !eq(q.participant_id, v.created_by)) return false;
  if (q.scope && v.scope.kind != *q.scope) return false;
  if (q.project_id && !(v.scope.kind == ScopeKind::project && v.scope.owner == *q.project_id)) return false;
  return true;
}

bool matches(const Participant& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && eq(q.project_id, v.project_id);
}

bool matches(const EvaluationSession& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && eq(q.participant_id, v.participant_id) && eq(q.project_id, v.project_id) &&
         eq(q.paper_id, v.paper_id);
}

bool matches(const AgentTask& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && eq(q.task_id, v.id);
}

bool matches(const TaskLogEntry& v, const StoreQuery& q, const Lookup&) { return eq(q.task_id, v.task_id); }

bool matches(const TaskAction& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && eq(q.task_id, v.task_id);
}

bool matches(const ApiLog& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && (!q.task_id || v.task_id == q.task_id);
}

bool matches(const TraceRecord& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.trace_id) && (!q.task_id || v.task_id == q.task_id);
}

bool matches(const UserInteraction& v, const StoreQuery& q, const Lookup&) {
  return eq(q.id, v.id) && eq(q.participant_id, v.participant_id) && eq(q.entity_id, v.entity_id);
}

}  // namespace detail

// -- Transaction -----------------------------------------------------------------

namespace {

[[noreturn]] void reject(std::string_view table, const std::vector<std::string>& violations) {
  std::string msg = std::string(table) + ": invariant violation";
  if (!violations.empty()) msg += " (" + violations.front() + ")";
  std::string field;
  if (!violations.empty()) {
    auto colon = violations.front().find(':');
    if (colon != std::string::npos) field = violations.front().substr(0, colon);
  }
  throw Error(ErrorCode::validation_failed, msg, field, violations);
}

template <typename T>
void validate_or_reject(const T& v) {
  auto violations = validate(v);
  if (!violations.empty()) reject(TableTraits<T>::name, violations);
}

[[noreturn]] void id_conflict(std::string_view table, const std::string& key) {
  throw Error(ErrorCode::conflict, std::string(table) + ": id '" + key + "' already exists and is immutable", "id");
}

}  // namespace

Timestamp Transaction::now() { return store_.now(); }

std::string Transaction::next_id(std::string_view prefix) { return store_.next_id_locked(prefix); }

void Transaction::check(const PaperRecord& v) const { validate_or_reject(v); }

void Transaction::check(const ResearchQuestionArtifact& v) const {
  validate_or_reject(v);
  if (auto existing = get<ResearchQuestionArtifact>(v.id)) {
    if (existing->initial_question != v.initial_question ||
        existing->initial_contribution != v.initial_contribution) {
      throw Error(ErrorCode::conflict, "evaluation_research_questions: initial state is immutable", "initial_question");
    }
    if (existing->paper_id != v.paper_id || existing->session_id != v.session_id) {
      throw Error(ErrorCode::conflict, "evaluation_research_questions: paper/session links are immutable");
    }
  } else {
    if (!get<EvaluationSession>(v.session_id)) {
      throw Error(ErrorCode::not_found, "unknown session '" + v.session_id + "'", "session_id");
    }
    if (!get<PaperRecord>(v.paper_id)) {
      throw Error(ErrorCode::not_found, "unknown paper '" + v.paper_id + "'", "paper_id");
    }
  }
}

void Transaction::check(const EditRecord& v) const {
  validate_or_reject(v);
  if (auto existing = get<EditRecord>(v.id)) {
    EditRecord relaxed = *existing;
    relaxed.processed = v.processed;
    if (!(relaxed == v) || (existing->processed && !v.processed)) {
      id_conflict(TableTraits<EditRecord>::name, v.id);
    }
    return;
  }
  if (v.entity_type == EntityType::research_question || v.entity_type == EntityType::contribution) {
    if (!get<ResearchQuestionArtifact>(v.entity_id)) {
      throw Error(ErrorCode::not_found, "unknown entity '" + v.entity_id + "'", "entity_id");
    }
  }
}

void Transaction::check(const GenerationMetadata& v) const {
  validate_or_reject(v);
  if (get<GenerationMetadata>(v.entity_id)) id_conflict(TableTraits<GenerationMetadata>::name, v.entity_id);
}

void Transaction::check(const KnowledgeEntry& v) const {
  auto result = validate_knowledge_entry(v, [this](const std::string& id) {
    return get<ResearchQuestionArtifact>(id).has_value();
  });
  auto basic = validate(v);
  for (auto& msg : basic) {
    if (std::find(result.violations.begin(), result.violations.end(), msg) == result.violations.end()) {
      result.violations.push_back(msg);
    }
  }
  if (!result.ok()) reject(TableTraits<KnowledgeEntry>::name, result.violations);
  if (get<KnowledgeEntry>(v.id)) id_conflict(TableTraits<KnowledgeEntry>::name, v.id);
}

void Transaction::check(const Participant& v) const {
  validate_or_reject(v);
  StoreQuery q;
  q.project_id = v.project_id;
  for (const auto& other : query<Participant>(q)) {
    if (other.id != v.id && other.order_index == v.order_index) {
      throw Error(ErrorCode::conflict, "evaluation_participants: order_index " + std::to_string(v.order_index) +
                                           " already used in project " + v.project_id,
                  "order_index");
    }
  }
}

void Transaction::check(const EvaluationSession& v) const {
  validate_or_reject(v);
  if (!get<Participant>(v.participant_id)) {
    throw Error(ErrorCode::not_found, "unknown participant '" + v.participant_id + "'", "participant_id");
  }
}

void Transaction::check(const AgentTask& v) const {
  validate_or_reject(v);
  if (auto existing = get<AgentTask>(v.id)) {
    if (existing->status != v.status && !is_legal_transition(existing->status, v.status)) {
      throw Error(ErrorCode::conflict, "agent_tasks: illegal transition " + std::string(to_string(existing->status)) +
                                           " -> " + std::string(to_string(v.status)),
                  "status");
    }
    if (existing->task_type != v.task_type) {
      throw Error(ErrorCode::conflict, "agent_tasks: task_type is immutable", "task_type");
    }
  } else if (v.status != TaskStatus::queued || v.attempts != 0) {
    throw Error(ErrorCode::validation_failed, "agent_tasks: new tasks start queued with zero attempts", "status");
  }
}

void Transaction::check(const TaskLogEntry& v) const {
  validate_or_reject(v);
  if (get<TaskLogEntry>(TableTraits<TaskLogEntry>::key(v))) {
    id_conflict(TableTraits<TaskLogEntry>::name, TableTraits<TaskLogEntry>::key(v));
  }
}

void Transaction::check(const TaskAction& v) const { validate_or_reject(v); }

void Transaction::check(const ApiLog& v) const {
  validate_or_reject(v);
  if (get<ApiLog>(v.id)) id_conflict(TableTraits<ApiLog>::name, v.id);
}

void Transaction::check(const TraceRecord& v) const {
  validate_or_reject(v);
  if (get<TraceRecord>(v.trace_id)) id_conflict(TableTraits<TraceRecord>::name, v.trace_id);
}

void Transaction::check(const UserInteraction& v) const {
  validate_or_reject(v);
  if (get<UserInteraction>(v.id)) id_conflict(TableTraits<UserInteraction>::name, v.id);
}

void Transaction::commit() {
  if (!dirty_) return;
  std::apply(
      [this](auto&... staged_tables) {
        (
            [&](auto& staged) {
              using T = typename std::decay_t<decltype(staged.rows)>::mapped_type;
              auto& rows = base_.data.template of<T>().rows;
              for (auto& [key, value] : staged.rows) {
                if constexpr (std::is_same_v<T, TaskLogEntry>) {
                  auto& last = base_.log_sequence[value.task_id];
                  last = std::max(last, value.sequence_no);
                }
                rows.insert_or_assign(key, std::move(value));
              }
              staged.rows.clear();
            }(staged_tables),
            ...);
      },
      staged_.tables);
  dirty_ = false;
  store_.persist_locked();
}

// -- Store -----------------------------------------------------------------------

Store::Store(std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {}

std::unique_ptr<Store> Store::open(const std::filesystem::path& snapshot, std::shared_ptr<Clock> clock) {
  auto store = std::make_unique<Store>(std::move(clock));
  if (std::filesystem::exists(snapshot)) {
    std::ifstream in(snapshot);
    if (!in) throw Error(ErrorCode::internal, "cannot read store snapshot " + snapshot.string());
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::validation_failed, "store snapshot is not valid JSON: " + std::string(e.what()));
    }
    store->load_snapshot(j);
  }
  store->snapshot_path_ = snapshot;
  return store;
}

std::string Store::next_id(std::string_view prefix) { return next_id_locked(prefix); }

std::string Store::next_id_locked(std::string_view prefix) {
  std::lock_guard lock(id_mu_);
  auto it = state_.id_counters.find(prefix);
  if (it == state_.id_counters.end()) it = state_.id_counters.emplace(std::string(prefix), 0).first;
  const auto n = ++it->second;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%06llu", static_cast<unsigned long long>(n));
  return std::string(prefix) + buf;
}

std::string Store::put(const Entity& value) {
  return std::visit([this](const auto& v) { return put(v); }, value);
}

std::vector<EditRecord> Store::query_unprocessed_edits(const std::string& project_id) const {
  StoreQuery q;
  q.project_id = project_id;
  q.processed = false;
  return query<EditRecord>(q);
}

std::vector<KnowledgeEntry> Store::knowledge_by_scope(const std::string& participant_id,
                                                      const std::string& project_id) const {
  std::shared_lock lock(mu_);
  std::vector<KnowledgeEntry> user, project, global;
  for (const auto& [id, e] : state_.data.of<KnowledgeEntry>().rows) {
    switch (e.scope.kind) {
      case ScopeKind::user:
        if (!participant_id.empty() && e.scope.owner == participant_id) user.push_back(e);
        break;
      case ScopeKind::project:
        if (!project_id.empty() && e.scope.owner == project_id) project.push_back(e);
        break;
      case ScopeKind::global:
        global.push_back(e);
        break;
    }
  }
  detail::sort_rows(user);
  detail::sort_rows(project);
  detail::sort_rows(global);
  user.insert(user.end(), project.begin(), project.end());
  user.insert(user.end(), global.begin(), global.end());
  return user;
}

std::size_t Store::mark_edits_processed(std::span<const std::string> edit_ids) {
  return transact([&](Transaction& tx) {
    std::size_t flipped = 0;
    for (const auto& id : edit_ids) {
      auto edit = tx.get<EditRecord>(id);
      if (!edit) throw Error(ErrorCode::not_found, "unknown edit '" + id + "'", "id");
      if (edit->processed) continue;
      edit->processed = true;
      tx.put(*edit);
      ++flipped;
    }
    return flipped;
  });
}

bool Store::compare_and_set_artifact_processed(const std::string& artifact_id, bool expected, bool desired) {
  return transact([&](Transaction& tx) {
    auto a = tx.get<ResearchQuestionArtifact>(artifact_id);
    if (!a) throw Error(ErrorCode::not_found, "unknown artifact '" + artifact_id + "'", "id");
    if (a->knowledge_processed != expected) return false;
    a->knowledge_processed = desired;
    tx.put(*a);
    return true;
  });
}

std::optional<AgentTask> Store::claim_next_task(const std::string& worker_id) {
  return transact([&](Transaction& tx) -> std::optional<AgentTask> {
    const AgentTask* oldest = nullptr;
    for (const auto& [id, t] : state_.data.of<AgentTask>().rows) {
      if (t.status != TaskStatus::queued) continue;
      if (!oldest || t.created_at < oldest->created_at ||
          (t.created_at == oldest->created_at && t.id < oldest->id)) {
        oldest = &t;
      }
    }
    if (!oldest) return std::nullopt;
    AgentTask claimed = *oldest;
    const auto now = clock_->now();
    claimed.status = TaskStatus::running;
    claimed.attempts += 1;
    claimed.worker_id = worker_id;
    claimed.claimed_at = now;
    claimed.history.push_back({TaskStatus::queued, TaskStatus::running, now});
    tx.put(claimed);
    return claimed;
  });
}

bool Store::transition_task(const std::string& task_id, TaskStatus expected, TaskStatus desired,
                            std::optional<int> expected_attempts, const std::function<void(AgentTask&)>& mutate) {
  return transact([&](Transaction& tx) {
    auto task = tx.get<AgentTask>(task_id);
    if (!task) throw Error(ErrorCode::not_found, "unknown task '" + task_id + "'", "task_id");
    if (task->status != expected) return false;
    if (expected_attempts && task->attempts != *expected_attempts) return false;
    if (!is_legal_transition(expected, desired)) {
      throw Error(ErrorCode::conflict, "illegal task transition " + std::string(to_string(expected)) + " -> " +
                                           std::string(to_string(desired)));
    }
    task->status = desired;
    task->history.push_back({expected, desired, clock_->now()});
    if (desired != TaskStatus::completed) task->output_data.reset();
    if (desired != TaskStatus::failed) task->error_message.reset();
    if (mutate) mutate(*task);
    tx.put(*task);
    return true;
  });
}

TaskLogEntry Store::append_task_log(const std::string& task_id, LogType type, std::string message) {
  return transact([&](Transaction& tx) {
    if (!tx.get<AgentTask>(task_id)) {
      throw Error(ErrorCode::not_found, "unknown task '" + task_id + "'", "task_id");
    }
    TaskLogEntry entry;
    entry.task_id = task_id;
    entry.sequence_no = state_.log_sequence[task_id] + 1;
    entry.log_type = type;
    entry.message = std::move(message);
    entry.created_at = clock_->now();
    tx.put(entry);
    return entry;
  });
}

std::optional<ResearchQuestionArtifact> Store::artifact(const std::string& id) const {
  return get<ResearchQuestionArtifact>(id);
}
std::optional<EvaluationSession> Store::session(const std::string& id) const { return get<EvaluationSession>(id); }
std::optional<Participant> Store::participant(const std::string& id) const { return get<Participant>(id); }

std::optional<ResearchQuestionArtifact> Store::LockedLookup::artifact(const std::string& id) const {
  const auto& rows = state.data.of<ResearchQuestionArtifact>().rows;
  if (auto it = rows.find(id); it != rows.end()) return it->second;
  return std::nullopt;
}
std::optional<EvaluationSession> Store::LockedLookup::session(const std::string& id) const {
  const auto& rows = state.data.of<EvaluationSession>().rows;
  if (auto it = rows.find(id); it != rows.end()) return it->second;
  return std::nullopt;
}
std::optional<Participant> Store::LockedLookup::participant(const std::string& id) const {
  const auto& rows = state.data.of<Participant>().rows;
  if (auto it = rows.find(id); it != rows.end()) return it->second;
  return std::nullopt;
}

// -- snapshot --------------------------------------------------------------------

namespace {

constexpr std::string_view kSnapshotFormat = "cmda-store/1";

Json reference_tables() {
  Json task_types = Json::array();
  task_types.push_back({{"code", "fetch_paper_content"}, {"label", "Paper retrieval"}});
  task_types.push_back({{"code", "generate_evaluation_questions"}, {"label", "Research question generation"}});
  task_types.push_back({{"code", "extract_implicit_knowledge"}, {"label", "Knowledge extraction"}});
  Json action_types = Json::array();
  action_types.push_back({{"code", "fetch"}, {"label", "Document retrieval"}});
  action_types.push_back({{"code", "extraction"}, {"label", "Knowledge extraction"}});
  action_types.push_back({{"code", "generation"}, {"label", "Artifact generation"}});
  return Json{{"task_type", task_types}, {"action_type", action_types}};
}

}  // namespace

Json Store::snapshot() const {
  std::shared_lock lock(mu_);
  return snapshot_locked();
}

Json Store::snapshot_locked() const {
  Json tables = Json::object();
  std::apply(
      [&](const auto&... table) {
        (
            [&](const auto& t) {
              using T = typename std::decay_t<decltype(t.rows)>::mapped_type;
              Json rows = Json::array();
              for (const auto& [key, row] : t.rows) {
                Json r;
                to_json(r, row);
                rows.push_back(std::move(r));
              }
              tables[std::string(TableTraits<T>::name)] = std::move(rows);
            }(table),
            ...);
      },
      state_.data.tables);
  Json counters = Json::object();
  {
    std::lock_guard id_lock(id_mu_);
    for (const auto& [prefix, n] : state_.id_counters) counters[prefix] = n;
  }
  auto refs = reference_tables();
  tables["task_type"] = refs["task_type"];
  tables["action_type"] = refs["action_type"];
  return Json{{"format", kSnapshotFormat}, {"id_counters", counters}, {"tables", tables}};
}

void Store::load_snapshot(const Json& snapshot) {
  if (!snapshot.is_object() || snapshot.value("format", "") != kSnapshotFormat) {
    throw Error(ErrorCode::validation_failed, "unrecognized store snapshot format");
  }
  detail::State fresh;
  const Json& tables = snapshot.at("tables");
  std::apply(
      [&](auto&... table) {
        (
            [&](auto& t) {
              using T = typename std::decay_t<decltype(t.rows)>::mapped_type;
              auto it = tables.find(std::string(TableTraits<T>::name));
              if (it == tables.end()) return;
              for (const auto& row : *it) {
                T value = decode<T>(row);
                auto violations = validate(value);
                if (!violations.empty()) reject(TableTraits<T>::name, violations);
                if constexpr (std::is_same_v<T, TaskLogEntry>) {
                  auto& last = fresh.log_sequence[value.task_id];
                  last = std::max(last, value.sequence_no);
                }
                t.rows.insert_or_assign(TableTraits<T>::key(value), std::move(value));
              }
            }(table),
            ...);
      },
      fresh.data.tables);
  if (auto c = snapshot.find("id_counters"); c != snapshot.end()) {
    for (const auto& [prefix, n] : c->items()) fresh.id_counters[prefix] = n.get<std::uint64_t>();
  }
  std::unique_lock lock(mu_);
  std::lock_guard id_lock(id_mu_);
  state_ = std::move(fresh);
}

void Store::persist_locked() {
  if (!snapshot_path_) return;
  const auto tmp = snapshot_path_->string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::internal, "cannot write store snapshot " + tmp);
    out << snapshot_locked().dump(1);
  }
  std::filesystem::rename(tmp, *snapshot_path_);
}

}  // namespace cmda

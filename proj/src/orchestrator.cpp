#include "cmda/orchestrator.hpp"

#include <random>

#include "cmda/errors.hpp"

namespace cmda::orchestrator {

namespace {

void require_string(const Json& input, const char* field, std::vector<std::string>& out) {
  auto it = input.find(field);
  if (it == input.end()) {
    out.push_back(std::string(field) + ": required field missing");
  } else if (!it->is_string() || it->get<std::string>().empty()) {
    out.push_back(std::string(field) + ": must be a non-empty string");
  }
}

std::string field_of(const std::string& violation) { return violation.substr(0, violation.find(':')); }

}  // namespace

std::vector<std::string> validate_payload(TaskType type, const Json& input) {
  std::vector<std::string> out;
  if (!input.is_object()) {
    out.push_back("input_data: must be a JSON object");
    return out;
  }
  switch (type) {
    case TaskType::fetch_paper_content:
      require_string(input, "paper_id", out);
      break;
    case TaskType::generate_evaluation_questions:
      require_string(input, "paper_id", out);
      require_string(input, "session_id", out);
      require_string(input, "participant_id", out);
      if (auto it = input.find("count"); it != input.end()) {
        if (!it->is_number_integer() || it->get<int>() < 1 || it->get<int>() > 10) {
          out.push_back("count: must be an integer in 1..10");
        }
      }
      break;
    case TaskType::extract_implicit_knowledge:
      require_string(input, "project_id", out);
      break;
  }
  return out;
}

TaskEngine::TaskEngine(Store& store, llm::Gateway& gateway, std::shared_ptr<fetch::DocumentFetcher> fetcher,
                       EngineConfig config)
    : store_(store), gateway_(gateway), fetcher_(std::move(fetcher)), config_(std::move(config)) {}

std::string TaskEngine::create_task(std::string_view task_type, const Json& input) {
  auto type = parse_task_type(task_type);
  if (!type) throw Error(ErrorCode::invalid_argument, "unknown task_type '" + std::string(task_type) + "'", "task_type");
  return create_task(*type, input);
}

std::string TaskEngine::create_task(TaskType type, const Json& input) {
  auto violations = validate_payload(type, input);
  if (!violations.empty()) {
    throw Error(ErrorCode::validation_failed, "invalid " + std::string(to_string(type)) + " payload: " + violations.front(),
                field_of(violations.front()), violations);
  }
  return store_.transact([&](Transaction& tx) {
    AgentTask task;
    task.id = tx.next_id("task");
    task.task_type = type;
    task.status = TaskStatus::queued;
    task.input_data = input;
    task.created_at = tx.now();
    tx.put(task);
    return task.id;
  });
}

std::optional<AgentTask> TaskEngine::claim_next(const std::string& worker_id) {
  return store_.claim_next_task(worker_id);
}

TaskLogEntry TaskEngine::append_log(const std::string& task_id, LogType type, std::string message) {
  return store_.append_task_log(task_id, type, std::move(message));
}

Json TaskEngine::run_node(const AgentTask& task, const std::string& node, const std::function<Json()>& body) {
  append_log(task.id, LogType::node_enter, node);
  TaskAction action;
  action.id = store_.next_id("action");
  action.task_id = task.id;
  action.action_type = node;
  action.attempt = task.attempts;
  action.status = "running";
  action.started_at = store_.now();
  store_.put(action);
  try {
    auto out = body();
    action.status = "ok";
    action.finished_at = store_.now();
    store_.put(action);
    append_log(task.id, LogType::node_exit, node);
    return out;
  } catch (const std::exception& e) {
    action.status = "error";
    action.error_message = e.what();
    action.finished_at = store_.now();
    store_.put(action);
    append_log(task.id, LogType::node_exit, node + " (error)");
    throw;
  }
}

Json TaskEngine::run_fetch(const AgentTask& task) {
  if (!fetcher_) throw Error(ErrorCode::precondition_failed, "no document fetcher configured");
  auto paper_id = task.input_data.at("paper_id").get<std::string>();
  auto result = fetch::fetch_paper_content(store_, *fetcher_, paper_id, task.id);
  append_log(task.id, LogType::info, "fetched " + std::to_string(result.paper.full_text.size()) + " bytes via " +
                                         fetcher_->name());
  return Json{{"paper_id", paper_id}, {"full_text_chars", result.paper.full_text.size()}};
}

Json TaskEngine::run_extraction(const AgentTask& task, const std::string& project_id, bool fail_on_error) {
  auto options = config_.extraction;
  options.task_id = task.id;
  auto report = knowledge::run_extraction_pass(store_, gateway_, project_id, options);
  for (const auto& t : report.trace_ids) append_log(task.id, LogType::info, "llm trace " + t);
  for (const auto& w : report.warnings) append_log(task.id, LogType::warn, w);
  for (const auto& [id, msg] : report.failures) append_log(task.id, LogType::warn, "extraction failed for " + id + ": " + msg);
  append_log(task.id, LogType::info,
             "extraction: " + std::to_string(report.artifacts) + " artifacts, " + std::to_string(report.llm_calls) +
                 " model calls, " + std::to_string(report.entries_added) + " new entries");
  if (fail_on_error && !report.failures.empty()) {
    throw Error(ErrorCode::transient, std::to_string(report.failures.size()) + " artifact(s) failed extraction; first: " +
                                          report.failures.front().second);
  }
  return Json{{"extraction", report.to_json()}};
}

Json TaskEngine::run_generation(const AgentTask& task, Json state) {
  const auto& in = task.input_data;
  auto paper_id = in.at("paper_id").get<std::string>();
  auto session_id = in.at("session_id").get<std::string>();
  auto session = store_.get<EvaluationSession>(session_id);
  if (!session) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'", "session_id");
  if (session->participant_id != in.at("participant_id").get<std::string>()) {
    throw Error(ErrorCode::validation_failed, "session does not belong to participant", "participant_id");
  }

  auto options = config_.generation;
  options.task_id = task.id;
  if (in.contains("count")) options.question_count = in.at("count").get<int>();

  auto plan = generation::plan_question_set(store_, gateway_, paper_id, session_id, options);
  append_log(task.id, LogType::info, "llm trace " + plan.trace_id);
  append_log(task.id, LogType::info, "knowledge rule " + plan.prompt.rule);

  Json out{{"trace_id", plan.trace_id}, {"attempts", plan.attempts}, {"knowledge_rule", plan.prompt.rule}};
  // Artifacts and the completed status land in one transaction, guarded by
  // the attempt number this worker claimed.
  store_.transact([&](Transaction& tx) {
    auto current = tx.get<AgentTask>(task.id);
    if (!current || current->status != TaskStatus::running || current->attempts != task.attempts) {
      throw Error(ErrorCode::conflict, "task lease lost before commit");
    }
    auto artifacts = generation::commit_question_set(tx, plan, options);
    Json ids = Json::array();
    for (const auto& a : artifacts) ids.push_back(a.id);
    out["artifact_ids"] = ids;
    state.update(out);
    current->status = TaskStatus::completed;
    current->history.push_back({TaskStatus::running, TaskStatus::completed, tx.now()});
    current->output_data = state;
    current->error_message.reset();
    tx.put(*current);
  });
  return out;
}

TaskStatus TaskEngine::execute_task(const AgentTask& task) {
  if (task.status != TaskStatus::running) {
    throw Error(ErrorCode::precondition_failed, "task '" + task.id + "' is not running", "status");
  }
  Json state = Json::object();
  try {
    state.update(run_node(task, "planner", [&] {
      append_log(task.id, LogType::info, "route " + std::string(to_string(task.task_type)));
      return Json{{"route", to_string(task.task_type)}};
    }));

    switch (task.task_type) {
      case TaskType::fetch_paper_content:
        state.update(run_node(task, "fetch_paper_content", [&] { return run_fetch(task); }));
        break;
      case TaskType::extract_implicit_knowledge: {
        auto project = task.input_data.at("project_id").get<std::string>();
        state.update(run_node(task, "extract_implicit_knowledge", [&] { return run_extraction(task, project, true); }));
        break;
      }
      case TaskType::generate_evaluation_questions: {
        auto session = store_.get<EvaluationSession>(task.input_data.at("session_id").get<std::string>());
        if (session) {
          try {
            state.update(run_node(task, "extract_implicit_knowledge",
                                  [&] { return run_extraction(task, session->project_id, false); }));
          } catch (const std::exception& e) {
            append_log(task.id, LogType::warn, std::string("extraction skipped: ") + e.what());
          }
        }
        run_node(task, "generate_evaluation_questions", [&] { return run_generation(task, state); });
        append_log(task.id, LogType::info, "completed");
        return TaskStatus::completed;
      }
    }

    bool done = store_.transition_task(task.id, TaskStatus::running, TaskStatus::completed, task.attempts,
                                       [&](AgentTask& t) { t.output_data = state; });
    if (!done) return store_.get<AgentTask>(task.id)->status;
    append_log(task.id, LogType::info, "completed");
    return TaskStatus::completed;
  } catch (const std::exception& e) {
    std::string message = e.what();
    bool failed = store_.transition_task(task.id, TaskStatus::running, TaskStatus::failed, task.attempts,
                                         [&](AgentTask& t) { t.error_message = message; });
    if (!failed) return store_.get<AgentTask>(task.id)->status;
    append_log(task.id, LogType::error, message);
    return TaskStatus::failed;
  }
}

AgentTask TaskEngine::retry_task(const std::string& task_id) {
  auto task = store_.get<AgentTask>(task_id);
  if (!task) throw Error(ErrorCode::not_found, "unknown task '" + task_id + "'", "task_id");
  if (task->status != TaskStatus::failed) {
    throw Error(ErrorCode::precondition_failed, "only failed tasks can be retried", "status");
  }
  if (task->attempts >= config_.max_attempts) {
    throw Error(ErrorCode::precondition_failed,
                "task has used all " + std::to_string(config_.max_attempts) + " attempts", "attempts");
  }
  if (!store_.transition_task(task_id, TaskStatus::failed, TaskStatus::queued, task->attempts)) {
    throw Error(ErrorCode::conflict, "task changed concurrently", "status");
  }
  append_log(task_id, LogType::info, "retry requested");
  return *store_.get<AgentTask>(task_id);
}

std::size_t TaskEngine::recover_stale() {
  auto now = store_.now();
  std::size_t recovered = 0;
  for (const auto& task : store_.query<AgentTask>()) {
    if (task.status != TaskStatus::running || !task.claimed_at) continue;
    if (now - *task.claimed_at < config_.lease) continue;
    if (!store_.transition_task(task.id, TaskStatus::running, TaskStatus::failed, task.attempts,
                                [](AgentTask& t) { t.error_message = "lease expired"; })) {
      continue;
    }
    ++recovered;
    append_log(task.id, LogType::warn, "lease expired on worker " + task.worker_id.value_or("?"));
    if (task.attempts < config_.max_attempts &&
        store_.transition_task(task.id, TaskStatus::failed, TaskStatus::queued, task.attempts)) {
      append_log(task.id, LogType::warn, "re-queued after lease expiry");
    }
  }
  return recovered;
}

bool TaskEngine::run_once(const std::string& worker_id) {
  auto task = claim_next(worker_id);
  if (!task) return false;
  execute_task(*task);
  return true;
}

std::size_t TaskEngine::drain(const std::string& worker_id) {
  std::size_t n = 0;
  while (run_once(worker_id)) ++n;
  return n;
}

// ---------------------------------------------------------------------------

WorkerPool::WorkerPool(TaskEngine& engine, Options options) : engine_(engine), options_(options) {
  if (options_.workers == 0) options_.workers = 1;
  if (options_.max_poll < options_.min_poll) options_.max_poll = options_.min_poll;
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::start() {
  if (running_.exchange(true)) return;
  for (std::size_t i = 0; i < options_.workers; ++i) threads_.emplace_back([this, i] { loop(i); });
}

void WorkerPool::stop() {
  running_ = false;
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void WorkerPool::loop(std::size_t index) {
  std::string worker_id = "worker-" + std::to_string(index + 1);
  std::mt19937 rng(static_cast<std::uint32_t>(index * 7919 + 17));
  auto backoff = options_.min_poll;
  while (running_) {
    bool worked = false;
    try {
      worked = engine_.run_once(worker_id);
    } catch (const std::exception&) {
      worked = false;  // storage hiccup; back off and poll again
    }
    if (worked) {
      ++executed_;
      backoff = options_.min_poll;
      continue;
    }
    try {
      engine_.recover_stale();
    } catch (const std::exception&) {
    }
    std::uniform_int_distribution<long long> jitter(options_.min_poll.count(), std::max(backoff.count(), options_.min_poll.count()));
    auto wait = std::chrono::milliseconds(jitter(rng));
    // sleep in small slices so stop() stays responsive
    auto until = std::chrono::steady_clock::now() + wait;
    while (running_ && std::chrono::steady_clock::now() < until) {
      std::this_thread::sleep_for(std::min(wait, std::chrono::milliseconds(5)));
    }
    backoff = std::min(options_.max_poll, backoff * 2);
  }
}

}  // namespace cmda::orchestrator

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cmda/document_fetcher.hpp"
#include "cmda/domain.hpp"
#include "cmda/generator.hpp"
#include "cmda/knowledge_engine.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/storage.hpp"

namespace cmda::orchestrator {

// Payload schemas:
//   fetch_paper_content            {paper_id}
//   generate_evaluation_questions  {paper_id, session_id, participant_id, count?}
//   extract_implicit_knowledge     {project_id}
// Returns one message per violation; the first names the offending field.
std::vector<std::string> validate_payload(TaskType type, const Json& input);

struct EngineConfig {
  int max_attempts = 3;
  std::chrono::milliseconds lease{std::chrono::minutes(10)};
  generation::GenerationOptions generation;
  knowledge::ExtractionOptions extraction;
};

class TaskEngine {
 public:
  TaskEngine(Store& store, llm::Gateway& gateway, std::shared_ptr<fetch::DocumentFetcher> fetcher,
             EngineConfig config = {});

  // Throws Error{invalid_argument} for an unknown type and
  // Error{validation_failed} (field set) for a bad payload.
  std::string create_task(std::string_view task_type, const Json& input);
  std::string create_task(TaskType type, const Json& input);

  std::optional<AgentTask> claim_next(const std::string& worker_id);

  // Runs the planner and the routed nodes for a claimed task and persists the
  // terminal status. Returns that status (or the current one if the lease was
  // lost meanwhile).
  TaskStatus execute_task(const AgentTask& task);

  TaskLogEntry append_log(const std::string& task_id, LogType type, std::string message);

  // failed -> queued; refused once attempts reach max_attempts.
  AgentTask retry_task(const std::string& task_id);

  // Running tasks claimed longer than the lease ago are failed with a lease
  // message and then re-queued when attempts remain. Returns the count.
  std::size_t recover_stale();

  // Claims and executes one task; false when the queue was empty.
  bool run_once(const std::string& worker_id);
  std::size_t drain(const std::string& worker_id);

  Store& store() { return store_; }
  const EngineConfig& config() const { return config_; }

 private:
  Json run_fetch(const AgentTask& task);
  Json run_extraction(const AgentTask& task, const std::string& project_id, bool fail_on_error);
  Json run_generation(const AgentTask& task, Json state);
  Json run_node(const AgentTask& task, const std::string& node, const std::function<Json()>& body);

  Store& store_;
  llm::Gateway& gateway_;
  std::shared_ptr<fetch::DocumentFetcher> fetcher_;
  EngineConfig config_;
};

// Background workers polling the queue with jittered backoff.
class WorkerPool {
 public:
  struct Options {
    std::size_t workers = 2;
    std::chrono::milliseconds min_poll{5};
    std::chrono::milliseconds max_poll{200};
  };

  WorkerPool(TaskEngine& engine, Options options);
  explicit WorkerPool(TaskEngine& engine) : WorkerPool(engine, Options{}) {}
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void start();
  void stop();
  std::size_t executed() const { return executed_.load(); }

 private:
  void loop(std::size_t index);

  TaskEngine& engine_;
  Options options_;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> executed_{0};
  std::vector<std::thread> threads_;
};

}  // namespace cmda::orchestrator

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmda/domain.hpp"
#include "cmda/errors.hpp"

namespace cmda {
class Store;
}

namespace cmda::llm {

struct CompletionRequest {
  std::optional<std::string> system_text;
  std::string user_text;
  std::string model_id;
  double temperature = 0.7;
  int max_tokens = 2048;
  std::optional<std::string> task_id;  // trace linkage only, never sent upstream
};

struct CompletionResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
  std::string trace_id;

  std::int64_t total_tokens() const { return prompt_tokens + completion_tokens; }
};

// Model settings used at every call site; loaded from config or environment.
struct ModelConfig {
  std::string model_id = "gemini-2.0-flash-lite";
  double temperature = 0.7;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{120'000};

  // CMDA_LLM_MODEL, CMDA_LLM_TEMPERATURE, CMDA_LLM_MAX_TOKENS, CMDA_LLM_TIMEOUT_MS
  static ModelConfig from_env();

  CompletionRequest request(std::string user_text, std::optional<std::string> task_id = std::nullopt) const;
};

Json to_json(const CompletionRequest& r);
Json to_json(const CompletionResponse& r);

// Returns one violation per broken rule; empty when the request may be sent.
std::vector<std::string> validate(const CompletionRequest& r);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  // Throws Error{transient} for timeouts/transport failures and
  // Error{upstream_rejected} for provider 4xx.
  virtual CompletionResponse complete(const CompletionRequest& req) = 0;
};

// Deterministic stand-in. Resolution order: exact-prompt key, ordered queue,
// echo fallback. A scripted entry may carry an error instead of text.
class MockProvider : public Provider {
 public:
  struct Reply {
    std::string text;
    std::optional<std::int64_t> prompt_tokens;
    std::optional<std::int64_t> completion_tokens;
    std::optional<ErrorCode> error;

    static Reply failure(ErrorCode code) { return {{}, std::nullopt, std::nullopt, code}; }
  };

  MockProvider() = default;

  // {"keyed": {prompt: reply}, "queue": [reply...], "echo": bool}
  // where reply is a string or {"text", "prompt_tokens", "completion_tokens", "error"}.
  static std::shared_ptr<MockProvider> configure(const Json& script);

  void add_keyed(std::string prompt, Reply reply);
  void enqueue(Reply reply);
  void enqueue(std::string text) { enqueue(Reply{std::move(text), {}, {}, {}}); }
  void set_echo(bool on);
  // Every call fails with `code` until cleared.
  void set_failure(std::optional<ErrorCode> code);

  std::size_t calls() const;
  std::size_t pending() const;
  std::vector<CompletionRequest> received() const;

  std::string name() const override { return "mock"; }
  CompletionResponse complete(const CompletionRequest& req) override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Reply> keyed_;
  std::deque<Reply> queue_;
  bool echo_ = false;
  std::optional<ErrorCode> failure_;
  std::vector<CompletionRequest> received_;
};

// OpenAI-compatible chat-completions client. The only code that talks to an
// LLM provider over the network.
struct HttpProviderConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key;
  std::chrono::milliseconds timeout{120'000};

  // CMDA_LLM_BASE_URL, CMDA_LLM_PATH, CMDA_LLM_API_KEY, CMDA_LLM_TIMEOUT_MS
  static std::optional<HttpProviderConfig> from_env();
};

std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config);

struct GatewayOptions {
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> trace_jsonl;
};

// Thin edge over a provider: validates, admits callers in FIFO order under a
// concurrency cap, and writes exactly one TraceRecord per invocation.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, Store* store, GatewayOptions options = {});

  CompletionResponse complete(const CompletionRequest& req);

  std::size_t calls() const;
  std::size_t max_observed_in_flight() const;
  // Records kept locally when no store is attached.
  std::vector<TraceRecord> local_traces() const;
  Provider& provider() { return *provider_; }

 private:
  class Admission;

  std::string next_trace_id();
  void record(TraceRecord trace);

  std::shared_ptr<Provider> provider_;
  Store* store_;
  GatewayOptions options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
  std::size_t in_flight_ = 0;
  std::size_t max_seen_ = 0;
  std::size_t calls_ = 0;
  std::uint64_t local_ids_ = 0;
  std::vector<TraceRecord> local_;
  std::ofstream jsonl_;
};

}  // namespace cmda::llm

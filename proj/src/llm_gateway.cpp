#include "cmda/llm_gateway.hpp"

#include <cstdlib>
#include <cstdio>

#include "cmda/edit_distance.hpp"
#include "cmda/storage.hpp"

namespace cmda::llm {

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::optional<ErrorCode> parse_error_code(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::internal); ++i) {
    auto c = static_cast<ErrorCode>(i);
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

MockProvider::Reply parse_reply(const Json& j) {
  if (j.is_string()) return {j.get<std::string>(), {}, {}, {}};
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "mock reply must be a string or object");
  MockProvider::Reply r;
  r.text = j.value("text", "");
  if (j.contains("prompt_tokens")) r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  if (j.contains("completion_tokens")) r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  if (j.contains("error")) {
    r.error = parse_error_code(j.at("error").get<std::string>());
    if (!r.error) throw Error(ErrorCode::invalid_argument, "unknown error code in mock script", "error");
  }
  return r;
}

std::int64_t word_count(const std::string& s) { return static_cast<std::int64_t>(tokenize_words(s).size()); }

}  // namespace

ModelConfig ModelConfig::from_env() {
  ModelConfig c;
  if (auto v = env("CMDA_LLM_MODEL")) c.model_id = *v;
  if (auto v = env("CMDA_LLM_TEMPERATURE")) c.temperature = std::stod(*v);
  if (auto v = env("CMDA_LLM_MAX_TOKENS")) c.max_tokens = std::stoi(*v);
  if (auto v = env("CMDA_LLM_TIMEOUT_MS")) c.timeout = std::chrono::milliseconds(std::stoll(*v));
  return c;
}

CompletionRequest ModelConfig::request(std::string user_text, std::optional<std::string> task_id) const {
  CompletionRequest r;
  r.user_text = std::move(user_text);
  r.model_id = model_id;
  r.temperature = temperature;
  r.max_tokens = max_tokens;
  r.task_id = std::move(task_id);
  return r;
}

Json to_json(const CompletionRequest& r) {
  Json j{{"model_id", r.model_id}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens},
         {"user_text", r.user_text}};
  if (r.system_text) j["system_text"] = *r.system_text;
  return j;
}

Json to_json(const CompletionResponse& r) {
  return Json{{"text", r.text},
              {"prompt_tokens", r.prompt_tokens},
              {"completion_tokens", r.completion_tokens},
              {"total_tokens", r.total_tokens()},
              {"latency_ms", r.latency_ms}};
}

std::vector<std::string> validate(const CompletionRequest& r) {
  std::vector<std::string> out;
  if (r.user_text.empty()) out.push_back("user_text: must be non-empty");
  if (r.model_id.empty()) out.push_back("model_id: must be non-empty");
  if (!(r.temperature >= 0.0 && r.temperature <= 2.0)) out.push_back("temperature: must be within 0..2");
  if (r.max_tokens <= 0) out.push_back("max_tokens: must be positive");
  return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<MockProvider> MockProvider::configure(const Json& script) {
  auto mock = std::make_shared<MockProvider>();
  if (!script.is_object()) throw Error(ErrorCode::invalid_argument, "mock script must be a JSON object");
  if (auto it = script.find("keyed"); it != script.end()) {
    for (const auto& [prompt, reply] : it->items()) mock->add_keyed(prompt, parse_reply(reply));
  }
  if (auto it = script.find("queue"); it != script.end()) {
    for (const auto& reply : *it) mock->enqueue(parse_reply(reply));
  }
  mock->set_echo(script.value("echo", false));
  if (mock->keyed_.empty() && mock->queue_.empty() && !mock->echo_) {
    throw Error(ErrorCode::invalid_argument, "mock script is empty and echo mode is off");
  }
  return mock;
}

void MockProvider::add_keyed(std::string prompt, Reply reply) {
  std::lock_guard lock(mu_);
  keyed_[std::move(prompt)] = std::move(reply);
}

void MockProvider::enqueue(Reply reply) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(reply));
}

void MockProvider::set_echo(bool on) {
  std::lock_guard lock(mu_);
  echo_ = on;
}

void MockProvider::set_failure(std::optional<ErrorCode> code) {
  std::lock_guard lock(mu_);
  failure_ = code;
}

std::size_t MockProvider::calls() const {
  std::lock_guard lock(mu_);
  return received_.size();
}

std::size_t MockProvider::pending() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::vector<CompletionRequest> MockProvider::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

CompletionResponse MockProvider::complete(const CompletionRequest& req) {
  Reply reply;
  {
    std::lock_guard lock(mu_);
    received_.push_back(req);
    if (failure_) throw Error(*failure_, "mock provider configured to fail");
    if (auto it = keyed_.find(req.user_text); it != keyed_.end()) {
      reply = it->second;
    } else if (!queue_.empty()) {
      reply = std::move(queue_.front());
      queue_.pop_front();
    } else if (echo_) {
      reply.text = req.user_text;
    } else {
      throw Error(ErrorCode::script_exhausted, "mock script exhausted after " + std::to_string(received_.size() - 1) +
                                                   " replies");
    }
  }
  if (reply.error) throw Error(*reply.error, "scripted mock failure");
  CompletionResponse r;
  r.text = reply.text;
  r.prompt_tokens = reply.prompt_tokens.value_or(word_count(req.user_text));
  r.completion_tokens = reply.completion_tokens.value_or(word_count(reply.text));
  return r;
}

// ---------------------------------------------------------------------------

std::optional<HttpProviderConfig> HttpProviderConfig::from_env() {
  auto base = env("CMDA_LLM_BASE_URL");
  if (!base) return std::nullopt;
  HttpProviderConfig c;
  c.base_url = *base;
  if (auto v = env("CMDA_LLM_PATH")) c.path = *v;
  if (auto v = env("CMDA_LLM_API_KEY")) c.api_key = *v;
  if (auto v = env("CMDA_LLM_TIMEOUT_MS")) c.timeout = std::chrono::milliseconds(std::stoll(*v));
  return c;
}

// ---------------------------------------------------------------------------

class Gateway::Admission {
 public:
  explicit Admission(Gateway& g) : g_(g) {
    std::unique_lock lock(g_.mu_);
    auto ticket = g_.next_ticket_++;
    g_.cv_.wait(lock, [&] { return ticket == g_.serving_ && g_.in_flight_ < g_.options_.max_in_flight; });
    ++g_.serving_;
    ++g_.in_flight_;
    g_.max_seen_ = std::max(g_.max_seen_, g_.in_flight_);
    g_.cv_.notify_all();
  }
  ~Admission() {
    {
      std::lock_guard lock(g_.mu_);
      --g_.in_flight_;
    }
    g_.cv_.notify_all();
  }
  Admission(const Admission&) = delete;
  Admission& operator=(const Admission&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(std::shared_ptr<Provider> provider, Store* store, GatewayOptions options)
    : provider_(std::move(provider)), store_(store), options_(std::move(options)) {
  if (!provider_) throw Error(ErrorCode::invalid_argument, "gateway needs a provider");
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (options_.trace_jsonl) {
    jsonl_.open(*options_.trace_jsonl, std::ios::app);
    if (!jsonl_) throw Error(ErrorCode::invalid_argument, "cannot open trace file " + options_.trace_jsonl->string());
  }
}

std::string Gateway::next_trace_id() {
  if (store_) return store_->next_id("trace");
  std::lock_guard lock(mu_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "trace-%06llu", static_cast<unsigned long long>(++local_ids_));
  return buf;
}

void Gateway::record(TraceRecord trace) {
  if (store_) {
    trace.created_at = store_->now();
    store_->put(trace);
  } else {
    trace.created_at = SystemClock().now();
  }
  std::lock_guard lock(mu_);
  ++calls_;
  if (jsonl_.is_open()) {
    Json j = trace;
    jsonl_ << j.dump() << '\n';
    jsonl_.flush();
  }
  if (!store_) local_.push_back(std::move(trace));
}

CompletionResponse Gateway::complete(const CompletionRequest& req) {
  TraceRecord trace;
  trace.trace_id = next_trace_id();
  trace.task_id = req.task_id;
  trace.request = to_json(req);

  auto violations = validate(req);
  if (!violations.empty()) {
    trace.response = Json{{"error", violations.front()}, {"code", to_string(ErrorCode::invalid_argument)}};
    record(std::move(trace));
    throw Error(ErrorCode::invalid_argument, "invalid completion request", "", violations);
  }

  try {
    CompletionResponse resp;
    {
      Admission admit(*this);
      resp = provider_->complete(req);  // providers report their own latency
    }
    resp.trace_id = trace.trace_id;
    trace.response = to_json(resp);
    record(std::move(trace));
    return resp;
  } catch (const Error& e) {
    trace.response = Json{{"error", e.what()}, {"code", to_string(e.code())}};
    record(std::move(trace));
    throw;
  } catch (const std::exception& e) {
    trace.response = Json{{"error", e.what()}, {"code", to_string(ErrorCode::transient)}};
    record(std::move(trace));
    throw Error(ErrorCode::transient, std::string("provider failure: ") + e.what());
  }
}

std::size_t Gateway::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t Gateway::max_observed_in_flight() const {
  std::lock_guard lock(mu_);
  return max_seen_;
}

std::vector<TraceRecord> Gateway::local_traces() const {
  std::lock_guard lock(mu_);
  return local_;
}

}  // namespace cmda::llm

#include <httplib.h>

#include "cmda/llm_gateway.hpp"

namespace cmda::llm {

namespace {

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {}

  std::string name() const override { return "http"; }

  CompletionResponse complete(const CompletionRequest& req) override {
    httplib::Client client(config_.base_url);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    Json messages = Json::array();
    if (req.system_text) messages.push_back({{"role", "system"}, {"content", *req.system_text}});
    messages.push_back({{"role", "user"}, {"content", req.user_text}});
    Json body{{"model", req.model_id},
              {"messages", messages},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto start = std::chrono::steady_clock::now();
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    auto elapsed = std::chrono::steady_clock::now() - start;

    if (!res) {
      throw Error(ErrorCode::transient, "provider transport error: " + httplib::to_string(res.error()));
    }
    if (res->status >= 500 || res->status == 429) {
      throw Error(ErrorCode::transient, "provider returned HTTP " + std::to_string(res->status));
    }
    if (res->status >= 400) {
      throw Error(ErrorCode::upstream_rejected,
                  "provider rejected request with HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    CompletionResponse out;
    try {
      auto j = Json::parse(res->body);
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
        out.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
        out.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::transient, std::string("malformed provider response: ") + e.what());
    }
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    return out;
  }

 private:
  HttpProviderConfig config_;
};

}  // namespace

std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config) {
  if (config.base_url.empty()) throw Error(ErrorCode::invalid_argument, "provider base_url is required", "base_url");
  return std::make_shared<HttpProvider>(std::move(config));
}

}  // namespace cmda::llm

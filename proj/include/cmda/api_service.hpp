#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmda/domain.hpp"
#include "cmda/errors.hpp"
#include "cmda/generator.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/orchestrator.hpp"
#include "cmda/storage.hpp"

namespace httplib {
class Server;
}

namespace cmda::api {

struct Request {
  std::string method;  // GET, POST, PATCH, DELETE
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lowercase names
  std::string body;
};

struct Response {
  int status = 200;
  Json body = Json::object();
};

// Closed set of error codes: the library's ErrorCode spellings plus
// bad_request, route_not_found and method_not_allowed.
struct ApiError {
  int http_status = 500;
  std::string code;
  std::string message;
  std::optional<std::string> field;

  Json to_json() const;
};

int http_status(ErrorCode code);
ApiError to_api_error(const Error& e);

// The route inventory, in "METHOD /pattern" form.
const std::vector<std::string>& route_inventory();

struct ServiceOptions {
  generation::GenerationOptions generation;
  std::size_t log_tail = 20;
};

class Router {
 public:
  Router(Store& store, orchestrator::TaskEngine& engine, llm::Gateway& gateway, ServiceOptions options = {});

  // Never throws; every failure becomes an ApiError body.
  Response handle(const Request& request);

 private:
  Response dispatch(const Request& request);

  Response create_paper(const Request& r);
  Response list_papers(const Request& r);
  Response paper_questions(const Request& r, const std::string& id);
  Response patch_question(const Request& r, const std::string& id);
  Response regenerate_question(const Request& r, const std::string& id);
  Response rate_question(const Request& r, const std::string& id);
  Response delete_question(const Request& r, const std::string& id);
  Response question_history(const Request& r, const std::string& id);
  Response create_task(const Request& r);
  Response get_task(const Request& r, const std::string& id);
  Response project_knowledge(const Request& r, const std::string& id);
  Response project_stats(const Request& r, const std::string& id);

  void note_interaction(const Request& r, const std::string& type, const std::string& entity_id);

  Store& store_;
  orchestrator::TaskEngine& engine_;
  llm::Gateway& gateway_;
  ServiceOptions options_;
};

// JSON view of an edit with its diff hunks (text edits only).
Json history_entry(const EditRecord& edit);

// Registers the router on an httplib server for every inventory route.
void bind(httplib::Server& server, Router& router);

}  // namespace cmda::api

#include "cmda/api_service.hpp"

#include <algorithm>
#include <cctype>

#include "cmda/context_assembler.hpp"
#include "cmda/edit_distance.hpp"
#include "cmda/edit_ledger.hpp"

namespace cmda::api {

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    auto j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return out;
}

// Matches "/questions/{id}/history" style patterns; fills `id`.
bool match(std::string_view pattern, const std::vector<std::string>& segs, std::string& id) {
  auto parts = split_path(pattern);
  if (parts.size() != segs.size()) return false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i] == "{id}") {
      id = segs[i];
    } else if (parts[i] != segs[i]) {
      return false;
    }
  }
  return true;
}

Json parse_body(const Request& r) {
  if (r.body.empty()) return Json::object();
  auto j = Json::parse(r.body, nullptr, false);
  if (j.is_discarded()) throw ApiError{400, "bad_request", "request body is not valid JSON", std::nullopt};
  if (!j.is_object()) throw ApiError{400, "bad_request", "request body must be a JSON object", std::nullopt};
  return j;
}

std::string required_string(const Json& body, const char* field) {
  auto it = body.find(field);
  if (it == body.end() || !it->is_string()) {
    throw Error(ErrorCode::validation_failed, std::string(field) + " is required and must be a string", field);
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const Json& body, const char* field) {
  auto it = body.find(field);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::validation_failed, std::string(field) + " must be a string", field);
  return it->get<std::string>();
}

Json hunks_json(const std::string& a, const std::string& b) {
  Json out = Json::array();
  for (const auto& h : compute_diff(a, b)) out.push_back({{"op", to_string(h.op)}, {"text", h.text}});
  return out;
}

}  // namespace

Json ApiError::to_json() const {
  Json e{{"code", code}, {"message", message}};
  if (field) e["field"] = *field;
  return Json{{"error", e}};
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::validation_failed: return 422;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::precondition_failed: return 409;
    case ErrorCode::gone: return 410;
    case ErrorCode::parse_error:
    case ErrorCode::contract_violation:
    case ErrorCode::upstream_rejected:
    case ErrorCode::script_exhausted: return 502;
    case ErrorCode::transient: return 503;
    case ErrorCode::ledger_corruption:
    case ErrorCode::internal: return 500;
  }
  return 500;
}

ApiError to_api_error(const Error& e) {
  ApiError out{http_status(e.code()), std::string(to_string(e.code())), e.what(), std::nullopt};
  if (!e.field().empty()) out.field = e.field();
  return out;
}

const std::vector<std::string>& route_inventory() {
  static const std::vector<std::string> routes = {
      "POST /papers",
      "GET /papers",
      "GET /papers/{id}/questions",
      "PATCH /questions/{id}",
      "POST /questions/{id}/regenerate",
      "POST /questions/{id}/rating",
      "DELETE /questions/{id}",
      "GET /questions/{id}/history",
      "POST /tasks",
      "GET /tasks/{id}",
      "GET /projects/{id}/knowledge",
      "GET /projects/{id}/stats",
  };
  return routes;
}

Json history_entry(const EditRecord& edit) {
  Json j = edit;
  Json hunks = Json::array();
  bool text_edit = edit.edit_type == EditType::direct_edit || edit.edit_type == EditType::prompt_regeneration;
  if (text_edit && edit.field_name == kFieldBoth) {
    auto before = Json::parse(edit.original_value, nullptr, false);
    auto after = Json::parse(edit.new_value, nullptr, false);
    if (before.is_object() && after.is_object()) {
      for (const char* f : {"question", "contribution"}) {
        hunks.push_back({{"field", f},
                         {"hunks", hunks_json(before.value(f, ""), after.value(f, ""))}});
      }
    }
  } else if (text_edit) {
    hunks.push_back({{"field", edit.field_name}, {"hunks", hunks_json(edit.original_value, edit.new_value)}});
  }
  j["diff"] = hunks;
  return j;
}

Router::Router(Store& store, orchestrator::TaskEngine& engine, llm::Gateway& gateway, ServiceOptions options)
    : store_(store), engine_(engine), gateway_(gateway), options_(std::move(options)) {}

Response Router::handle(const Request& request) {
  try {
    return dispatch(request);
  } catch (const ApiError& e) {
    return {e.http_status, e.to_json()};
  } catch (const Error& e) {
    auto err = to_api_error(e);
    return {err.http_status, err.to_json()};
  } catch (const std::exception& e) {
    ApiError err{500, "internal", e.what(), std::nullopt};
    return {500, err.to_json()};
  }
}

Response Router::dispatch(const Request& r) {
  auto segs = split_path(r.path);
  std::string id;
  bool path_known = false;
  for (const auto& route : route_inventory()) {
    auto space = route.find(' ');
    auto method = route.substr(0, space);
    auto pattern = route.substr(space + 1);
    if (!match(pattern, segs, id)) continue;
    path_known = true;
    if (method != r.method) continue;

    if (route == "POST /papers") return create_paper(r);
    if (route == "GET /papers") return list_papers(r);
    if (route == "GET /papers/{id}/questions") return paper_questions(r, id);
    if (route == "PATCH /questions/{id}") return patch_question(r, id);
    if (route == "POST /questions/{id}/regenerate") return regenerate_question(r, id);
    if (route == "POST /questions/{id}/rating") return rate_question(r, id);
    if (route == "DELETE /questions/{id}") return delete_question(r, id);
    if (route == "GET /questions/{id}/history") return question_history(r, id);
    if (route == "POST /tasks") return create_task(r);
    if (route == "GET /tasks/{id}") return get_task(r, id);
    if (route == "GET /projects/{id}/knowledge") return project_knowledge(r, id);
    if (route == "GET /projects/{id}/stats") return project_stats(r, id);
  }
  if (path_known) throw ApiError{405, "method_not_allowed", r.method + " is not supported on " + r.path, std::nullopt};
  throw ApiError{404, "route_not_found", "no route for " + r.path, std::nullopt};
}

void Router::note_interaction(const Request& r, const std::string& type, const std::string& entity_id) {
  auto it = r.headers.find("x-participant-id");
  if (it == r.headers.end() || !store_.get<Participant>(it->second)) return;
  UserInteraction ui;
  ui.id = store_.next_id("interaction");
  ui.participant_id = it->second;
  ui.interaction_type = type;
  ui.entity_id = entity_id;
  ui.created_at = store_.now();
  store_.put(ui);
}

Response Router::create_paper(const Request& r) {
  auto body = parse_body(r);
  PaperRecord paper;
  paper.title = optional_string(body, "title").value_or("");
  paper.authors = optional_string(body, "authors").value_or("");
  paper.abstract_text = optional_string(body, "abstract").value_or("");
  paper.full_text = optional_string(body, "full_text").value_or("");
  paper.source_url = optional_string(body, "source_url");
  if (paper.title.empty() && !paper.source_url) {
    throw Error(ErrorCode::validation_failed, "a paper needs a title or a source_url", "title");
  }
  auto requested_id = optional_string(body, "id");
  auto task_id = store_.transact([&](Transaction& tx) {
    paper.id = requested_id.value_or(tx.next_id("paper"));
    if (tx.get<PaperRecord>(paper.id)) {
      throw Error(ErrorCode::conflict, "paper '" + paper.id + "' already exists", "id");
    }
    paper.created_at = tx.now();
    tx.put(paper);
    return paper.id;
  });
  auto fetch_task = engine_.create_task(TaskType::fetch_paper_content, Json{{"paper_id", task_id}});
  return {202, Json{{"paper", paper}, {"task_id", fetch_task}}};
}

Response Router::list_papers(const Request&) {
  Json out = Json::array();
  for (const auto& p : store_.query<PaperRecord>()) out.push_back(p);
  return {200, Json{{"papers", out}}};
}

Response Router::paper_questions(const Request& r, const std::string& id) {
  if (!store_.get<PaperRecord>(id)) throw Error(ErrorCode::not_found, "unknown paper '" + id + "'", "id");
  StoreQuery q;
  q.paper_id = id;
  if (auto it = r.query.find("session_id"); it != r.query.end()) q.session_id = it->second;
  Json out = Json::array();
  for (const auto& a : store_.query<ResearchQuestionArtifact>(q)) out.push_back(a);
  return {200, Json{{"questions", out}}};
}

Response Router::patch_question(const Request& r, const std::string& id) {
  auto body = parse_body(r);
  EditRequest req;
  req.artifact_id = id;
  req.edit_type = EditType::direct_edit;
  req.field_name = required_string(body, "field_name");
  req.original_value = required_string(body, "original_value");
  req.new_value = required_string(body, "new_value");
  if (req.field_name != kFieldQuestion && req.field_name != kFieldContribution) {
    throw Error(ErrorCode::invalid_argument, "field_name must be 'question' or 'contribution'", "field_name");
  }
  auto outcome = record_edit(store_, req);
  note_interaction(r, "direct_edit", id);
  return {200, Json{{"question", outcome.artifact}, {"edit", outcome.edit}}};
}

Response Router::regenerate_question(const Request& r, const std::string& id) {
  auto body = parse_body(r);
  auto scope_text = optional_string(body, "scope").value_or(optional_string(body, "field_name").value_or("question"));
  auto scope = generation::parse_regeneration_scope(scope_text);
  if (!scope) throw Error(ErrorCode::invalid_argument, "scope must be question, contribution or both", "scope");
  auto prompt = required_string(body, "user_prompt");
  auto result = generation::regenerate_entity(store_, gateway_, id, *scope, prompt, options_.generation);
  note_interaction(r, "prompt_regeneration", id);
  return {200, Json{{"question", result.artifact}, {"edit", result.edit}, {"trace_id", result.trace_id}}};
}

Response Router::rate_question(const Request& r, const std::string& id) {
  auto body = parse_body(r);
  auto it = body.find("rating");
  if (it == body.end() || !it->is_number_integer()) {
    throw Error(ErrorCode::validation_failed, "rating must be an integer in 1..5", "rating");
  }
  auto value = it->get<long long>();
  if (value < 1 || value > 5) throw Error(ErrorCode::validation_failed, "rating must be in 1..5", "rating");
  auto outcome = rate_artifact(store_, id, static_cast<int>(value));
  note_interaction(r, "rating", id);
  return {200, Json{{"question", outcome.artifact}, {"edit", outcome.edit}}};
}

Response Router::delete_question(const Request& r, const std::string& id) {
  auto outcome = delete_artifact(store_, id);
  note_interaction(r, "delete", id);
  return {200, Json{{"question", outcome.artifact}, {"edit", outcome.edit}}};
}

Response Router::question_history(const Request&, const std::string& id) {
  if (!store_.get<ResearchQuestionArtifact>(id)) throw Error(ErrorCode::not_found, "unknown question '" + id + "'", "id");
  Json out = Json::array();
  for (const auto& e : artifact_history(store_, id)) out.push_back(history_entry(e));
  return {200, Json{{"question_id", id}, {"history", out}}};
}

Response Router::create_task(const Request& r) {
  auto body = parse_body(r);
  auto type = required_string(body, "task_type");
  Json input = body.contains("input_data") ? body["input_data"] : Json::object();
  auto id = engine_.create_task(type, input);
  return {202, Json{{"task_id", id}, {"status", "queued"}}};
}

Response Router::get_task(const Request&, const std::string& id) {
  auto task = store_.get<AgentTask>(id);
  if (!task) throw Error(ErrorCode::not_found, "unknown task '" + id + "'", "id");
  Json view{{"id", task->id},
            {"task_type", to_string(task->task_type)},
            {"status", to_string(task->status)},
            {"attempts", task->attempts},
            {"history", task->history}};
  if (task->output_data) view["output_data"] = *task->output_data;
  if (task->error_message) view["error_message"] = *task->error_message;
  StoreQuery q;
  q.task_id = id;
  auto logs = store_.query<TaskLogEntry>(q);
  std::size_t skip = logs.size() > options_.log_tail ? logs.size() - options_.log_tail : 0;
  Json tail = Json::array();
  for (std::size_t i = skip; i < logs.size(); ++i) tail.push_back(logs[i]);
  view["logs"] = tail;
  return {200, view};
}

Response Router::project_knowledge(const Request& r, const std::string& id) {
  Json out{{"project_id", id}};
  Json entries = Json::array();
  if (auto it = r.query.find("participant_id"); it != r.query.end()) {
    auto ctx = context::assemble_context(store_, it->second, id);
    for (const auto& e : ctx.entries) entries.push_back(e);
    out["rendered"] = context::render_knowledge_block(ctx);
  } else {
    StoreQuery pq;
    pq.project_id = id;
    std::vector<std::string> members;
    for (const auto& p : store_.query<Participant>(pq)) members.push_back(p.id);
    for (const auto& e : store_.query<KnowledgeEntry>()) {
      bool in_project = (e.scope.kind == ScopeKind::project && e.scope.owner == id) ||
                        (e.scope.kind == ScopeKind::user &&
                         std::find(members.begin(), members.end(), e.scope.owner) != members.end());
      if (in_project) entries.push_back(e);
    }
  }
  out["entries"] = entries;
  return {200, out};
}

Response Router::project_stats(const Request&, const std::string& id) {
  auto stats = context::knowledge_stats(store_, id);
  Json out = stats.to_json();
  out["project_id"] = id;
  return {200, out};
}

}  // namespace cmda::api

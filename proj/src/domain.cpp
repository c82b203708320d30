#include "cmda/domain.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "cmda/edit_distance.hpp"
#include "cmda/errors.hpp"

namespace cmda {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "unknown";
}

constexpr std::array<std::pair<EntityType, std::string_view>, 4> kEntityTypes{{
    {EntityType::research_question, "research_question"},
    {EntityType::contribution, "contribution"},
    {EntityType::title, "title"},
    {EntityType::other, "other"},
}};

constexpr std::array<std::pair<EditType, std::string_view>, 5> kEditTypes{{
    {EditType::direct_edit, "direct_edit"},
    {EditType::prompt_regeneration, "prompt_regeneration"},
    {EditType::context_generation, "context_generation"},
    {EditType::deletion, "delete"},
    {EditType::rating, "rating"},
}};

constexpr std::array<std::pair<KnowledgeCategory, std::string_view>, 3> kCategories{{
    {KnowledgeCategory::domain_terminology_evolution, "domain_terminology_evolution"},
    {KnowledgeCategory::methodological_refinements, "methodological_refinements"},
    {KnowledgeCategory::conceptual_depth_changes, "conceptual_depth_changes"},
}};

constexpr std::array<std::pair<KnowledgeCategory, std::string_view>, 3> kCategoryTitles{{
    {KnowledgeCategory::domain_terminology_evolution, "Domain Terminology Evolution"},
    {KnowledgeCategory::methodological_refinements, "Methodological Refinements"},
    {KnowledgeCategory::conceptual_depth_changes, "Conceptual Depth Changes"},
}};

constexpr std::array<std::pair<ScopeKind, std::string_view>, 3> kScopes{{
    {ScopeKind::user, "user"},
    {ScopeKind::project, "project"},
    {ScopeKind::global, "global"},
}};

constexpr std::array<std::pair<ParticipantStatus, std::string_view>, 3> kParticipantStatuses{{
    {ParticipantStatus::pending, "pending"},
    {ParticipantStatus::active, "active"},
    {ParticipantStatus::done, "done"},
}};

constexpr std::array<std::pair<TaskType, std::string_view>, 3> kTaskTypes{{
    {TaskType::fetch_paper_content, "fetch_paper_content"},
    {TaskType::generate_evaluation_questions, "generate_evaluation_questions"},
    {TaskType::extract_implicit_knowledge, "extract_implicit_knowledge"},
}};

constexpr std::array<std::pair<TaskStatus, std::string_view>, 4> kTaskStatuses{{
    {TaskStatus::queued, "queued"},
    {TaskStatus::running, "running"},
    {TaskStatus::completed, "completed"},
    {TaskStatus::failed, "failed"},
}};

constexpr std::array<std::pair<LogType, std::string_view>, 5> kLogTypes{{
    {LogType::info, "info"},
    {LogType::warn, "warn"},
    {LogType::error, "error"},
    {LogType::node_enter, "node_enter"},
    {LogType::node_exit, "node_exit"},
}};

// -- JSON field helpers ------------------------------------------------------

[[noreturn]] void field_error(std::string_view field, std::string_view what) {
  throw Error(ErrorCode::validation_failed, std::string(field) + ": " + std::string(what), std::string(field));
}

const Json& need(const Json& j, std::string_view field) {
  if (!j.is_object()) field_error(field, "expected an object");
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) field_error(field, "missing required field");
  return *it;
}

std::string get_string(const Json& j, std::string_view field) {
  const Json& v = need(j, field);
  if (!v.is_string()) field_error(field, "expected a string");
  return v.get<std::string>();
}

std::string get_string_or(const Json& j, std::string_view field, std::string fallback) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) field_error(field, "expected a string");
  return it->get<std::string>();
}

std::optional<std::string> get_opt_string(const Json& j, std::string_view field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) field_error(field, "expected a string");
  return it->get<std::string>();
}

template <typename I>
I get_int_or(const Json& j, std::string_view field, I fallback) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number_integer()) field_error(field, "expected an integer");
  if constexpr (std::is_unsigned_v<I>) {
    if (it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0) {
      field_error(field, "expected a non-negative integer");
    }
  }
  return it->get<I>();
}

bool get_bool_or(const Json& j, std::string_view field, bool fallback) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) field_error(field, "expected a boolean");
  return it->get<bool>();
}

Timestamp get_time(const Json& j, std::string_view field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return Timestamp{};
  if (!it->is_string()) field_error(field, "expected an RFC 3339 string");
  auto ts = parse_rfc3339(it->get<std::string>());
  if (!ts) field_error(field, "invalid RFC 3339 timestamp");
  return *ts;
}

std::optional<Timestamp> get_opt_time(const Json& j, std::string_view field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return get_time(j, field);
}

template <typename E, typename Parser>
E get_enum(const Json& j, std::string_view field, Parser parse) {
  const std::string s = get_string(j, field);
  auto v = parse(s);
  if (!v) field_error(field, "unknown value '" + s + "'");
  return *v;
}

void put_opt(Json& j, std::string_view field, const std::optional<std::string>& v) {
  j[std::string(field)] = v ? Json(*v) : Json(nullptr);
}

void put_opt_time(Json& j, std::string_view field, const std::optional<Timestamp>& v) {
  j[std::string(field)] = v ? Json(format_rfc3339(*v)) : Json(nullptr);
}

bool is_closing_mark(std::string_view text, std::size_t i, std::size_t& width) {
  const char c = text[i];
  if (c == '"' || c == '\'' || c == ')' || c == ']') {
    width = 1;
    return true;
  }
  // U+2019 and U+201D
  if (i + 2 < text.size() && static_cast<unsigned char>(c) == 0xE2 &&
      static_cast<unsigned char>(text[i + 1]) == 0x80 &&
      (static_cast<unsigned char>(text[i + 2]) == 0x99 || static_cast<unsigned char>(text[i + 2]) == 0x9D)) {
    width = 3;
    return true;
  }
  return false;
}

}  // namespace

// -- enums -------------------------------------------------------------------

std::string_view to_string(EntityType v) { return name_of(kEntityTypes, v); }
std::string_view to_string(EditType v) { return name_of(kEditTypes, v); }
std::string_view to_string(KnowledgeCategory v) { return name_of(kCategories, v); }
std::string_view to_string(ScopeKind v) { return name_of(kScopes, v); }
std::string_view to_string(ParticipantStatus v) { return name_of(kParticipantStatuses, v); }
std::string_view to_string(TaskType v) { return name_of(kTaskTypes, v); }
std::string_view to_string(TaskStatus v) { return name_of(kTaskStatuses, v); }
std::string_view to_string(LogType v) { return name_of(kLogTypes, v); }
std::string_view category_title(KnowledgeCategory v) { return name_of(kCategoryTitles, v); }

std::optional<EntityType> parse_entity_type(std::string_view s) { return lookup(kEntityTypes, s); }
std::optional<EditType> parse_edit_type(std::string_view s) { return lookup(kEditTypes, s); }
std::optional<KnowledgeCategory> parse_category(std::string_view s) { return lookup(kCategories, s); }
std::optional<ScopeKind> parse_scope_kind(std::string_view s) { return lookup(kScopes, s); }
std::optional<ParticipantStatus> parse_participant_status(std::string_view s) {
  return lookup(kParticipantStatuses, s);
}
std::optional<TaskType> parse_task_type(std::string_view s) { return lookup(kTaskTypes, s); }
std::optional<TaskStatus> parse_task_status(std::string_view s) { return lookup(kTaskStatuses, s); }
std::optional<LogType> parse_log_type(std::string_view s) { return lookup(kLogTypes, s); }

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::validation_failed: return "validation_failed";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::gone: return "gone";
    case ErrorCode::precondition_failed: return "precondition_failed";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::contract_violation: return "contract_violation";
    case ErrorCode::transient: return "transient";
    case ErrorCode::upstream_rejected: return "upstream_rejected";
    case ErrorCode::script_exhausted: return "script_exhausted";
    case ErrorCode::ledger_corruption: return "ledger_corruption";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

std::optional<double> EvaluationSession::duration_seconds() const {
  if (!ended_at) return std::nullopt;
  return std::chrono::duration<double>(*ended_at - started_at).count();
}

// -- validation ----------------------------------------------------------------

std::size_t count_sentences(std::string_view text) {
  std::size_t count = 0;
  bool pending = false;  // non-space content since the last terminator
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
      std::size_t width = 0;
      while (j < text.size() && is_closing_mark(text, j, width)) j += width;
      if (j == text.size() || std::isspace(static_cast<unsigned char>(text[j]))) {
        ++count;
        pending = false;
      } else {
        pending = true;
      }
      i = j;
      continue;
    }
    if (!std::isspace(static_cast<unsigned char>(c))) pending = true;
    ++i;
  }
  return count + (pending ? 1 : 0);
}

ValidationResult validate_knowledge_entry(const Json& candidate, const IdResolver& artifact_exists) {
  ValidationResult result;
  auto& out = result.violations;
  if (!candidate.is_object()) {
    out.push_back("entry: expected a JSON object");
    return result;
  }

  auto text_it = candidate.find("text");
  if (text_it == candidate.end() || !text_it->is_string()) {
    out.push_back("text: missing or not a string");
  } else {
    const auto text = text_it->get<std::string>();
    const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); });
    if (blank) {
      out.push_back("text: must be non-empty");
    } else {
      if (count_sentences(text) > kMaxInsightSentences) {
        out.push_back("text: more than " + std::to_string(kMaxInsightSentences) + " sentences");
      }
      if (text.size() > kMaxInsightChars) {
        out.push_back("text: longer than " + std::to_string(kMaxInsightChars) + " characters");
      }
    }
  }

  auto cat_it = candidate.find("category");
  if (cat_it == candidate.end() || !cat_it->is_string()) {
    out.push_back("category: missing or not a string");
  } else if (!parse_category(cat_it->get<std::string>())) {
    out.push_back("category: '" + cat_it->get<std::string>() + "' is outside the closed set");
  }

  auto src_it = candidate.find("source_question_ids");
  if (src_it == candidate.end() || !src_it->is_array() || src_it->empty()) {
    out.push_back("source_question_ids: provenance required (non-empty list)");
  } else {
    for (const auto& id : *src_it) {
      if (!id.is_string()) {
        out.push_back("source_question_ids: non-string id");
      } else if (!artifact_exists || !artifact_exists(id.get<std::string>())) {
        out.push_back("source_question_ids: unknown artifact '" + id.get<std::string>() + "'");
      }
    }
  }
  return result;
}

ValidationResult validate_knowledge_entry(const KnowledgeEntry& entry, const IdResolver& artifact_exists) {
  Json j;
  to_json(j, entry);
  return validate_knowledge_entry(j, artifact_exists);
}

std::vector<std::string> validate(const PaperRecord& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.title.empty()) out.push_back("title: must be non-empty");
  return out;
}

std::vector<std::string> validate(const ResearchQuestionArtifact& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.paper_id.empty()) out.push_back("paper_id: must be non-empty");
  if (v.session_id.empty()) out.push_back("session_id: must be non-empty");
  if (v.position < 1) out.push_back("position: must be >= 1");
  if (v.quality_rating && (*v.quality_rating < 1 || *v.quality_rating > 5)) {
    out.push_back("quality_rating: must be in 1..5");
  }
  ResearchQuestionArtifact expected = v;
  refresh_distances(expected);
  if (expected.dist_q_chars != v.dist_q_chars || expected.dist_q_words != v.dist_q_words ||
      expected.dist_c_chars != v.dist_c_chars || expected.dist_c_words != v.dist_c_words) {
    out.push_back("distances: stored values disagree with recomputed edit distances");
  }
  return out;
}

std::vector<std::string> validate(const EditRecord& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.entity_id.empty()) out.push_back("entity_id: must be non-empty");
  if (v.field_name.empty()) out.push_back("field_name: must be non-empty");
  const bool is_prompt = v.edit_type == EditType::prompt_regeneration;
  if (is_prompt && !v.user_prompt) out.push_back("user_prompt: required for prompt_regeneration");
  if (!is_prompt && v.user_prompt) out.push_back("user_prompt: only allowed for prompt_regeneration");
  if (is_prompt && v.user_prompt && v.user_prompt->empty()) out.push_back("user_prompt: must be non-empty");
  return out;
}

std::vector<std::string> validate(const GenerationMetadata& v) {
  std::vector<std::string> out;
  if (v.entity_id.empty()) out.push_back("entity_id: must be non-empty");
  if (v.generation_prompt.empty()) out.push_back("generation_prompt: must be non-empty");
  if (v.model_id.empty()) out.push_back("model_id: must be non-empty");
  return out;
}

std::vector<std::string> validate(const KnowledgeEntry& v) {
  auto result = validate_knowledge_entry(v, [](const std::string&) { return true; });
  if (v.id.empty()) result.violations.push_back("id: must be non-empty");
  if (v.scope.kind != ScopeKind::global && v.scope.owner.empty()) {
    result.violations.push_back("scope: user/project scope needs an owner id");
  }
  return result.violations;
}

std::vector<std::string> validate(const Participant& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.project_id.empty()) out.push_back("project_id: must be non-empty");
  if (v.order_index < 1) out.push_back("order_index: must be >= 1");
  return out;
}

std::vector<std::string> validate(const EvaluationSession& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.participant_id.empty()) out.push_back("participant_id: must be non-empty");
  if (v.paper_id.empty()) out.push_back("paper_id: must be non-empty");
  if (v.ended_at && *v.ended_at < v.started_at) out.push_back("ended_at: precedes started_at");
  return out;
}

std::vector<std::string> validate(const AgentTask& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.attempts < 0) out.push_back("attempts: must be >= 0");
  const bool completed = v.status == TaskStatus::completed;
  const bool failed = v.status == TaskStatus::failed;
  if (completed != v.output_data.has_value()) out.push_back("output_data: present iff status = completed");
  if (failed != v.error_message.has_value()) out.push_back("error_message: present iff status = failed");
  for (const auto& t : v.history) {
    if (!is_legal_transition(t.from, t.to)) {
      out.push_back("history: illegal transition " + std::string(to_string(t.from)) + "->" +
                    std::string(to_string(t.to)));
    }
  }
  return out;
}

std::vector<std::string> validate(const TaskLogEntry& v) {
  std::vector<std::string> out;
  if (v.task_id.empty()) out.push_back("task_id: must be non-empty");
  if (v.sequence_no < 1) out.push_back("sequence_no: must be >= 1");
  return out;
}

std::vector<std::string> validate(const TaskAction& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  if (v.task_id.empty()) out.push_back("task_id: must be non-empty");
  return out;
}

std::vector<std::string> validate(const ApiLog& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  return out;
}

std::vector<std::string> validate(const TraceRecord& v) {
  std::vector<std::string> out;
  if (v.trace_id.empty()) out.push_back("trace_id: must be non-empty");
  return out;
}

std::vector<std::string> validate(const UserInteraction& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.push_back("id: must be non-empty");
  return out;
}

bool is_legal_transition(TaskStatus from, TaskStatus to) {
  return (from == TaskStatus::queued && to == TaskStatus::running) ||
         (from == TaskStatus::running && to == TaskStatus::completed) ||
         (from == TaskStatus::running && to == TaskStatus::failed) ||
         (from == TaskStatus::failed && to == TaskStatus::queued);
}

void refresh_distances(ResearchQuestionArtifact& a) {
  a.dist_q_chars = edit_distance(a.initial_question, a.current_question, Granularity::chars);
  a.dist_q_words = edit_distance(a.initial_question, a.current_question, Granularity::words);
  a.dist_c_chars = edit_distance(a.initial_contribution, a.current_contribution, Granularity::chars);
  a.dist_c_words = edit_distance(a.initial_contribution, a.current_contribution, Granularity::words);
}

// -- replay --------------------------------------------------------------------

namespace {

[[noreturn]] void corrupt(const EditRecord& e, std::string_view what) {
  throw Error(ErrorCode::ledger_corruption, "edit " + e.id + ": " + std::string(what), e.field_name);
}

void apply_text(const EditRecord& e, std::string& target, const std::string& original, const std::string& next) {
  if (target != original) corrupt(e, "original_value does not match the replayed state");
  target = next;
}

}  // namespace

ResearchQuestionArtifact replay_state(const ResearchQuestionArtifact& artifact, std::span<const EditRecord> history) {
  ResearchQuestionArtifact state = artifact;
  state.current_question = artifact.initial_question;
  state.current_contribution = artifact.initial_contribution;
  state.quality_rating.reset();
  state.deleted = false;

  for (const auto& e : history) {
    if (e.entity_id != artifact.id) corrupt(e, "references a different entity");
    switch (e.edit_type) {
      case EditType::context_generation:
        break;
      case EditType::direct_edit:
      case EditType::prompt_regeneration:
        if (e.field_name == kFieldQuestion) {
          apply_text(e, state.current_question, e.original_value, e.new_value);
        } else if (e.field_name == kFieldContribution) {
          apply_text(e, state.current_contribution, e.original_value, e.new_value);
        } else if (e.field_name == kFieldBoth) {
          Json before, after;
          try {
            before = Json::parse(e.original_value);
            after = Json::parse(e.new_value);
            apply_text(e, state.current_question, before.at("question").get<std::string>(),
                       after.at("question").get<std::string>());
            apply_text(e, state.current_contribution, before.at("contribution").get<std::string>(),
                       after.at("contribution").get<std::string>());
          } catch (const Json::exception&) {
            corrupt(e, "malformed two-field payload");
          }
        } else {
          corrupt(e, "unknown field '" + e.field_name + "'");
        }
        break;
      case EditType::rating: {
        const std::string running = state.quality_rating ? std::to_string(*state.quality_rating) : "";
        if (running != e.original_value) corrupt(e, "original rating does not match the replayed state");
        try {
          state.quality_rating = std::stoi(e.new_value);
        } catch (const std::exception&) {
          corrupt(e, "rating is not an integer");
        }
        break;
      }
      case EditType::deletion:
        if (state.deleted) corrupt(e, "artifact already deleted");
        state.deleted = true;
        break;
    }
  }
  refresh_distances(state);
  return state;
}

// -- JSON ----------------------------------------------------------------------

void to_json(Json& j, const PaperRecord& v) {
  j = Json{{"id", v.id},
           {"title", v.title},
           {"authors", v.authors},
           {"abstract", v.abstract_text},
           {"full_text", v.full_text},
           {"created_at", format_rfc3339(v.created_at)}};
  put_opt(j, "source_url", v.source_url);
}

void from_json(const Json& j, PaperRecord& v) {
  v.id = get_string_or(j, "id", "");
  v.title = get_string(j, "title");
  v.authors = get_string_or(j, "authors", "");
  v.abstract_text = get_string_or(j, "abstract", "");
  v.full_text = get_string_or(j, "full_text", "");
  v.source_url = get_opt_string(j, "source_url");
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const ResearchQuestionArtifact& v) {
  j = Json{{"id", v.id},
           {"paper_id", v.paper_id},
           {"session_id", v.session_id},
           {"position", v.position},
           {"initial_question", v.initial_question},
           {"current_question", v.current_question},
           {"initial_contribution", v.initial_contribution},
           {"current_contribution", v.current_contribution},
           {"quality_rating", v.quality_rating ? Json(*v.quality_rating) : Json(nullptr)},
           {"deleted", v.deleted},
           {"dist_q_chars", v.dist_q_chars},
           {"dist_q_words", v.dist_q_words},
           {"dist_c_chars", v.dist_c_chars},
           {"dist_c_words", v.dist_c_words},
           {"knowledge_processed", v.knowledge_processed},
           {"created_at", format_rfc3339(v.created_at)}};
  put_opt(j, "task_id", v.task_id);
}

void from_json(const Json& j, ResearchQuestionArtifact& v) {
  v.id = get_string(j, "id");
  v.paper_id = get_string(j, "paper_id");
  v.session_id = get_string(j, "session_id");
  v.task_id = get_opt_string(j, "task_id");
  v.position = get_int_or(j, "position", 1);
  v.initial_question = get_string(j, "initial_question");
  v.current_question = get_string(j, "current_question");
  v.initial_contribution = get_string(j, "initial_contribution");
  v.current_contribution = get_string(j, "current_contribution");
  auto rating = j.find("quality_rating");
  if (rating != j.end() && !rating->is_null()) {
    if (!rating->is_number_integer()) field_error("quality_rating", "expected an integer");
    v.quality_rating = rating->get<int>();
  } else {
    v.quality_rating.reset();
  }
  v.deleted = get_bool_or(j, "deleted", false);
  v.dist_q_chars = get_int_or<std::uint64_t>(j, "dist_q_chars", 0);
  v.dist_q_words = get_int_or<std::uint64_t>(j, "dist_q_words", 0);
  v.dist_c_chars = get_int_or<std::uint64_t>(j, "dist_c_chars", 0);
  v.dist_c_words = get_int_or<std::uint64_t>(j, "dist_c_words", 0);
  v.knowledge_processed = get_bool_or(j, "knowledge_processed", false);
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const EditRecord& v) {
  j = Json{{"id", v.id},
           {"entity_type", to_string(v.entity_type)},
           {"entity_id", v.entity_id},
           {"edit_type", to_string(v.edit_type)},
           {"field_name", v.field_name},
           {"original_value", v.original_value},
           {"new_value", v.new_value},
           {"created_at", format_rfc3339(v.created_at)},
           {"processed", v.processed}};
  put_opt(j, "user_prompt", v.user_prompt);
}

void from_json(const Json& j, EditRecord& v) {
  v.id = get_string(j, "id");
  v.entity_type = get_enum<EntityType>(j, "entity_type", parse_entity_type);
  v.entity_id = get_string(j, "entity_id");
  v.edit_type = get_enum<EditType>(j, "edit_type", parse_edit_type);
  v.field_name = get_string(j, "field_name");
  v.original_value = get_string_or(j, "original_value", "");
  v.new_value = get_string_or(j, "new_value", "");
  v.user_prompt = get_opt_string(j, "user_prompt");
  v.created_at = get_time(j, "created_at");
  v.processed = get_bool_or(j, "processed", false);
}

void to_json(Json& j, const GenerationMetadata& v) {
  j = Json{{"entity_id", v.entity_id},
           {"generation_prompt", v.generation_prompt},
           {"model_id", v.model_id},
           {"temperature", v.temperature},
           {"max_tokens", v.max_tokens},
           {"trace_id", v.trace_id},
           {"knowledge_rule", v.knowledge_rule},
           {"knowledge_entries", v.knowledge_entries},
           {"created_at", format_rfc3339(v.created_at)}};
}

void from_json(const Json& j, GenerationMetadata& v) {
  v.entity_id = get_string(j, "entity_id");
  v.generation_prompt = get_string(j, "generation_prompt");
  v.model_id = get_string(j, "model_id");
  const Json& t = need(j, "temperature");
  if (!t.is_number()) field_error("temperature", "expected a number");
  v.temperature = t.get<double>();
  v.max_tokens = get_int_or(j, "max_tokens", 0);
  v.trace_id = get_string_or(j, "trace_id", "");
  v.knowledge_rule = get_string_or(j, "knowledge_rule", "");
  v.knowledge_entries = get_int_or<std::size_t>(j, "knowledge_entries", 0);
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const KnowledgeEntry& v) {
  j = Json{{"id", v.id},
           {"text", v.text},
           {"category", to_string(v.category)},
           {"scope", to_string(v.scope.kind)},
           {"scope_id", v.scope.kind == ScopeKind::global ? Json(nullptr) : Json(v.scope.owner)},
           {"source_question_ids", v.source_question_ids},
           {"created_at", format_rfc3339(v.created_at)},
           {"created_by", v.created_by}};
}

void from_json(const Json& j, KnowledgeEntry& v) {
  v.id = get_string(j, "id");
  v.text = get_string(j, "text");
  v.category = get_enum<KnowledgeCategory>(j, "category", parse_category);
  v.scope.kind = get_enum<ScopeKind>(j, "scope", parse_scope_kind);
  v.scope.owner = get_string_or(j, "scope_id", "");
  const Json& ids = need(j, "source_question_ids");
  if (!ids.is_array()) field_error("source_question_ids", "expected an array");
  v.source_question_ids.clear();
  for (const auto& id : ids) {
    if (!id.is_string()) field_error("source_question_ids", "expected string ids");
    v.source_question_ids.push_back(id.get<std::string>());
  }
  v.created_at = get_time(j, "created_at");
  v.created_by = get_string_or(j, "created_by", "");
}

void to_json(Json& j, const Participant& v) {
  j = Json{{"id", v.id},
           {"project_id", v.project_id},
           {"domain_expertise", v.domain_expertise},
           {"order_index", v.order_index},
           {"status", to_string(v.status)}};
}

void from_json(const Json& j, Participant& v) {
  v.id = get_string(j, "id");
  v.project_id = get_string(j, "project_id");
  v.domain_expertise = get_string_or(j, "domain_expertise", "");
  v.order_index = get_int_or(j, "order_index", 1);
  v.status = j.contains("status") ? get_enum<ParticipantStatus>(j, "status", parse_participant_status)
                                  : ParticipantStatus::pending;
}

void to_json(Json& j, const EvaluationSession& v) {
  j = Json{{"id", v.id},
           {"participant_id", v.participant_id},
           {"project_id", v.project_id},
           {"paper_id", v.paper_id},
           {"started_at", format_rfc3339(v.started_at)},
           {"trace_id", v.trace_id},
           {"total_q_chars", v.total_q_chars},
           {"total_c_chars", v.total_c_chars},
           {"total_q_words", v.total_q_words},
           {"total_c_words", v.total_c_words}};
  put_opt_time(j, "ended_at", v.ended_at);
  auto d = v.duration_seconds();
  j["duration_seconds"] = d ? Json(*d) : Json(nullptr);
}

void from_json(const Json& j, EvaluationSession& v) {
  v.id = get_string(j, "id");
  v.participant_id = get_string(j, "participant_id");
  v.project_id = get_string_or(j, "project_id", "");
  v.paper_id = get_string(j, "paper_id");
  v.started_at = get_time(j, "started_at");
  v.ended_at = get_opt_time(j, "ended_at");
  v.trace_id = get_string_or(j, "trace_id", "");
  v.total_q_chars = get_int_or<std::uint64_t>(j, "total_q_chars", 0);
  v.total_c_chars = get_int_or<std::uint64_t>(j, "total_c_chars", 0);
  v.total_q_words = get_int_or<std::uint64_t>(j, "total_q_words", 0);
  v.total_c_words = get_int_or<std::uint64_t>(j, "total_c_words", 0);
}

void to_json(Json& j, const StatusTransition& v) {
  j = Json{{"from", to_string(v.from)}, {"to", to_string(v.to)}, {"at", format_rfc3339(v.at)}};
}

void from_json(const Json& j, StatusTransition& v) {
  v.from = get_enum<TaskStatus>(j, "from", parse_task_status);
  v.to = get_enum<TaskStatus>(j, "to", parse_task_status);
  v.at = get_time(j, "at");
}

void to_json(Json& j, const AgentTask& v) {
  j = Json{{"id", v.id},
           {"task_type", to_string(v.task_type)},
           {"status", to_string(v.status)},
           {"input_data", v.input_data},
           {"output_data", v.output_data ? *v.output_data : Json(nullptr)},
           {"attempts", v.attempts},
           {"created_at", format_rfc3339(v.created_at)},
           {"history", v.history}};
  put_opt(j, "error_message", v.error_message);
  put_opt(j, "worker_id", v.worker_id);
  put_opt_time(j, "claimed_at", v.claimed_at);
}

void from_json(const Json& j, AgentTask& v) {
  v.id = get_string(j, "id");
  v.task_type = get_enum<TaskType>(j, "task_type", parse_task_type);
  v.status = get_enum<TaskStatus>(j, "status", parse_task_status);
  v.input_data = j.value("input_data", Json::object());
  auto out = j.find("output_data");
  v.output_data = (out == j.end() || out->is_null()) ? std::nullopt : std::optional<Json>(*out);
  v.attempts = get_int_or(j, "attempts", 0);
  v.error_message = get_opt_string(j, "error_message");
  v.worker_id = get_opt_string(j, "worker_id");
  v.claimed_at = get_opt_time(j, "claimed_at");
  v.created_at = get_time(j, "created_at");
  v.history.clear();
  if (auto h = j.find("history"); h != j.end() && h->is_array()) {
    for (const auto& item : *h) {
      StatusTransition t;
      from_json(item, t);
      v.history.push_back(t);
    }
  }
}

void to_json(Json& j, const TaskLogEntry& v) {
  j = Json{{"task_id", v.task_id},
           {"sequence_no", v.sequence_no},
           {"log_type", to_string(v.log_type)},
           {"message", v.message},
           {"created_at", format_rfc3339(v.created_at)}};
}

void from_json(const Json& j, TaskLogEntry& v) {
  v.task_id = get_string(j, "task_id");
  v.sequence_no = get_int_or<std::int64_t>(j, "sequence_no", 0);
  v.log_type = get_enum<LogType>(j, "log_type", parse_log_type);
  v.message = get_string_or(j, "message", "");
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const TaskAction& v) {
  j = Json{{"id", v.id},
           {"task_id", v.task_id},
           {"action_type", v.action_type},
           {"attempts", v.attempt},
           {"status", v.status},
           {"started_at", format_rfc3339(v.started_at)}};
  put_opt(j, "error_message", v.error_message);
  put_opt_time(j, "finished_at", v.finished_at);
}

void from_json(const Json& j, TaskAction& v) {
  v.id = get_string(j, "id");
  v.task_id = get_string(j, "task_id");
  v.action_type = get_string(j, "action_type");
  v.attempt = get_int_or(j, "attempts", 0);
  v.status = get_string_or(j, "status", "");
  v.error_message = get_opt_string(j, "error_message");
  v.started_at = get_time(j, "started_at");
  v.finished_at = get_opt_time(j, "finished_at");
}

void to_json(Json& j, const ApiLog& v) {
  j = Json{{"id", v.id},
           {"search_terms", v.search_terms},
           {"papers_found", v.papers_found},
           {"created_at", format_rfc3339(v.created_at)}};
  put_opt(j, "task_id", v.task_id);
}

void from_json(const Json& j, ApiLog& v) {
  v.id = get_string(j, "id");
  v.task_id = get_opt_string(j, "task_id");
  v.search_terms = get_string_or(j, "search_terms", "");
  v.papers_found = get_int_or(j, "papers_found", 0);
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const TraceRecord& v) {
  j = Json{{"trace_id", v.trace_id},
           {"request", v.request},
           {"response", v.response},
           {"created_at", format_rfc3339(v.created_at)}};
  put_opt(j, "task_id", v.task_id);
}

void from_json(const Json& j, TraceRecord& v) {
  v.trace_id = get_string(j, "trace_id");
  v.task_id = get_opt_string(j, "task_id");
  v.request = j.value("request", Json::object());
  v.response = j.value("response", Json::object());
  v.created_at = get_time(j, "created_at");
}

void to_json(Json& j, const UserInteraction& v) {
  j = Json{{"id", v.id},
           {"participant_id", v.participant_id},
           {"interaction_type", v.interaction_type},
           {"entity_id", v.entity_id},
           {"created_at", format_rfc3339(v.created_at)}};
}

void from_json(const Json& j, UserInteraction& v) {
  v.id = get_string(j, "id");
  v.participant_id = get_string_or(j, "participant_id", "");
  v.interaction_type = get_string_or(j, "interaction_type", "");
  v.entity_id = get_string_or(j, "entity_id", "");
  v.created_at = get_time(j, "created_at");
}

template <typename T>
T decode(const Json& j) {
  try {
    T v;
    from_json(j, v);
    return v;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation_failed, e.what());
  }
}

template PaperRecord decode<PaperRecord>(const Json&);
template ResearchQuestionArtifact decode<ResearchQuestionArtifact>(const Json&);
template EditRecord decode<EditRecord>(const Json&);
template GenerationMetadata decode<GenerationMetadata>(const Json&);
template KnowledgeEntry decode<KnowledgeEntry>(const Json&);
template Participant decode<Participant>(const Json&);
template EvaluationSession decode<EvaluationSession>(const Json&);
template AgentTask decode<AgentTask>(const Json&);
template TaskLogEntry decode<TaskLogEntry>(const Json&);
template TaskAction decode<TaskAction>(const Json&);
template ApiLog decode<ApiLog>(const Json&);
template TraceRecord decode<TraceRecord>(const Json&);
template UserInteraction decode<UserInteraction>(const Json&);

}  // namespace cmda

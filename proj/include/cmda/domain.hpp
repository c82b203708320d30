#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmda/clock.hpp"

namespace cmda {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Closed enumerations. Wire spellings are lowercase snake_case and are part of
// the external contract; `parse_*` returns nullopt for anything outside the set.

enum class EntityType { research_question, contribution, title, other };
enum class EditType { direct_edit, prompt_regeneration, context_generation, deletion, rating };
enum class KnowledgeCategory { domain_terminology_evolution, methodological_refinements, conceptual_depth_changes };
enum class ScopeKind { user, project, global };
enum class ParticipantStatus { pending, active, done };
enum class TaskType { fetch_paper_content, generate_evaluation_questions, extract_implicit_knowledge };
enum class TaskStatus { queued, running, completed, failed };
enum class LogType { info, warn, error, node_enter, node_exit };

inline constexpr std::array<KnowledgeCategory, 3> kAllCategories = {
    KnowledgeCategory::domain_terminology_evolution,
    KnowledgeCategory::methodological_refinements,
    KnowledgeCategory::conceptual_depth_changes,
};

std::string_view to_string(EntityType v);
std::string_view to_string(EditType v);  // deletion -> "delete"
std::string_view to_string(KnowledgeCategory v);
std::string_view to_string(ScopeKind v);
std::string_view to_string(ParticipantStatus v);
std::string_view to_string(TaskType v);
std::string_view to_string(TaskStatus v);
std::string_view to_string(LogType v);

std::optional<EntityType> parse_entity_type(std::string_view s);
std::optional<EditType> parse_edit_type(std::string_view s);
std::optional<KnowledgeCategory> parse_category(std::string_view s);
std::optional<ScopeKind> parse_scope_kind(std::string_view s);
std::optional<ParticipantStatus> parse_participant_status(std::string_view s);
std::optional<TaskType> parse_task_type(std::string_view s);
std::optional<TaskStatus> parse_task_status(std::string_view s);
std::optional<LogType> parse_log_type(std::string_view s);

// Human-readable heading, e.g. "Domain Terminology Evolution".
std::string_view category_title(KnowledgeCategory v);

// Artifact fields that edits may target.
inline constexpr std::string_view kFieldQuestion = "question";
inline constexpr std::string_view kFieldContribution = "contribution";
inline constexpr std::string_view kFieldBoth = "both";  // prompt regeneration of both fields
inline constexpr std::string_view kFieldRating = "quality_rating";
inline constexpr std::string_view kFieldDeleted = "deleted";

// ---------------------------------------------------------------------------
// Entities

struct PaperRecord {
  std::string id;
  std::string title;
  std::string authors;
  std::string abstract_text;
  std::string full_text;
  std::optional<std::string> source_url;
  Timestamp created_at{};

  bool operator==(const PaperRecord&) const = default;
};

// Bidirectional artifact: immutable initial state, mutable current state, and
// the four distances between them.
struct ResearchQuestionArtifact {
  std::string id;
  std::string paper_id;
  std::string session_id;
  std::optional<std::string> task_id;  // generation task that produced it
  int position = 1;
  std::string initial_question;
  std::string current_question;
  std::string initial_contribution;
  std::string current_contribution;
  std::optional<int> quality_rating;
  bool deleted = false;
  std::uint64_t dist_q_chars = 0;
  std::uint64_t dist_q_words = 0;
  std::uint64_t dist_c_chars = 0;
  std::uint64_t dist_c_words = 0;
  bool knowledge_processed = false;
  Timestamp created_at{};

  bool operator==(const ResearchQuestionArtifact&) const = default;
};

struct EditRecord {
  std::string id;
  EntityType entity_type = EntityType::research_question;
  std::string entity_id;
  EditType edit_type = EditType::direct_edit;
  std::string field_name;
  std::string original_value;
  std::string new_value;
  std::optional<std::string> user_prompt;
  Timestamp created_at{};
  bool processed = false;

  bool operator==(const EditRecord&) const = default;
};

struct GenerationMetadata {
  std::string entity_id;
  std::string generation_prompt;
  std::string model_id;
  double temperature = 0.0;
  int max_tokens = 0;
  std::string trace_id;
  std::string knowledge_rule;  // which injection rule fired, and whether a block was injected
  std::size_t knowledge_entries = 0;
  Timestamp created_at{};

  bool operator==(const GenerationMetadata&) const = default;
};

struct KnowledgeScope {
  ScopeKind kind = ScopeKind::project;
  std::string owner;  // participant id for user scope, project id for project scope, empty for global

  static KnowledgeScope user(std::string participant_id) { return {ScopeKind::user, std::move(participant_id)}; }
  static KnowledgeScope project(std::string project_id) { return {ScopeKind::project, std::move(project_id)}; }
  static KnowledgeScope global() { return {ScopeKind::global, {}}; }

  bool operator==(const KnowledgeScope&) const = default;
};

struct KnowledgeEntry {
  std::string id;
  std::string text;
  KnowledgeCategory category = KnowledgeCategory::conceptual_depth_changes;
  KnowledgeScope scope;
  std::vector<std::string> source_question_ids;
  Timestamp created_at{};
  std::string created_by;

  bool operator==(const KnowledgeEntry&) const = default;
};

struct Participant {
  std::string id;
  std::string project_id;
  std::string domain_expertise;
  int order_index = 1;
  ParticipantStatus status = ParticipantStatus::pending;

  bool operator==(const Participant&) const = default;
};

struct EvaluationSession {
  std::string id;
  std::string participant_id;
  std::string project_id;
  std::string paper_id;
  Timestamp started_at{};
  std::optional<Timestamp> ended_at;
  std::string trace_id;
  // Aggregates written when the session ends.
  std::uint64_t total_q_chars = 0;
  std::uint64_t total_c_chars = 0;
  std::uint64_t total_q_words = 0;
  std::uint64_t total_c_words = 0;

  std::optional<double> duration_seconds() const;

  bool operator==(const EvaluationSession&) const = default;
};

struct StatusTransition {
  TaskStatus from = TaskStatus::queued;
  TaskStatus to = TaskStatus::queued;
  Timestamp at{};

  bool operator==(const StatusTransition&) const = default;
};

struct AgentTask {
  std::string id;
  TaskType task_type = TaskType::fetch_paper_content;
  TaskStatus status = TaskStatus::queued;
  Json input_data = Json::object();
  std::optional<Json> output_data;
  int attempts = 0;
  std::optional<std::string> error_message;
  std::optional<std::string> worker_id;
  std::optional<Timestamp> claimed_at;
  Timestamp created_at{};
  std::vector<StatusTransition> history;

  bool operator==(const AgentTask&) const = default;
};

struct TaskLogEntry {
  std::string task_id;
  std::int64_t sequence_no = 0;
  LogType log_type = LogType::info;
  std::string message;
  Timestamp created_at{};

  bool operator==(const TaskLogEntry&) const = default;
};

// One row per workflow node execution.
struct TaskAction {
  std::string id;
  std::string task_id;
  std::string action_type;  // node name
  int attempt = 0;
  std::string status;       // "running" | "ok" | "error"
  std::optional<std::string> error_message;
  Timestamp started_at{};
  std::optional<Timestamp> finished_at;

  bool operator==(const TaskAction&) const = default;
};

struct ApiLog {
  std::string id;
  std::optional<std::string> task_id;
  std::string search_terms;
  int papers_found = 0;
  Timestamp created_at{};

  bool operator==(const ApiLog&) const = default;
};

struct TraceRecord {
  std::string trace_id;
  std::optional<std::string> task_id;
  Json request = Json::object();
  Json response = Json::object();  // {"text",...} or {"error","code"}
  Timestamp created_at{};

  bool operator==(const TraceRecord&) const = default;
};

struct UserInteraction {
  std::string id;
  std::string participant_id;
  std::string interaction_type;
  std::string entity_id;
  Timestamp created_at{};

  bool operator==(const UserInteraction&) const = default;
};

// ---------------------------------------------------------------------------
// Validation. Each function returns one message per violated rule; an empty
// list means the value is acceptable.

inline constexpr std::size_t kMaxInsightChars = 400;
inline constexpr std::size_t kMaxInsightSentences = 2;

// Counts runs of terminal punctuation followed by whitespace or end of text;
// trailing text without a terminator counts as one more sentence.
std::size_t count_sentences(std::string_view text);

using IdResolver = std::function<bool(const std::string&)>;

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Accepts loosely-typed input (e.g. raw model output merged with provenance).
// Never throws on malformed JSON shapes.
ValidationResult validate_knowledge_entry(const Json& candidate, const IdResolver& artifact_exists);
ValidationResult validate_knowledge_entry(const KnowledgeEntry& entry, const IdResolver& artifact_exists);

std::vector<std::string> validate(const PaperRecord& v);
std::vector<std::string> validate(const ResearchQuestionArtifact& v);
std::vector<std::string> validate(const EditRecord& v);
std::vector<std::string> validate(const GenerationMetadata& v);
std::vector<std::string> validate(const KnowledgeEntry& v);  // provenance resolution is the store's job
std::vector<std::string> validate(const Participant& v);
std::vector<std::string> validate(const EvaluationSession& v);
std::vector<std::string> validate(const AgentTask& v);
std::vector<std::string> validate(const TaskLogEntry& v);
std::vector<std::string> validate(const TaskAction& v);
std::vector<std::string> validate(const ApiLog& v);
std::vector<std::string> validate(const TraceRecord& v);
std::vector<std::string> validate(const UserInteraction& v);

bool is_legal_transition(TaskStatus from, TaskStatus to);

// Recomputes the four distance fields from the initial/current texts.
void refresh_distances(ResearchQuestionArtifact& artifact);

// Starting from the initial state, applies each edit in order and returns the
// reconstructed artifact. Creation markers (context_generation) carry no state
// change. Throws Error{ledger_corruption} when an edit's original_value does
// not match the running state, or when an edit references another artifact.
ResearchQuestionArtifact replay_state(const ResearchQuestionArtifact& artifact, std::span<const EditRecord> history);

// ---------------------------------------------------------------------------
// JSON (snake_case fields, RFC 3339 timestamps, lowercase enum strings).

void to_json(Json& j, const PaperRecord& v);
void from_json(const Json& j, PaperRecord& v);
void to_json(Json& j, const ResearchQuestionArtifact& v);
void from_json(const Json& j, ResearchQuestionArtifact& v);
void to_json(Json& j, const EditRecord& v);
void from_json(const Json& j, EditRecord& v);
void to_json(Json& j, const GenerationMetadata& v);
void from_json(const Json& j, GenerationMetadata& v);
void to_json(Json& j, const KnowledgeEntry& v);
void from_json(const Json& j, KnowledgeEntry& v);
void to_json(Json& j, const Participant& v);
void from_json(const Json& j, Participant& v);
void to_json(Json& j, const EvaluationSession& v);
void from_json(const Json& j, EvaluationSession& v);
void to_json(Json& j, const StatusTransition& v);
void from_json(const Json& j, StatusTransition& v);
void to_json(Json& j, const AgentTask& v);
void from_json(const Json& j, AgentTask& v);
void to_json(Json& j, const TaskLogEntry& v);
void from_json(const Json& j, TaskLogEntry& v);
void to_json(Json& j, const TaskAction& v);
void from_json(const Json& j, TaskAction& v);
void to_json(Json& j, const ApiLog& v);
void from_json(const Json& j, ApiLog& v);
void to_json(Json& j, const TraceRecord& v);
void from_json(const Json& j, TraceRecord& v);
void to_json(Json& j, const UserInteraction& v);
void from_json(const Json& j, UserInteraction& v);

// Decodes with domain errors instead of nlohmann exceptions.
template <typename T>
T decode(const Json& j);

}  // namespace cmda

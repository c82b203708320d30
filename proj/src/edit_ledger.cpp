#include "cmda/edit_ledger.hpp"

#include <numeric>
#include <set>

#include "cmda/errors.hpp"

namespace cmda {

namespace {

std::string rating_text(const std::optional<int>& rating) { return rating ? std::to_string(*rating) : ""; }

void check_current(const std::string& field, const std::string& stored, const std::string& claimed) {
  if (stored != claimed) {
    throw Error(ErrorCode::conflict, "stale original_value for " + field + "; re-read the artifact", field);
  }
}

}  // namespace

std::string encode_field_pair(const std::string& question, const std::string& contribution) {
  return Json{{"contribution", contribution}, {"question", question}}.dump();
}

bool changes_text(const EditRecord& edit) {
  return (edit.edit_type == EditType::direct_edit || edit.edit_type == EditType::prompt_regeneration) &&
         edit.original_value != edit.new_value;
}

EditOutcome record_edit(Transaction& tx, const EditRequest& request) {
  auto artifact = tx.get<ResearchQuestionArtifact>(request.artifact_id);
  if (!artifact) throw Error(ErrorCode::not_found, "unknown artifact '" + request.artifact_id + "'", "id");
  if (artifact->deleted) throw Error(ErrorCode::gone, "artifact '" + request.artifact_id + "' was deleted", "id");

  EditRecord edit;
  edit.entity_id = artifact->id;
  edit.edit_type = request.edit_type;
  edit.field_name = request.field_name;
  edit.original_value = request.original_value;
  edit.new_value = request.new_value;
  edit.user_prompt = request.user_prompt;
  edit.entity_type = EntityType::research_question;

  switch (request.edit_type) {
    case EditType::direct_edit:
    case EditType::prompt_regeneration:
      if (request.field_name == kFieldQuestion) {
        check_current(request.field_name, artifact->current_question, request.original_value);
        artifact->current_question = request.new_value;
      } else if (request.field_name == kFieldContribution) {
        check_current(request.field_name, artifact->current_contribution, request.original_value);
        artifact->current_contribution = request.new_value;
        edit.entity_type = EntityType::contribution;
      } else if (request.field_name == kFieldBoth && request.edit_type == EditType::prompt_regeneration) {
        Json before, after;
        try {
          before = Json::parse(request.original_value);
          after = Json::parse(request.new_value);
          check_current(std::string(kFieldQuestion), artifact->current_question,
                        before.at("question").get<std::string>());
          check_current(std::string(kFieldContribution), artifact->current_contribution,
                        before.at("contribution").get<std::string>());
          artifact->current_question = after.at("question").get<std::string>();
          artifact->current_contribution = after.at("contribution").get<std::string>();
        } catch (const Json::exception&) {
          throw Error(ErrorCode::invalid_argument, "two-field edits need {question, contribution} payloads",
                      "new_value");
        }
      } else {
        throw Error(ErrorCode::invalid_argument, "field_name must be 'question' or 'contribution'", "field_name");
      }
      break;
    case EditType::rating: {
      if (request.field_name != kFieldRating) {
        throw Error(ErrorCode::invalid_argument, "rating edits target 'quality_rating'", "field_name");
      }
      int rating = 0;
      try {
        std::size_t used = 0;
        rating = std::stoi(request.new_value, &used);
        if (used != request.new_value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::validation_failed, "rating must be an integer in 1..5", "rating");
      }
      if (rating < 1 || rating > 5) throw Error(ErrorCode::validation_failed, "rating must be in 1..5", "rating");
      check_current(request.field_name, rating_text(artifact->quality_rating), request.original_value);
      artifact->quality_rating = rating;
      break;
    }
    case EditType::deletion:
      if (request.field_name != kFieldDeleted) {
        throw Error(ErrorCode::invalid_argument, "delete edits target 'deleted'", "field_name");
      }
      check_current(request.field_name, "false", request.original_value);
      artifact->deleted = true;
      break;
    case EditType::context_generation:
      throw Error(ErrorCode::invalid_argument, "context_generation records are written by the generator",
                  "edit_type");
  }

  refresh_distances(*artifact);
  // New edits are unprocessed, so the artifact is no longer fully processed.
  artifact->knowledge_processed = false;

  edit.id = tx.next_id("edit");
  edit.created_at = tx.now();
  edit.processed = false;
  tx.put(edit);
  tx.put(*artifact);
  return {*artifact, edit};
}

EditOutcome record_edit(Store& store, const EditRequest& request) {
  return store.transact([&](Transaction& tx) { return record_edit(tx, request); });
}

EditOutcome rate_artifact(Store& store, const std::string& artifact_id, int rating) {
  return store.transact([&](Transaction& tx) {
    auto artifact = tx.get<ResearchQuestionArtifact>(artifact_id);
    if (!artifact) throw Error(ErrorCode::not_found, "unknown artifact '" + artifact_id + "'", "id");
    EditRequest req;
    req.artifact_id = artifact_id;
    req.edit_type = EditType::rating;
    req.field_name = std::string(kFieldRating);
    req.original_value = rating_text(artifact->quality_rating);
    req.new_value = std::to_string(rating);
    return record_edit(tx, req);
  });
}

EditOutcome delete_artifact(Store& store, const std::string& artifact_id) {
  EditRequest req;
  req.artifact_id = artifact_id;
  req.edit_type = EditType::deletion;
  req.field_name = std::string(kFieldDeleted);
  req.original_value = "false";
  req.new_value = "true";
  return record_edit(store, req);
}

std::vector<EditRecord> artifact_history(const Store& store, const std::string& artifact_id) {
  StoreQuery q;
  q.entity_id = artifact_id;
  return store.query<EditRecord>(q);
}

SessionMetrics session_metrics(const Store& store, const std::string& session_id) {
  auto session = store.get<EvaluationSession>(session_id);
  if (!session) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'", "session_id");

  SessionMetrics m;
  m.duration_seconds = session->duration_seconds();
  StoreQuery q;
  q.session_id = session_id;
  std::vector<int> ratings;
  for (const auto& a : store.query<ResearchQuestionArtifact>(q)) {
    if (a.deleted) {
      ++m.deleted;
      continue;
    }
    ++m.artifacts;
    m.q_chars += a.dist_q_chars;
    m.c_chars += a.dist_c_chars;
    m.q_words += a.dist_q_words;
    m.c_words += a.dist_c_words;
    if (a.quality_rating) ratings.push_back(*a.quality_rating);
  }
  if (!ratings.empty()) {
    m.mean_rating = static_cast<double>(std::accumulate(ratings.begin(), ratings.end(), 0)) /
                    static_cast<double>(ratings.size());
  }

  std::set<std::pair<std::string, std::string>> fields;
  for (const auto& e : store.query<EditRecord>(q)) {
    ++m.edit_counts[e.edit_type];
    if (e.edit_type == EditType::direct_edit || e.edit_type == EditType::prompt_regeneration) {
      if (e.field_name == kFieldBoth) {
        fields.emplace(e.entity_id, std::string(kFieldQuestion));
        fields.emplace(e.entity_id, std::string(kFieldContribution));
      } else {
        fields.emplace(e.entity_id, e.field_name);
      }
    }
  }
  m.edited_fields = fields.size();
  return m;
}

EvaluationSession end_session(Store& store, const std::string& session_id, Timestamp ended_at) {
  auto metrics = session_metrics(store, session_id);
  return store.transact([&](Transaction& tx) {
    auto session = tx.get<EvaluationSession>(session_id);
    if (!session) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'", "session_id");
    session->ended_at = ended_at;
    session->total_q_chars = metrics.q_chars;
    session->total_c_chars = metrics.c_chars;
    session->total_q_words = metrics.q_words;
    session->total_c_words = metrics.c_words;
    tx.put(*session);
    return *session;
  });
}

}  // namespace cmda

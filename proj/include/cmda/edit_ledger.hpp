#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmda/domain.hpp"
#include "cmda/edit_distance.hpp"
#include "cmda/storage.hpp"

namespace cmda {

struct EditRequest {
  std::string artifact_id;
  EditType edit_type = EditType::direct_edit;
  std::string field_name;      // question | contribution; "both" only for prompt_regeneration
  std::string original_value;  // must equal the stored current value (optimistic check)
  std::string new_value;
  std::optional<std::string> user_prompt;
};

struct EditOutcome {
  ResearchQuestionArtifact artifact;
  EditRecord edit;
};

// Persists the EditRecord (processed = false), applies new_value to the
// artifact's current state and recomputes all four distances. Errors:
// not_found (unknown artifact), gone (soft-deleted), conflict (stale
// original_value), invalid_argument (field), validation_failed (record rules).
EditOutcome record_edit(Store& store, const EditRequest& request);
EditOutcome record_edit(Transaction& tx, const EditRequest& request);

EditOutcome rate_artifact(Store& store, const std::string& artifact_id, int rating);
EditOutcome delete_artifact(Store& store, const std::string& artifact_id);

// Serialized original/new payload for a two-field regeneration edit.
std::string encode_field_pair(const std::string& question, const std::string& contribution);

// True when the edit rewrote question/contribution text.
bool changes_text(const EditRecord& edit);

// Chronological edit history of one artifact.
std::vector<EditRecord> artifact_history(const Store& store, const std::string& artifact_id);

struct SessionMetrics {
  std::uint64_t q_chars = 0;
  std::uint64_t c_chars = 0;
  std::uint64_t q_words = 0;
  std::uint64_t c_words = 0;
  std::map<EditType, std::size_t> edit_counts;
  std::size_t edited_fields = 0;  // distinct (artifact, field) pairs touched by direct or prompt edits
  std::size_t artifacts = 0;      // non-deleted
  std::size_t deleted = 0;
  std::optional<double> mean_rating;
  std::optional<double> duration_seconds;

  std::size_t count(EditType t) const {
    auto it = edit_counts.find(t);
    return it == edit_counts.end() ? 0 : it->second;
  }
};

// Distance sums over non-deleted artifacts; edit counts over every record.
SessionMetrics session_metrics(const Store& store, const std::string& session_id);

// Closes the session and stores its aggregate distances.
EvaluationSession end_session(Store& store, const std::string& session_id, Timestamp ended_at);

}  // namespace cmda

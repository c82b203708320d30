#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmda/domain.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/prompts.hpp"
#include "cmda/storage.hpp"

namespace cmda::knowledge {

struct ExtractionCandidate {
  std::string text;
  KnowledgeCategory category = KnowledgeCategory::conceptual_depth_changes;

  bool operator==(const ExtractionCandidate&) const = default;
};

inline constexpr std::size_t kMaxEntriesPerExtraction = 3;
inline constexpr double kDefaultDuplicateThreshold = 0.85;

std::string build_extraction_prompt(std::string_view initial_question, std::string_view initial_contribution,
                                    std::string_view final_question, std::string_view final_contribution,
                                    std::span<const KnowledgeEntry> existing,
                                    std::string_view domain = prompts::kDefaultDomain);

struct ParsedExtraction {
  std::vector<ExtractionCandidate> candidates;
  std::vector<std::string> warnings;  // rejected elements, one line each
};

// Throws Error{parse_error} on malformed JSON or a non-array top level, and
// Error{contract_violation} when more than three elements are returned.
ParsedExtraction parse_extraction_response(std::string_view raw);

// Word-level Jaccard over lowercased, punctuation-stripped tokens.
double jaccard(std::string_view a, std::string_view b);

bool is_duplicate(const ExtractionCandidate& candidate, std::span<const KnowledgeEntry> existing,
                  double threshold = kDefaultDuplicateThreshold);

struct ExtractionOptions {
  std::string domain = std::string(prompts::kDefaultDomain);
  double duplicate_threshold = kDefaultDuplicateThreshold;
  llm::ModelConfig model;
  // Defaults to the project scope of the session owning the artifact.
  std::optional<ScopeKind> scope;
  std::optional<std::string> task_id;
};

struct ExtractionOutcome {
  std::vector<KnowledgeEntry> accepted;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
  bool llm_called = false;
  std::optional<std::string> trace_id;
  std::string skipped_reason;  // set when no model call was needed
};

// Extracts knowledge from one artifact's initial/current delta. Artifacts that
// are deleted, unchanged, or carry no unprocessed text edits are marked
// processed without a model call. Throws Error{precondition_failed} when the
// artifact is already processed; on any failure the flag is left untouched.
ExtractionOutcome extract_for_question(Store& store, llm::Gateway& gateway, const std::string& artifact_id,
                                       const ExtractionOptions& options = {});

// Whether extract_for_question would call the model for this artifact.
bool needs_model_call(const Store& store, const ResearchQuestionArtifact& artifact);

// Unprocessed artifacts of a project in processing order.
std::vector<ResearchQuestionArtifact> pending_artifacts(const Store& store, const std::string& project_id);

// Ids of the pending artifacts that will trigger a model call, in order.
std::vector<std::string> extraction_worklist(const Store& store, const std::string& project_id);

struct PassReport {
  std::size_t artifacts = 0;
  std::size_t llm_calls = 0;
  std::size_t entries_added = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> trace_ids;
  std::vector<std::pair<std::string, std::string>> failures;  // artifact id, message

  Json to_json() const;
};

// Runs extraction over every unprocessed artifact in the project. Individual
// failures are collected and leave the artifact for a later pass.
PassReport run_extraction_pass(Store& store, llm::Gateway& gateway, const std::string& project_id,
                               const ExtractionOptions& options = {});

}  // namespace cmda::knowledge

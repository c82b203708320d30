#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmda/context_assembler.hpp"
#include "cmda/domain.hpp"
#include "cmda/edit_ledger.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/prompts.hpp"
#include "cmda/storage.hpp"

namespace cmda::generation {

struct GeneratedQuestion {
  std::string question;
  std::string contribution;

  bool operator==(const GeneratedQuestion&) const = default;
};

// Which rule decides whether accumulated knowledge is injected.
//   participant_order: only for participants after the first (default)
//   store_non_empty:   whenever any visible knowledge exists
enum class KnowledgeGate { participant_order, store_non_empty };

std::string_view to_string(KnowledgeGate g);
std::optional<KnowledgeGate> parse_knowledge_gate(std::string_view s);

struct BuiltPrompt {
  std::string text;
  bool knowledge_injected = false;
  std::string rule;  // e.g. "participant_order>1:injected"
};

inline constexpr int kDefaultQuestionCount = 3;

// Pure. Throws Error{precondition_failed} when the paper has no full text.
BuiltPrompt build_generation_prompt(const PaperRecord& paper, std::string_view knowledge_block, int participant_order,
                                    KnowledgeGate gate = KnowledgeGate::participant_order,
                                    int question_count = kDefaultQuestionCount,
                                    std::string_view domain = prompts::kDefaultDomain);

// Numbered list with "Research Question:" / "Contribution:" labels; markdown
// headers, bold and surrounding prose are tolerated. Throws
// Error{parse_error} when nothing usable is found and
// Error{contract_violation} when the count differs from `expected`.
std::vector<GeneratedQuestion> parse_generation_response(std::string_view raw,
                                                         std::size_t expected = kDefaultQuestionCount);

struct GenerationOptions {
  KnowledgeGate gate = KnowledgeGate::participant_order;
  int question_count = kDefaultQuestionCount;
  int parse_retries = 2;  // extra attempts after a parse-level failure
  std::string domain = std::string(prompts::kDefaultDomain);
  llm::ModelConfig model;
  std::optional<std::size_t> context_cap;
  std::optional<std::string> task_id;
};

struct GenerationPlan {
  std::string paper_id;
  std::string session_id;
  BuiltPrompt prompt;
  context::AdaptiveContext context;
  std::vector<GeneratedQuestion> questions;
  std::string trace_id;
  int attempts = 0;
};

// Everything up to (not including) persistence: reads the paper, session and
// knowledge, calls the model and parses. Retries parse-level failures.
GenerationPlan plan_question_set(Store& store, llm::Gateway& gateway, const std::string& paper_id,
                                 const std::string& session_id, const GenerationOptions& options = {});

// Stages the artifacts, their metadata and creation markers. Positions
// continue after the session's existing artifacts for the paper.
std::vector<ResearchQuestionArtifact> commit_question_set(Transaction& tx, const GenerationPlan& plan,
                                                          const GenerationOptions& options = {});

std::vector<ResearchQuestionArtifact> generate_question_set(Store& store, llm::Gateway& gateway,
                                                            const std::string& paper_id,
                                                            const std::string& session_id,
                                                            const GenerationOptions& options = {});

enum class RegenerationScope { question, contribution, both };

std::string_view to_string(RegenerationScope s);
std::optional<RegenerationScope> parse_regeneration_scope(std::string_view s);

// Pure.
std::string build_regeneration_prompt(std::string_view current_question, std::string_view current_contribution,
                                      std::string_view user_prompt, std::string_view knowledge_block,
                                      RegenerationScope scope, std::string_view domain = prompts::kDefaultDomain);

struct RegeneratedFields {
  std::optional<std::string> question;
  std::optional<std::string> contribution;
};

// Expects a JSON object with the requested fields; for single-field scopes a
// plain-text reply is taken as the new value.
RegeneratedFields parse_regeneration_response(std::string_view raw, RegenerationScope scope);

struct RegenerationResult {
  ResearchQuestionArtifact artifact;
  EditRecord edit;
  std::string prompt;
  std::string trace_id;
};

// One model call (plus parse retries) and exactly one prompt_regeneration
// edit. The artifact is untouched when anything fails.
RegenerationResult regenerate_entity(Store& store, llm::Gateway& gateway, const std::string& artifact_id,
                                     RegenerationScope scope, const std::string& user_prompt,
                                     const GenerationOptions& options = {});

}  // namespace cmda::generation

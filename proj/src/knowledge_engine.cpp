#include "cmda/knowledge_engine.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "cmda/edit_distance.hpp"
#include "cmda/edit_ledger.hpp"
#include "cmda/errors.hpp"

namespace cmda::knowledge {

namespace {

std::set<std::string> normalized_tokens(std::string_view text) {
  std::set<std::string> out;
  for (const auto& token : tokenize_words(text)) {
    std::string norm;
    for (unsigned char c : token) {
      // Multi-byte UTF-8 sequences are kept as-is; ASCII is folded and stripped.
      if (c >= 0x80) {
        norm.push_back(static_cast<char>(c));
      } else if (std::isalnum(c)) {
        norm.push_back(static_cast<char>(std::tolower(c)));
      }
    }
    if (!norm.empty()) out.insert(std::move(norm));
  }
  return out;
}

bool visible_to(const KnowledgeEntry& e, const std::string& participant, const std::string& project) {
  switch (e.scope.kind) {
    case ScopeKind::user: return e.scope.owner == participant;
    case ScopeKind::project: return e.scope.owner == project;
    case ScopeKind::global: return true;
  }
  return false;
}

struct ArtifactContext {
  ResearchQuestionArtifact artifact;
  EvaluationSession session;
  std::vector<EditRecord> unprocessed;
};

ArtifactContext load(const Store& store, const std::string& artifact_id) {
  auto artifact = store.get<ResearchQuestionArtifact>(artifact_id);
  if (!artifact) throw Error(ErrorCode::not_found, "unknown artifact '" + artifact_id + "'", "id");
  auto session = store.get<EvaluationSession>(artifact->session_id);
  if (!session) throw Error(ErrorCode::internal, "artifact '" + artifact_id + "' has no session");
  StoreQuery q;
  q.entity_id = artifact_id;
  q.processed = false;
  return {*artifact, *session, store.query<EditRecord>(q)};
}

std::string skip_reason(const ArtifactContext& ctx) {
  const auto& a = ctx.artifact;
  if (a.deleted) return "deleted";
  if (a.dist_q_chars == 0 && a.dist_c_chars == 0 && a.dist_q_words == 0 && a.dist_c_words == 0) {
    return "unchanged";
  }
  bool fresh_text = std::any_of(ctx.unprocessed.begin(), ctx.unprocessed.end(), changes_text);
  if (!fresh_text) return "no new text edits";
  return {};
}

// Models sometimes wrap long strings over several lines. Raw line breaks are
// illegal inside JSON strings, so each break and the indentation around it
// folds to one space. Everything outside string literals is left alone.
std::string fold_string_breaks(std::string_view body) {
  std::string out;
  out.reserve(body.size());
  bool in_string = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (!in_string) {
      if (c == '"') in_string = true;
      out.push_back(c);
      continue;
    }
    if (c == '\\' && i + 1 < body.size()) {
      out.push_back(c);
      out.push_back(body[++i]);
      continue;
    }
    if (c == '"') {
      in_string = false;
      out.push_back(c);
      continue;
    }
    if (c == '\n' || c == '\r') {
      while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
      while (i + 1 < body.size() && std::isspace(static_cast<unsigned char>(body[i + 1]))) ++i;
      out.push_back(' ');
      continue;
    }
    out.push_back(c == '\t' ? ' ' : c);
  }
  return out;
}

}  // namespace

std::string build_extraction_prompt(std::string_view initial_question, std::string_view initial_contribution,
                                    std::string_view final_question, std::string_view final_contribution,
                                    std::span<const KnowledgeEntry> existing, std::string_view domain) {
  std::string existing_block;
  if (!existing.empty()) {
    existing_block = "EXISTING KNOWLEDGE (do not duplicate):\n";
    for (auto category : kAllCategories) {
      for (const auto& e : existing) {
        if (e.category != category) continue;
        existing_block += "- [";
        existing_block += to_string(e.category);
        existing_block += "] ";
        existing_block += e.text;
        existing_block += '\n';
      }
    }
    existing_block += '\n';
  }
  return prompts::render(prompts::extraction_template(),
                         {{"domain", std::string(domain)},
                          {"initial_question", std::string(initial_question)},
                          {"initial_contribution", std::string(initial_contribution)},
                          {"final_question", std::string(final_question)},
                          {"final_contribution", std::string(final_contribution)},
                          {"existing_knowledge", existing_block}});
}

ParsedExtraction parse_extraction_response(std::string_view raw) {
  auto body = prompts::strip_code_fence(raw);
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded()) {
    try {
      doc = Json::parse(fold_string_breaks(body));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::parse_error, std::string("extraction response is not JSON: ") + e.what());
    }
  }
  if (!doc.is_array()) throw Error(ErrorCode::parse_error, "extraction response must be a JSON array");
  if (doc.size() > kMaxEntriesPerExtraction) {
    throw Error(ErrorCode::contract_violation,
                "extraction returned " + std::to_string(doc.size()) + " entries; at most 3 are allowed");
  }

  ParsedExtraction out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    auto where = "entry " + std::to_string(i) + ": ";
    if (!item.is_object() || !item.contains("text") || !item.contains("category") || !item["text"].is_string() ||
        !item["category"].is_string()) {
      out.warnings.push_back(where + "needs string fields text and category");
      continue;
    }
    auto category = parse_category(item["category"].get<std::string>());
    if (!category) {
      out.warnings.push_back(where + "unknown category '" + item["category"].get<std::string>() + "'");
      continue;
    }
    out.candidates.push_back({item["text"].get<std::string>(), *category});
  }
  return out;
}

double jaccard(std::string_view a, std::string_view b) {
  auto ta = normalized_tokens(a);
  auto tb = normalized_tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : ta) common += tb.count(t);
  return static_cast<double>(common) / static_cast<double>(ta.size() + tb.size() - common);
}

bool is_duplicate(const ExtractionCandidate& candidate, std::span<const KnowledgeEntry> existing, double threshold) {
  return std::any_of(existing.begin(), existing.end(), [&](const KnowledgeEntry& e) {
    return e.category == candidate.category && jaccard(candidate.text, e.text) >= threshold;
  });
}

bool needs_model_call(const Store& store, const ResearchQuestionArtifact& artifact) {
  if (artifact.knowledge_processed) return false;
  return skip_reason(load(store, artifact.id)).empty();
}

ExtractionOutcome extract_for_question(Store& store, llm::Gateway& gateway, const std::string& artifact_id,
                                       const ExtractionOptions& options) {
  auto ctx = load(store, artifact_id);
  if (ctx.artifact.knowledge_processed) {
    throw Error(ErrorCode::precondition_failed, "artifact '" + artifact_id + "' is already processed", "id");
  }
  const auto& participant = ctx.session.participant_id;
  const auto& project = ctx.session.project_id;

  ExtractionOutcome out;
  std::vector<std::string> seen_edits;
  for (const auto& e : ctx.unprocessed) seen_edits.push_back(e.id);

  std::vector<ExtractionCandidate> candidates;
  out.skipped_reason = skip_reason(ctx);
  if (out.skipped_reason.empty()) {
    auto existing = store.knowledge_by_scope(participant, project);
    auto prompt = build_extraction_prompt(ctx.artifact.initial_question, ctx.artifact.initial_contribution,
                                          ctx.artifact.current_question, ctx.artifact.current_contribution, existing,
                                          options.domain);
    out.llm_called = true;
    auto resp = gateway.complete(options.model.request(prompt, options.task_id));
    out.trace_id = resp.trace_id;
    auto parsed = parse_extraction_response(resp.text);
    out.warnings = std::move(parsed.warnings);
    candidates = std::move(parsed.candidates);
  }

  KnowledgeScope scope = KnowledgeScope::project(project);
  if (options.scope == ScopeKind::user) scope = KnowledgeScope::user(participant);
  if (options.scope == ScopeKind::global) scope = KnowledgeScope::global();

  store.transact([&](Transaction& tx) {
    auto current = tx.get<ResearchQuestionArtifact>(artifact_id);
    if (!current || current->knowledge_processed) {
      throw Error(ErrorCode::precondition_failed, "artifact '" + artifact_id + "' was processed concurrently", "id");
    }

    std::vector<KnowledgeEntry> pool;
    for (auto& e : tx.query<KnowledgeEntry>()) {
      if (visible_to(e, participant, project) || e.scope == scope) pool.push_back(std::move(e));
    }
    for (const auto& c : candidates) {
      auto check = validate_knowledge_entry(Json{{"text", c.text},
                                                 {"category", to_string(c.category)},
                                                 {"source_question_ids", Json::array({artifact_id})}},
                                            [](const std::string&) { return true; });
      if (!check.ok()) {
        out.warnings.push_back("rejected '" + c.text.substr(0, 60) + "': " + check.violations.front());
        continue;
      }
      if (is_duplicate(c, pool, options.duplicate_threshold)) {
        ++out.duplicates;
        continue;
      }
      KnowledgeEntry entry;
      entry.id = tx.next_id("knowledge");
      entry.text = c.text;
      entry.category = c.category;
      entry.scope = scope;
      entry.source_question_ids = {artifact_id};
      entry.created_at = tx.now();
      entry.created_by = participant;
      tx.put(entry);
      pool.push_back(entry);
      out.accepted.push_back(std::move(entry));
    }

    for (const auto& id : seen_edits) {
      auto edit = tx.get<EditRecord>(id);
      if (edit && !edit->processed) {
        edit->processed = true;
        tx.put(*edit);
      }
    }
    // Edits recorded while the model call was in flight keep the artifact open.
    StoreQuery q;
    q.entity_id = artifact_id;
    q.processed = false;
    if (tx.query<EditRecord>(q).empty()) {
      current->knowledge_processed = true;
      tx.put(*current);
    }
  });
  return out;
}

std::vector<ResearchQuestionArtifact> pending_artifacts(const Store& store, const std::string& project_id) {
  StoreQuery q;
  q.project_id = project_id;
  q.processed = false;
  return store.query<ResearchQuestionArtifact>(q);
}

std::vector<std::string> extraction_worklist(const Store& store, const std::string& project_id) {
  std::vector<std::string> out;
  for (const auto& a : pending_artifacts(store, project_id)) {
    if (needs_model_call(store, a)) out.push_back(a.id);
  }
  return out;
}

Json PassReport::to_json() const {
  Json f = Json::array();
  for (const auto& [id, msg] : failures) f.push_back({{"artifact_id", id}, {"error", msg}});
  return Json{{"artifacts", artifacts},     {"llm_calls", llm_calls}, {"entries_added", entries_added},
              {"duplicates", duplicates},   {"warnings", warnings},   {"trace_ids", trace_ids},
              {"failures", f}};
}

PassReport run_extraction_pass(Store& store, llm::Gateway& gateway, const std::string& project_id,
                               const ExtractionOptions& options) {
  PassReport report;
  for (const auto& a : pending_artifacts(store, project_id)) {
    ++report.artifacts;
    try {
      auto outcome = extract_for_question(store, gateway, a.id, options);
      report.llm_calls += outcome.llm_called ? 1 : 0;
      report.entries_added += outcome.accepted.size();
      report.duplicates += outcome.duplicates;
      if (outcome.trace_id) report.trace_ids.push_back(*outcome.trace_id);
      for (auto& w : outcome.warnings) report.warnings.push_back(a.id + ": " + w);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::precondition_failed) continue;  // another worker got there first
      report.failures.emplace_back(a.id, e.what());
    }
  }
  return report;
}

}  // namespace cmda::knowledge

#include "cmda/generator.hpp"

#include <algorithm>
#include <cctype>

#include "cmda/errors.hpp"

namespace cmda::generation {

namespace {

constexpr std::string_view kKnowledgeTail =
    "Based on the patterns above, generate questions that reflect these improvements and refinements. Learn from "
    "how previous participants enhanced their initial responses.";

std::string knowledge_section(std::string_view block) {
  std::string out(block);
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += '\n';
  out += kKnowledgeTail;
  out += "\n\n";
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Drops markdown emphasis and leading header/bullet markers.
std::string clean_line(std::string_view raw) {
  std::string s;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if ((raw[i] == '*' || raw[i] == '_') && i + 1 < raw.size() && raw[i + 1] == raw[i]) {
      ++i;
      continue;
    }
    s.push_back(raw[i]);
  }
  s = trim(s);
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '#' || s[i] == '>')) ++i;
  if (i + 1 < s.size() && (s[i] == '-' || s[i] == '*') && s[i + 1] == ' ') ++i;
  return trim(std::string_view(s).substr(i));
}

// Strips "1." / "1)" style numbering. Returns true if found.
bool strip_number(std::string& s) {
  std::string_view v = s;
  std::size_t i = 0;
  std::size_t digits = i;
  while (digits < v.size() && std::isdigit(static_cast<unsigned char>(v[digits]))) ++digits;
  if (digits == i || digits >= v.size()) return false;
  char sep = v[digits];
  if (sep != '.' && sep != ')' && sep != ':') return false;
  s = trim(v.substr(digits + 1));
  return true;
}

enum class Field { none, question, contribution };

// Recognizes a leading label and removes it.
Field take_label(std::string& s) {
  static constexpr std::pair<std::string_view, Field> labels[] = {
      {"research question", Field::question},   {"question", Field::question},
      {"potential contribution", Field::contribution}, {"contribution summary", Field::contribution},
      {"contribution", Field::contribution},    {"summary", Field::contribution},
  };
  for (const auto& [label, field] : labels) {
    if (!starts_with_ci(s, label)) continue;
    std::string_view rest = std::string_view(s).substr(label.size());
    // optional number after the label, e.g. "Research Question 2:"
    std::size_t i = 0;
    while (i < rest.size() && (rest[i] == ' ' || std::isdigit(static_cast<unsigned char>(rest[i])))) ++i;
    if (i < rest.size() && rest[i] == ':') {
      s = trim(rest.substr(i + 1));
      return field;
    }
  }
  return Field::none;
}

void append(std::string& dst, const std::string& text) {
  if (text.empty()) return;
  if (!dst.empty()) dst += ' ';
  dst += text;
}

std::vector<GeneratedQuestion> parse_labelled(const std::vector<std::string>& lines) {
  std::vector<GeneratedQuestion> out;
  Field current = Field::none;
  for (auto line : lines) {
    if (line.empty()) {
      // a blank line closes a field that already has content
      if (current != Field::none && !out.empty()) {
        const auto& target = current == Field::question ? out.back().question : out.back().contribution;
        if (!target.empty()) current = Field::none;
      }
      continue;
    }
    bool numbered = strip_number(line);
    auto label = take_label(line);
    if (label == Field::question) {
      out.emplace_back();
      current = Field::question;
      append(out.back().question, line);
    } else if (label == Field::contribution) {
      if (out.empty()) out.emplace_back();
      current = Field::contribution;
      append(out.back().contribution, line);
    } else if (numbered) {
      current = Field::none;
    } else if (current == Field::question) {
      append(out.back().question, line);
    } else if (current == Field::contribution) {
      append(out.back().contribution, line);
    }
  }
  return out;
}

// Fallback for unlabelled lists: the numbered line is the question and the
// following lines are the contribution.
std::vector<GeneratedQuestion> parse_numbered(const std::vector<std::string>& lines) {
  std::vector<GeneratedQuestion> out;
  bool in_item = false;
  for (auto line : lines) {
    if (line.empty()) {
      if (in_item && !out.back().contribution.empty()) in_item = false;
      continue;
    }
    if (strip_number(line)) {
      out.push_back({line, {}});
      in_item = true;
    } else if (in_item) {
      append(out.back().contribution, line);
    }
  }
  return out;
}

int participant_order(const Store& store, const std::string& participant_id) {
  auto p = store.get<Participant>(participant_id);
  if (!p) throw Error(ErrorCode::not_found, "unknown participant '" + participant_id + "'", "participant_id");
  return p->order_index;
}

template <typename F>
auto with_parse_retries(int retries, F&& attempt) {
  for (int i = 0;; ++i) {
    try {
      return attempt(i + 1);
    } catch (const Error& e) {
      bool parse_level = e.code() == ErrorCode::parse_error || e.code() == ErrorCode::contract_violation;
      if (!parse_level || i >= retries) throw;
    }
  }
}

}  // namespace

std::string_view to_string(KnowledgeGate g) {
  return g == KnowledgeGate::participant_order ? "participant_order" : "store_non_empty";
}

std::optional<KnowledgeGate> parse_knowledge_gate(std::string_view s) {
  if (s == "participant_order") return KnowledgeGate::participant_order;
  if (s == "store_non_empty") return KnowledgeGate::store_non_empty;
  return std::nullopt;
}

BuiltPrompt build_generation_prompt(const PaperRecord& paper, std::string_view knowledge_block, int participant_order,
                                    KnowledgeGate gate, int question_count, std::string_view domain) {
  if (paper.full_text.empty()) {
    throw Error(ErrorCode::precondition_failed, "paper '" + paper.id + "' has no full text", "full_text");
  }
  if (question_count < 1) throw Error(ErrorCode::invalid_argument, "question count must be positive", "count");

  BuiltPrompt out;
  bool allowed = gate == KnowledgeGate::store_non_empty || participant_order > 1;
  out.knowledge_injected = allowed && !knowledge_block.empty();
  out.rule = gate == KnowledgeGate::participant_order ? "participant_order>1" : "store_non_empty";
  out.rule += out.knowledge_injected ? ":injected" : ":skipped";

  out.text = prompts::render(prompts::generation_template(),
                             {{"domain", std::string(domain)},
                              {"question_count", std::to_string(question_count)},
                              {"paper_title", paper.title},
                              {"paper_abstract", paper.abstract_text},
                              {"paper_full_text", paper.full_text},
                              {"knowledge_context", out.knowledge_injected ? knowledge_section(knowledge_block) : ""}});
  return out;
}

std::vector<GeneratedQuestion> parse_generation_response(std::string_view raw, std::size_t expected) {
  auto body = prompts::strip_code_fence(raw);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto end = body.find('\n', start);
    if (end == std::string::npos) end = body.size();
    lines.push_back(clean_line(std::string_view(body).substr(start, end - start)));
    start = end + 1;
  }

  auto pairs = parse_labelled(lines);
  if (pairs.empty()) pairs = parse_numbered(lines);
  if (pairs.empty()) throw Error(ErrorCode::parse_error, "no numbered research questions found in response");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].question.empty() || pairs[i].contribution.empty()) {
      throw Error(ErrorCode::parse_error, "item " + std::to_string(i + 1) + " lacks a question or contribution");
    }
  }
  if (pairs.size() != expected) {
    throw Error(ErrorCode::contract_violation, "expected " + std::to_string(expected) + " research questions, got " +
                                                   std::to_string(pairs.size()));
  }
  return pairs;
}

GenerationPlan plan_question_set(Store& store, llm::Gateway& gateway, const std::string& paper_id,
                                 const std::string& session_id, const GenerationOptions& options) {
  auto paper = store.get<PaperRecord>(paper_id);
  if (!paper) throw Error(ErrorCode::not_found, "unknown paper '" + paper_id + "'", "paper_id");
  auto session = store.get<EvaluationSession>(session_id);
  if (!session) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'", "session_id");

  GenerationPlan plan;
  plan.paper_id = paper_id;
  plan.session_id = session_id;
  plan.context = context::assemble_context(store, session->participant_id, session->project_id, options.context_cap);
  auto block = context::render_knowledge_block(plan.context);
  plan.prompt = build_generation_prompt(*paper, block, participant_order(store, session->participant_id),
                                        options.gate, options.question_count, options.domain);

  plan.questions = with_parse_retries(options.parse_retries, [&](int attempt) {
    plan.attempts = attempt;
    auto resp = gateway.complete(options.model.request(plan.prompt.text, options.task_id));
    plan.trace_id = resp.trace_id;
    return parse_generation_response(resp.text, static_cast<std::size_t>(options.question_count));
  });
  return plan;
}

std::vector<ResearchQuestionArtifact> commit_question_set(Transaction& tx, const GenerationPlan& plan,
                                                          const GenerationOptions& options) {
  StoreQuery q;
  q.session_id = plan.session_id;
  q.paper_id = plan.paper_id;
  int position = 0;
  for (const auto& a : tx.query<ResearchQuestionArtifact>(q)) position = std::max(position, a.position);

  std::vector<ResearchQuestionArtifact> out;
  for (const auto& gq : plan.questions) {
    ResearchQuestionArtifact a;
    a.id = tx.next_id("question");
    a.paper_id = plan.paper_id;
    a.session_id = plan.session_id;
    a.task_id = options.task_id;
    a.position = ++position;
    a.initial_question = a.current_question = gq.question;
    a.initial_contribution = a.current_contribution = gq.contribution;
    a.created_at = tx.now();
    tx.put(a);

    GenerationMetadata meta;
    meta.entity_id = a.id;
    meta.generation_prompt = plan.prompt.text;
    meta.model_id = options.model.model_id;
    meta.temperature = options.model.temperature;
    meta.max_tokens = options.model.max_tokens;
    meta.trace_id = plan.trace_id;
    meta.knowledge_rule = plan.prompt.rule;
    meta.knowledge_entries = plan.prompt.knowledge_injected ? plan.context.entries.size() : 0;
    meta.created_at = a.created_at;
    tx.put(meta);

    EditRecord marker;
    marker.id = tx.next_id("edit");
    marker.entity_type = EntityType::research_question;
    marker.entity_id = a.id;
    marker.edit_type = EditType::context_generation;
    marker.field_name = std::string(kFieldQuestion);
    marker.new_value = a.initial_question;
    marker.created_at = a.created_at;
    tx.put(marker);

    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ResearchQuestionArtifact> generate_question_set(Store& store, llm::Gateway& gateway,
                                                            const std::string& paper_id,
                                                            const std::string& session_id,
                                                            const GenerationOptions& options) {
  auto plan = plan_question_set(store, gateway, paper_id, session_id, options);
  return store.transact([&](Transaction& tx) { return commit_question_set(tx, plan, options); });
}

// -- regeneration ------------------------------------------------------------

std::string_view to_string(RegenerationScope s) {
  switch (s) {
    case RegenerationScope::question: return "question";
    case RegenerationScope::contribution: return "contribution";
    case RegenerationScope::both: return "both";
  }
  return "both";
}

std::optional<RegenerationScope> parse_regeneration_scope(std::string_view s) {
  if (s == "question") return RegenerationScope::question;
  if (s == "contribution") return RegenerationScope::contribution;
  if (s == "both") return RegenerationScope::both;
  return std::nullopt;
}

std::string build_regeneration_prompt(std::string_view current_question, std::string_view current_contribution,
                                      std::string_view user_prompt, std::string_view knowledge_block,
                                      RegenerationScope scope, std::string_view domain) {
  std::string fields = scope == RegenerationScope::both ? "question, contribution" : std::string(to_string(scope));
  return prompts::render(prompts::regeneration_template(),
                         {{"domain", std::string(domain)},
                          {"current_question", std::string(current_question)},
                          {"current_contribution", std::string(current_contribution)},
                          {"user_prompt", std::string(user_prompt)},
                          {"knowledge_context", knowledge_block.empty() ? "" : knowledge_section(knowledge_block)},
                          {"target_fields", fields}});
}

RegeneratedFields parse_regeneration_response(std::string_view raw, RegenerationScope scope) {
  auto body = prompts::strip_code_fence(raw);
  RegeneratedFields out;
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_object()) {
    auto read = [&](const char* key) -> std::optional<std::string> {
      auto it = doc.find(key);
      if (it == doc.end() || !it->is_string() || trim(it->get<std::string>()).empty()) return std::nullopt;
      return trim(it->get<std::string>());
    };
    if (scope != RegenerationScope::contribution) out.question = read("question");
    if (scope != RegenerationScope::question) out.contribution = read("contribution");
  } else if (scope != RegenerationScope::both && !doc.is_discarded()) {
    throw Error(ErrorCode::parse_error, "regeneration response must be a JSON object or plain text");
  } else if (scope != RegenerationScope::both) {
    auto text = trim(body);
    if (text.empty()) throw Error(ErrorCode::parse_error, "empty regeneration response");
    (scope == RegenerationScope::question ? out.question : out.contribution) = text;
  } else {
    throw Error(ErrorCode::parse_error, "regeneration of both fields needs a JSON object");
  }

  bool missing = (scope != RegenerationScope::contribution && !out.question) ||
                 (scope != RegenerationScope::question && !out.contribution);
  if (missing) {
    throw Error(ErrorCode::contract_violation,
                "regeneration response lacks field(s) for scope '" + std::string(to_string(scope)) + "'");
  }
  return out;
}

RegenerationResult regenerate_entity(Store& store, llm::Gateway& gateway, const std::string& artifact_id,
                                     RegenerationScope scope, const std::string& user_prompt,
                                     const GenerationOptions& options) {
  auto artifact = store.get<ResearchQuestionArtifact>(artifact_id);
  if (!artifact) throw Error(ErrorCode::not_found, "unknown artifact '" + artifact_id + "'", "id");
  if (artifact->deleted) throw Error(ErrorCode::gone, "artifact '" + artifact_id + "' was deleted", "id");
  if (trim(user_prompt).empty()) throw Error(ErrorCode::invalid_argument, "user_prompt must be non-empty", "user_prompt");
  auto session = store.get<EvaluationSession>(artifact->session_id);
  if (!session) throw Error(ErrorCode::internal, "artifact '" + artifact_id + "' has no session");

  auto ctx = context::assemble_context(store, session->participant_id, session->project_id, options.context_cap);
  bool allowed = options.gate == KnowledgeGate::store_non_empty ||
                 participant_order(store, session->participant_id) > 1;
  auto block = allowed ? context::render_knowledge_block(ctx) : std::string{};

  RegenerationResult result;
  result.prompt = build_regeneration_prompt(artifact->current_question, artifact->current_contribution, user_prompt,
                                            block, scope, options.domain);
  auto fields = with_parse_retries(options.parse_retries, [&](int) {
    auto resp = gateway.complete(options.model.request(result.prompt, options.task_id));
    result.trace_id = resp.trace_id;
    return parse_regeneration_response(resp.text, scope);
  });

  EditRequest req;
  req.artifact_id = artifact_id;
  req.edit_type = EditType::prompt_regeneration;
  req.user_prompt = user_prompt;
  switch (scope) {
    case RegenerationScope::question:
      req.field_name = std::string(kFieldQuestion);
      req.original_value = artifact->current_question;
      req.new_value = *fields.question;
      break;
    case RegenerationScope::contribution:
      req.field_name = std::string(kFieldContribution);
      req.original_value = artifact->current_contribution;
      req.new_value = *fields.contribution;
      break;
    case RegenerationScope::both:
      req.field_name = std::string(kFieldBoth);
      req.original_value = encode_field_pair(artifact->current_question, artifact->current_contribution);
      req.new_value = encode_field_pair(*fields.question, *fields.contribution);
      break;
  }
  auto outcome = record_edit(store, req);
  result.artifact = std::move(outcome.artifact);
  result.edit = std::move(outcome.edit);
  return result;
}

}  // namespace cmda::generation

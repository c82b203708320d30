#include "cmda/eval_harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cmda/context_assembler.hpp"
#include "cmda/document_fetcher.hpp"
#include "cmda/edit_ledger.hpp"
#include "cmda/errors.hpp"
#include "cmda/knowledge_engine.hpp"

namespace cmda::harness {

namespace {

constexpr std::string_view kEventTypes[] = {"session_start", "generate",  "rate",       "direct_edit",
                                            "prompt_edit",   "delete",    "session_end"};

constexpr const char* kVocab[] = {"novice",     "expert",     "longitudinal", "eye-tracking", "color-blind",
                                  "mobile",     "classroom",  "uncertainty",  "provenance",   "dashboard",
                                  "narrative",  "cross-cultural", "older",    "crowdsourced", "screen-reader",
                                  "multimodal"};

const char* vocab(std::size_t i) { return kVocab[i % (sizeof kVocab / sizeof kVocab[0])]; }

std::string key_of(const std::string& participant, const std::string& paper) { return participant + '\x1f' + paper; }

std::string str(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw Error(ErrorCode::validation_failed, std::string(field) + " is required", field);
  }
  return it->get<std::string>();
}

std::optional<std::string> opt_str(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

int integer(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_number_integer()) {
    throw Error(ErrorCode::validation_failed, std::string(field) + " must be an integer", field);
  }
  return it->get<int>();
}

std::string format_questions(const Json& questions) {
  std::string out;
  int n = 0;
  for (const auto& q : questions) {
    if (!q.is_object()) throw Error(ErrorCode::validation_failed, "questions[] entries must be objects", "questions");
    out += std::to_string(++n) + ". Research Question: " + str(q, "question") + "\n";
    out += "Contribution: " + str(q, "contribution") + "\n\n";
  }
  return out;
}

Json synthetic_questions(const PaperRecord& paper, int order, int count, std::size_t salt) {
  Json out = Json::array();
  for (int i = 1; i <= count; ++i) {
    auto v = vocab(salt + static_cast<std::size_t>(order * 3 + i));
    out.push_back({{"question", "How does " + std::string(v) + " framing change how readers interpret the charts studied in " +
                                    paper.title + " (item " + std::to_string(i) + ")?"},
                   {"contribution", "This work would measure comprehension differences across framing conditions. "
                                    "It would inform guidance for " + std::string(v) + " audiences."}});
  }
  return out;
}

Json synthetic_entry(const ResearchQuestionArtifact& a, int order, const std::string& paper_title) {
  auto category = kAllCategories[static_cast<std::size_t>(order + a.position) % 3];
  std::uint64_t salt = 1469598103934665603ull;  // FNV-1a, stable across platforms
  for (unsigned char c : a.id) salt = (salt ^ c) * 1099511628211ull;
  std::string text = "Participant " + std::to_string(order) + " steered " + a.id + " of " + paper_title + " toward " +
                     vocab(static_cast<std::size_t>(salt)) + " and " + vocab(static_cast<std::size_t>(salt / 16 + 1)) + " audiences.";
  return Json::array({{{"text", text}, {"category", to_string(category)}}});
}

std::optional<double> trend(const std::vector<ParticipantRow>& rows,
                            const std::function<std::optional<double>(const ParticipantRow&)>& y) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    if (auto v = y(r)) pts.emplace_back(r.order, *v);
  }
  try {
    return ols_slope(pts);
  } catch (const Error&) {
    return std::nullopt;
  }
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

// -- trace parsing -------------------------------------------------------------

std::vector<TraceEvent> parse_trace(std::istream& in) {
  std::vector<TraceEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TraceEvent e;
    e.index = events.size();
    auto where = "event " + std::to_string(e.index) + ": ";
    e.data = Json::parse(line, nullptr, false);
    if (e.data.is_discarded() || !e.data.is_object()) {
      throw Error(ErrorCode::validation_failed, where + "not a JSON object", "event");
    }
    auto type = opt_str(e.data, "type");
    if (!type || std::find(std::begin(kEventTypes), std::end(kEventTypes), *type) == std::end(kEventTypes)) {
      throw Error(ErrorCode::validation_failed, where + "unknown or missing event type", "type");
    }
    e.type = *type;
    if (auto at = opt_str(e.data, "at")) {
      e.at = parse_rfc3339(*at);
      if (!e.at) throw Error(ErrorCode::validation_failed, where + "bad timestamp '" + *at + "'", "at");
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<TraceEvent> load_trace(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::not_found, "cannot open trace " + file.string(), "trace");
  return parse_trace(in);
}

std::vector<PaperRecord> load_papers(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::not_found, "not a directory: " + dir.string(), "papers");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PaperRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    auto j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::validation_failed, "malformed paper file " + f.string(), "papers");
    auto p = fetch::parse_paper_file(j);
    if (p.id.empty()) p.id = f.stem().string();
    out.push_back(std::move(p));
  }
  return out;
}

double ols_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw Error(ErrorCode::invalid_argument, "slope needs at least two points");
  double mx = 0, my = 0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0) throw Error(ErrorCode::invalid_argument, "slope undefined: all x values are equal");
  return sxy / sxx;
}

double fit_activity_slope(const MetricsReport& report) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : report.participants) {
    pts.emplace_back(static_cast<double>(p.edited_fields), static_cast<double>(p.knowledge_entries));
  }
  return ols_slope(pts);
}

// -- replayer ----------------------------------------------------------------------

Replayer::Replayer(ReplayOptions options)
    : options_(std::move(options)),
      clock_(std::make_shared<ManualClock>(options_.epoch)),
      clock_floor_(options_.epoch),
      store_(std::make_unique<Store>(clock_)),
      mock_(std::make_shared<llm::MockProvider>()),
      gateway_(std::make_unique<llm::Gateway>(mock_, store_.get())) {
  orchestrator::EngineConfig config;
  config.generation.gate = options_.gate;
  config.generation.domain = options_.domain;
  config.extraction.domain = options_.domain;
  engine_ = std::make_unique<orchestrator::TaskEngine>(*store_, *gateway_, nullptr, config);
}

Replayer::~Replayer() = default;

void Replayer::add_paper(PaperRecord paper) {
  if (paper.created_at == Timestamp{}) paper.created_at = store_->now();
  store_->put(paper);
}

std::string Replayer::session_of(const TraceEvent& e) const {
  auto it = sessions_.find(key_of(str(e.data, "participant"), str(e.data, "paper")));
  if (it == sessions_.end()) throw Error(ErrorCode::validation_failed, "no session_start for this participant/paper");
  return it->second;
}

std::string Replayer::artifact_at(const TraceEvent& e) const {
  auto session = session_of(e);
  auto position = integer(e.data, "position");
  StoreQuery q;
  q.session_id = session;
  for (const auto& a : store_->query<ResearchQuestionArtifact>(q)) {
    if (a.position == position) return a.id;
  }
  throw Error(ErrorCode::validation_failed, "position " + std::to_string(position) + " was never generated",
              "position");
}

void Replayer::touch_clock(const TraceEvent& e) {
  if (!e.at) return;
  if (e.type != "session_start") {
    auto session = session_of(e);
    auto& last = last_at_[session];
    if (*e.at < last) throw Error(ErrorCode::validation_failed, "event time goes backwards within its session", "at");
    last = *e.at;
  }
  if (*e.at > clock_floor_) {
    clock_floor_ = *e.at;
    clock_->set(*e.at);
  }
}

void Replayer::apply(const TraceEvent& e) {
  try {
    touch_clock(e);
    if (e.type == "session_start") on_session_start(e);
    else if (e.type == "generate") on_generate(e);
    else if (e.type == "direct_edit") on_direct_edit(e);
    else if (e.type == "prompt_edit") on_prompt_edit(e);
    else if (e.type == "rate") on_rate(e);
    else if (e.type == "delete") on_delete(e);
    else if (e.type == "session_end") on_session_end(e);
    else throw Error(ErrorCode::validation_failed, "unknown event type", "type");
  } catch (const Error& err) {
    // Anything the trace asks for that the pipeline refuses is a trace error.
    auto code = err.code() == ErrorCode::internal || err.code() == ErrorCode::ledger_corruption
                    ? err.code()
                    : ErrorCode::validation_failed;
    throw Error(code, "event " + std::to_string(e.index) + " (" + e.type + "): " + err.what(), err.field(),
                err.details());
  }
}

void Replayer::run(const std::vector<TraceEvent>& events) {
  for (const auto& e : events) apply(e);
  finish();
}

void Replayer::feed_extraction_replies(const std::string& project_id) {
  for (const auto& id : knowledge::extraction_worklist(*store_, project_id)) {
    auto it = recorded_knowledge_.find(id);
    if (it != recorded_knowledge_.end()) {
      mock_->enqueue(it->second.dump());
      continue;
    }
    if (options_.synthesize_knowledge) {
      auto a = *store_->get<ResearchQuestionArtifact>(id);
      auto s = *store_->get<EvaluationSession>(a.session_id);
      auto p = *store_->get<Participant>(s.participant_id);
      auto paper = store_->get<PaperRecord>(a.paper_id);
      mock_->enqueue(synthetic_entry(a, p.order_index, paper ? paper->title : a.paper_id).dump());
    } else {
      mock_->enqueue("[]");
    }
  }
}

void Replayer::finish() {
  for (const auto& project : projects_) {
    if (knowledge::pending_artifacts(*store_, project).empty()) continue;
    feed_extraction_replies(project);
    auto task = engine_->create_task(TaskType::extract_implicit_knowledge, Json{{"project_id", project}});
    engine_->drain("harness");
    auto t = store_->get<AgentTask>(task);
    if (t->status != TaskStatus::completed) {
      warnings_.push_back("final extraction for " + project + " failed: " + t->error_message.value_or("?"));
    }
  }
  for (const auto& [id, reply] : recorded_knowledge_) {
    auto a = store_->get<ResearchQuestionArtifact>(id);
    if (a && a->knowledge_processed && !reply.empty()) {
      StoreQuery q;
      std::size_t found = 0;
      for (const auto& k : store_->query<KnowledgeEntry>(q)) {
        found += std::count(k.source_question_ids.begin(), k.source_question_ids.end(), id);
      }
      if (found == 0) warnings_.push_back("recorded knowledge for " + id + " was not extracted (no qualifying edits)");
    }
  }
  timeline_.push_back(store_->count<KnowledgeEntry>());
}

void Replayer::on_session_start(const TraceEvent& e) {
  auto participant_id = str(e.data, "participant");
  auto paper_id = str(e.data, "paper");
  auto project = opt_str(e.data, "project").value_or("default");
  if (!store_->get<PaperRecord>(paper_id)) {
    throw Error(ErrorCode::validation_failed, "paper '" + paper_id + "' is not loaded", "paper");
  }
  auto existing = sessions_.find(key_of(participant_id, paper_id));
  if (existing != sessions_.end() && !store_->get<EvaluationSession>(existing->second)->ended_at) {
    throw Error(ErrorCode::validation_failed, "session already open for this participant/paper");
  }

  auto session_id = store_->transact([&](Transaction& tx) {
    auto participant = tx.get<Participant>(participant_id);
    if (!participant) {
      Participant p;
      p.id = participant_id;
      p.project_id = project;
      if (e.data.contains("order")) {
        p.order_index = integer(e.data, "order");
      } else {
        StoreQuery q;
        q.project_id = project;
        int max_order = 0;
        for (const auto& other : tx.query<Participant>(q)) max_order = std::max(max_order, other.order_index);
        p.order_index = max_order + 1;
      }
      p.domain_expertise = opt_str(e.data, "expertise").value_or("");
      participant = p;
    } else if (participant->project_id != project) {
      throw Error(ErrorCode::validation_failed, "participant belongs to project '" + participant->project_id + "'",
                  "project");
    }
    participant->status = ParticipantStatus::active;
    tx.put(*participant);

    EvaluationSession s;
    s.id = tx.next_id("session");
    s.participant_id = participant_id;
    s.project_id = project;
    s.paper_id = paper_id;
    s.started_at = e.at.value_or(tx.now());
    s.trace_id = "replay-" + std::to_string(e.index);
    tx.put(s);
    return s.id;
  });
  sessions_[key_of(participant_id, paper_id)] = session_id;
  if (e.at) last_at_[session_id] = *e.at;
  if (std::find(projects_.begin(), projects_.end(), project) == projects_.end()) projects_.push_back(project);
}

void Replayer::on_generate(const TraceEvent& e) {
  auto session_id = session_of(e);
  auto session = *store_->get<EvaluationSession>(session_id);
  auto participant = *store_->get<Participant>(session.participant_id);
  auto paper = *store_->get<PaperRecord>(session.paper_id);

  std::string completion;
  int count = generation::kDefaultQuestionCount;
  if (auto it = e.data.find("questions"); it != e.data.end()) {
    if (!it->is_array() || it->empty()) throw Error(ErrorCode::validation_failed, "questions must be a non-empty array", "questions");
    count = static_cast<int>(it->size());
    completion = format_questions(*it);
  } else if (auto text = opt_str(e.data, "completion")) {
    completion = *text;
    if (e.data.contains("count")) count = integer(e.data, "count");
  } else {
    if (e.data.contains("count")) count = integer(e.data, "count");
    completion = format_questions(synthetic_questions(paper, participant.order_index, count, e.index));
  }

  feed_extraction_replies(session.project_id);
  mock_->enqueue(completion);
  Json input{{"paper_id", paper.id}, {"session_id", session_id}, {"participant_id", participant.id}};
  if (count != generation::kDefaultQuestionCount) input["count"] = count;
  auto task_id = engine_->create_task(TaskType::generate_evaluation_questions, input);
  engine_->drain("harness");
  auto task = *store_->get<AgentTask>(task_id);
  if (task.status != TaskStatus::completed) {
    throw Error(ErrorCode::validation_failed, "generation task failed: " + task.error_message.value_or("?"));
  }
  timeline_.push_back(store_->count<KnowledgeEntry>());
}

void Replayer::on_direct_edit(const TraceEvent& e) {
  auto artifact_id = artifact_at(e);
  auto artifact = *store_->get<ResearchQuestionArtifact>(artifact_id);
  EditRequest req;
  req.artifact_id = artifact_id;
  req.edit_type = EditType::direct_edit;
  req.field_name = str(e.data, "field");
  std::string current = req.field_name == kFieldContribution ? artifact.current_contribution : artifact.current_question;
  req.original_value = opt_str(e.data, "original_value").value_or(current);
  if (auto v = opt_str(e.data, "new_value")) {
    req.new_value = *v;
  } else if (auto app = opt_str(e.data, "append")) {
    req.new_value = current + *app;
  } else {
    throw Error(ErrorCode::validation_failed, "direct_edit needs new_value or append", "new_value");
  }
  record_edit(*store_, req);
}

void Replayer::on_prompt_edit(const TraceEvent& e) {
  auto artifact_id = artifact_at(e);
  auto artifact = *store_->get<ResearchQuestionArtifact>(artifact_id);
  auto scope_text = opt_str(e.data, "scope").value_or(opt_str(e.data, "field").value_or("question"));
  auto scope = generation::parse_regeneration_scope(scope_text);
  if (!scope) throw Error(ErrorCode::validation_failed, "scope must be question, contribution or both", "scope");
  auto user_prompt = str(e.data, "user_prompt");
  auto append = opt_str(e.data, "append");

  Json reply = Json::object();
  if (*scope != generation::RegenerationScope::contribution) {
    auto q = opt_str(e.data, "new_question");
    if (!q && *scope == generation::RegenerationScope::question) q = opt_str(e.data, "new_value");
    if (!q && append) q = artifact.current_question + *append;
    if (!q) throw Error(ErrorCode::validation_failed, "prompt_edit lacks the new question", "new_question");
    reply["question"] = *q;
  }
  if (*scope != generation::RegenerationScope::question) {
    auto c = opt_str(e.data, "new_contribution");
    if (!c && *scope == generation::RegenerationScope::contribution) c = opt_str(e.data, "new_value");
    if (!c && append) c = artifact.current_contribution + *append;
    if (!c) throw Error(ErrorCode::validation_failed, "prompt_edit lacks the new contribution", "new_contribution");
    reply["contribution"] = *c;
  }
  mock_->enqueue(reply.dump());
  generation::GenerationOptions options;
  options.gate = options_.gate;
  options.domain = options_.domain;
  options.parse_retries = 0;
  generation::regenerate_entity(*store_, *gateway_, artifact_id, *scope, user_prompt, options);
}

void Replayer::on_rate(const TraceEvent& e) { rate_artifact(*store_, artifact_at(e), integer(e.data, "rating")); }

void Replayer::on_delete(const TraceEvent& e) { delete_artifact(*store_, artifact_at(e)); }

void Replayer::on_session_end(const TraceEvent& e) {
  auto session_id = session_of(e);
  if (auto it = e.data.find("knowledge"); it != e.data.end()) {
    if (!it->is_object()) throw Error(ErrorCode::validation_failed, "knowledge must map positions to arrays", "knowledge");
    StoreQuery q;
    q.session_id = session_id;
    auto artifacts = store_->query<ResearchQuestionArtifact>(q);
    for (const auto& [pos, entries] : it->items()) {
      if (!entries.is_array()) throw Error(ErrorCode::validation_failed, "knowledge[" + pos + "] must be an array", "knowledge");
      auto match = std::find_if(artifacts.begin(), artifacts.end(),
                                [&](const ResearchQuestionArtifact& a) { return std::to_string(a.position) == pos; });
      if (match == artifacts.end()) {
        throw Error(ErrorCode::validation_failed, "knowledge for position " + pos + " that was never generated", "knowledge");
      }
      recorded_knowledge_[match->id] = entries;
    }
  }
  end_session(*store_, session_id, e.at.value_or(store_->now()));
}

// -- report --------------------------------------------------------------------------

MetricsReport Replayer::report() const {
  MetricsReport r;
  r.knowledge_timeline = timeline_;
  r.warnings = warnings_;
  r.notes = {
      "activity slope: x = edited fields per participant (distinct question/contribution fields changed by direct "
      "or prompt edits), y = knowledge entries created from that participant's artifacts",
      "distance sums and mean ratings exclude deleted questions",
  };

  std::map<std::string, std::string> session_of_artifact;
  for (const auto& a : store_->query<ResearchQuestionArtifact>()) session_of_artifact[a.id] = a.session_id;
  std::map<std::string, std::size_t> entries_per_session;
  for (const auto& k : store_->query<KnowledgeEntry>()) {
    ++r.knowledge_per_category[static_cast<std::size_t>(k.category)];
    ++r.knowledge_total;
    std::set<std::string> sessions;
    for (const auto& id : k.source_question_ids) sessions.insert(session_of_artifact[id]);
    for (const auto& s : sessions) ++entries_per_session[s];
  }

  std::map<std::string, ParticipantRow> people;
  std::map<std::string, std::pair<double, std::size_t>> rating_sums;
  for (const auto& s : store_->query<EvaluationSession>()) {
    auto m = session_metrics(*store_, s.id);
    auto p = store_->get<Participant>(s.participant_id);
    SessionRow row;
    row.participant_id = s.participant_id;
    row.order = p ? p->order_index : 0;
    row.paper_id = s.paper_id;
    row.duration_seconds = m.duration_seconds;
    row.mean_rating = m.mean_rating;
    row.direct_edits = m.count(EditType::direct_edit);
    row.prompt_edits = m.count(EditType::prompt_regeneration);
    row.deletes = m.count(EditType::deletion);
    row.q_chars = m.q_chars;
    row.c_chars = m.c_chars;
    row.q_words = m.q_words;
    row.c_words = m.c_words;
    row.edited_fields = m.edited_fields;
    row.knowledge_entries = entries_per_session[s.id];
    StoreQuery q;
    q.session_id = s.id;
    for (const auto& a : store_->query<ResearchQuestionArtifact>(q)) {
      if (a.deleted || !a.quality_rating) continue;
      ++row.ratings;
      rating_sums[s.participant_id].first += *a.quality_rating;
      rating_sums[s.participant_id].second += 1;
    }

    auto& pr = people[s.participant_id];
    pr.participant_id = s.participant_id;
    pr.order = row.order;
    ++pr.sessions;
    pr.duration_seconds += row.duration_seconds.value_or(0);
    pr.direct_edits += row.direct_edits;
    pr.prompt_edits += row.prompt_edits;
    pr.q_chars += row.q_chars;
    pr.c_chars += row.c_chars;
    pr.edited_fields += row.edited_fields;
    r.sessions.push_back(std::move(row));
  }
  for (const auto& k : store_->query<KnowledgeEntry>()) {
    if (auto it = people.find(k.created_by); it != people.end()) ++it->second.knowledge_entries;
  }
  for (auto& [id, pr] : people) {
    if (auto it = rating_sums.find(id); it != rating_sums.end() && it->second.second > 0) {
      pr.mean_rating = it->second.first / static_cast<double>(it->second.second);
    }
    r.participants.push_back(pr);
  }
  std::sort(r.participants.begin(), r.participants.end(), [](const ParticipantRow& a, const ParticipantRow& b) {
    return std::tie(a.order, a.participant_id) < std::tie(b.order, b.participant_id);
  });

  try {
    r.activity_slope = fit_activity_slope(r);
  } catch (const Error& e) {
    r.activity_slope_error = e.what();
  }

  Json novel = Json::array();
  for (const auto& p : r.participants) {
    novel.push_back({{"participant_id", p.participant_id},
                     {"rate", p.edited_fields ? Json(static_cast<double>(p.knowledge_entries) /
                                                     static_cast<double>(p.edited_fields))
                                              : Json(nullptr)}});
  }
  r.indicators = Json{
      {"h1_distance_trend", opt(trend(r.participants, [](const ParticipantRow& p) {
         return std::optional<double>(static_cast<double>(p.q_chars + p.c_chars));
       }))},
      {"h2_duration_trend", opt(trend(r.participants, [](const ParticipantRow& p) {
         return std::optional<double>(p.duration_seconds);
       }))},
      {"h3_rating_trend", opt(trend(r.participants, [](const ParticipantRow& p) { return p.mean_rating; }))},
      {"h4_novel_entry_rate", novel},
  };
  return r;
}

Json MetricsReport::to_json() const {
  Json sessions_json = Json::array();
  for (const auto& s : sessions) {
    sessions_json.push_back({{"participant_id", s.participant_id},
                             {"order", s.order},
                             {"paper_id", s.paper_id},
                             {"duration_seconds", opt(s.duration_seconds)},
                             {"mean_rating", opt(s.mean_rating)},
                             {"ratings", s.ratings},
                             {"direct_edits", s.direct_edits},
                             {"prompt_edits", s.prompt_edits},
                             {"deletes", s.deletes},
                             {"q_chars", s.q_chars},
                             {"c_chars", s.c_chars},
                             {"q_words", s.q_words},
                             {"c_words", s.c_words},
                             {"edited_fields", s.edited_fields},
                             {"knowledge_entries", s.knowledge_entries}});
  }
  Json people = Json::array();
  for (const auto& p : participants) {
    people.push_back({{"participant_id", p.participant_id},
                      {"order", p.order},
                      {"sessions", p.sessions},
                      {"duration_seconds", p.duration_seconds},
                      {"mean_rating", opt(p.mean_rating)},
                      {"direct_edits", p.direct_edits},
                      {"prompt_edits", p.prompt_edits},
                      {"q_chars", p.q_chars},
                      {"c_chars", p.c_chars},
                      {"edited_fields", p.edited_fields},
                      {"knowledge_entries", p.knowledge_entries}});
  }
  Json cats = Json::object();
  for (auto c : kAllCategories) cats[std::string(to_string(c))] = knowledge_per_category[static_cast<std::size_t>(c)];
  Json out{{"notes", notes},
           {"sessions", sessions_json},
           {"participants", people},
           {"knowledge", {{"total", knowledge_total}, {"per_category", cats}, {"timeline", knowledge_timeline}}},
           {"activity_slope", opt(activity_slope)},
           {"indicators", indicators},
           {"warnings", warnings}};
  if (!activity_slope_error.empty()) out["activity_slope_error"] = activity_slope_error;
  if (checks) {
    out["checks"] = {{"containment_ok", checks->containment_ok},
                     {"containment_checked", checks->containment_checked},
                     {"containment_missing", checks->containment_missing},
                     {"first_participant_clean", checks->first_participant_clean},
                     {"knowledge_monotone", checks->knowledge_monotone}};
  }
  return out;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  for (const auto& n : notes) out << "# " << n << '\n';
  out << "# activity_slope=" << fmt(activity_slope) << " knowledge_total=" << knowledge_total << '\n';
  out << "participant_id,order,paper_id,duration_seconds,mean_rating,ratings,direct_edits,prompt_edits,deletes,"
         "q_chars,c_chars,q_words,c_words,edited_fields,knowledge_entries\n";
  for (const auto& s : sessions) {
    out << s.participant_id << ',' << s.order << ',' << s.paper_id << ',' << fmt(s.duration_seconds) << ','
        << fmt(s.mean_rating) << ',' << s.ratings << ',' << s.direct_edits << ',' << s.prompt_edits << ','
        << s.deletes << ',' << s.q_chars << ',' << s.c_chars << ',' << s.q_words << ',' << s.c_words << ','
        << s.edited_fields << ',' << s.knowledge_entries << '\n';
  }
  return out.str();
}

MetricsReport replay_trace(const std::vector<TraceEvent>& events, const std::vector<PaperRecord>& papers,
                           const ReplayOptions& options) {
  Replayer replayer(options);
  for (const auto& p : papers) replayer.add_paper(p);
  replayer.run(events);
  return replayer.report();
}

// -- simulation ----------------------------------------------------------------------

std::vector<TraceEvent> build_simulation_trace(const SimulationOptions& options, std::vector<PaperRecord>& papers_out) {
  const auto& script = options.script;
  papers_out.clear();
  if (auto it = script.find("papers"); it != script.end() && it->is_array()) {
    for (const auto& p : *it) papers_out.push_back(fetch::parse_paper_file(p));
  } else {
    for (std::size_t j = 1; j <= options.papers; ++j) {
      PaperRecord p;
      p.id = "paper-" + std::to_string(j);
      p.title = "Synthetic study " + std::to_string(j) + " on chart reading";
      p.abstract_text = "We study how readers with different backgrounds interpret chart type " + std::to_string(j) + ".";
      p.full_text = p.abstract_text + " Participants completed comprehension tasks; accuracy varied with " +
                    vocab(j) + " framing.";
      papers_out.push_back(p);
    }
  }
  if (papers_out.empty()) throw Error(ErrorCode::invalid_argument, "simulation needs at least one paper", "papers");

  Json people = script.value("participants", Json::array());
  std::vector<TraceEvent> events;
  auto push = [&](Json data, Timestamp at) {
    TraceEvent e;
    e.index = events.size();
    e.type = data.at("type").get<std::string>();
    data["at"] = format_rfc3339(at);
    e.at = at;
    e.data = std::move(data);
    events.push_back(std::move(e));
  };

  auto t = options.replay.epoch;
  for (std::size_t k = 1; k <= options.participants; ++k) {
    auto pid = "P" + std::to_string(k);
    Json person = k <= people.size() ? people[k - 1] : Json::object();
    Json sessions = person.value("sessions", Json::array());
    for (std::size_t j = 0; j < papers_out.size(); ++j) {
      const auto& paper = papers_out[j];
      Json session = Json::object();
      for (const auto& s : sessions) {
        if (s.value("paper", "") == paper.id) session = s;
      }
      Json base{{"participant", pid}, {"paper", paper.id}};
      t += std::chrono::minutes(1);
      Json start = base;
      start.update({{"type", "session_start"}, {"project", "sim"}, {"order", k},
                    {"expertise", person.value("expertise", "visualization researcher")}});
      push(start, t);

      Json gen = base;
      gen["type"] = "generate";
      if (session.contains("questions")) gen["questions"] = session["questions"];
      t += std::chrono::minutes(1);
      push(gen, t);

      Json scripted = session.value("events", Json());
      if (scripted.is_array()) {
        for (auto ev : scripted) {
          ev.update(base);
          t += std::chrono::minutes(2);
          push(ev, t);
        }
      } else {
        auto v = std::string(vocab(k * 3 + j));
        Json edit = base;
        edit.update({{"type", "direct_edit"}, {"position", 1}, {"field", "question"},
                     {"append", " Focus on " + v + " readers."}});
        t += std::chrono::minutes(3);
        push(edit, t);
        Json regen = base;
        regen.update({{"type", "prompt_edit"}, {"position", 2}, {"scope", "contribution"},
                      {"user_prompt", "make it more specific to eye-tracking"},
                      {"append", " Gaze data would show where " + v + " readers hesitate."}});
        t += std::chrono::minutes(2);
        push(regen, t);
        for (int pos = 1; pos <= 3; ++pos) {
          Json rate = base;
          rate.update({{"type", "rate"}, {"position", pos}, {"rating", 3 + static_cast<int>((k + pos) % 3)}});
          t += std::chrono::seconds(30);
          push(rate, t);
        }
      }
      Json end = base;
      end["type"] = "session_end";
      if (session.contains("knowledge")) end["knowledge"] = session["knowledge"];
      t += std::chrono::minutes(static_cast<long>(10 + (k * 7 + j * 3) % 11));
      push(end, t);
    }
  }
  return events;
}

MetricsReport simulate_sequential(const SimulationOptions& options) {
  if (options.participants == 0) throw Error(ErrorCode::invalid_argument, "need at least one participant", "participants");
  std::vector<PaperRecord> papers;
  auto events = build_simulation_trace(options, papers);

  auto replay = options.replay;
  replay.synthesize_knowledge = true;
  Replayer replayer(replay);
  for (const auto& p : papers) replayer.add_paper(p);
  replayer.run(events);
  auto report = replayer.report();

  auto& store = replayer.store();
  SimulationChecks checks;
  std::map<std::string, int> order_of;
  for (const auto& p : store.query<Participant>()) order_of[p.id] = p.order_index;
  auto entries = store.query<KnowledgeEntry>();
  for (const auto& meta : store.query<GenerationMetadata>()) {
    auto a = store.get<ResearchQuestionArtifact>(meta.entity_id);
    auto s = store.get<EvaluationSession>(a->session_id);
    int k = order_of[s->participant_id];
    if (k == 1) {
      if (meta.generation_prompt.find(context::kKnowledgeHeader) != std::string::npos) {
        checks.first_participant_clean = false;
      }
      continue;
    }
    for (const auto& entry : entries) {
      auto creator = order_of.find(entry.created_by);
      if (creator == order_of.end() || creator->second >= k) continue;
      ++checks.containment_checked;
      if (meta.generation_prompt.find(entry.text) == std::string::npos) {
        checks.containment_ok = false;
        checks.containment_missing.push_back(meta.entity_id + " lacks " + entry.id);
      }
    }
  }
  const auto& tl = report.knowledge_timeline;
  checks.knowledge_monotone = std::is_sorted(tl.begin(), tl.end());
  report.checks = checks;
  return report;
}

}  // namespace cmda::harness

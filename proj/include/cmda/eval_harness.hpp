#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmda/clock.hpp"
#include "cmda/domain.hpp"
#include "cmda/generator.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/orchestrator.hpp"
#include "cmda/storage.hpp"

namespace cmda::harness {

// One JSON-lines trace event. Types: session_start, generate, rate,
// direct_edit, prompt_edit, delete, session_end. See README for payloads.
struct TraceEvent {
  std::size_t index = 0;  // 0-based line number among non-blank lines
  std::string type;
  Json data = Json::object();
  std::optional<Timestamp> at;
};

// Throws Error{validation_failed} naming the offending event index.
std::vector<TraceEvent> parse_trace(std::istream& in);
std::vector<TraceEvent> load_trace(const std::filesystem::path& file);
std::vector<PaperRecord> load_papers(const std::filesystem::path& dir);

// Ordinary least squares slope of y on x. Throws Error{invalid_argument} for
// fewer than two points or when every x is equal.
double ols_slope(std::span<const std::pair<double, double>> points);

struct SessionRow {
  std::string participant_id;
  int order = 0;
  std::string paper_id;
  std::optional<double> duration_seconds;
  std::optional<double> mean_rating;
  std::size_t ratings = 0;
  std::size_t direct_edits = 0;
  std::size_t prompt_edits = 0;
  std::size_t deletes = 0;
  std::uint64_t q_chars = 0, c_chars = 0, q_words = 0, c_words = 0;
  std::size_t edited_fields = 0;
  std::size_t knowledge_entries = 0;
};

struct ParticipantRow {
  std::string participant_id;
  int order = 0;
  std::size_t sessions = 0;
  double duration_seconds = 0;
  std::optional<double> mean_rating;  // over every rating the participant gave
  std::size_t direct_edits = 0;
  std::size_t prompt_edits = 0;
  std::uint64_t q_chars = 0, c_chars = 0;
  std::size_t edited_fields = 0;
  std::size_t knowledge_entries = 0;
};

struct SimulationChecks {
  bool containment_ok = true;
  std::size_t containment_checked = 0;  // (prompt, entry) pairs checked
  std::vector<std::string> containment_missing;
  bool first_participant_clean = true;
  bool knowledge_monotone = true;
};

struct MetricsReport {
  std::vector<SessionRow> sessions;
  std::vector<ParticipantRow> participants;
  std::array<std::size_t, 3> knowledge_per_category{};
  std::size_t knowledge_total = 0;
  std::vector<std::size_t> knowledge_timeline;  // total after each generation step
  std::optional<double> activity_slope;
  std::string activity_slope_error;
  Json indicators = Json::object();
  std::vector<std::string> notes;
  std::vector<std::string> warnings;
  std::optional<SimulationChecks> checks;

  bool empty() const { return sessions.empty(); }
  Json to_json() const;
  std::string to_csv() const;
};

// Slope of knowledge entries on edited fields over the participant rows.
double fit_activity_slope(const MetricsReport& report);

struct ReplayOptions {
  std::string domain = std::string(prompts::kDefaultDomain);
  generation::KnowledgeGate gate = generation::KnowledgeGate::participant_order;
  // Invent deterministic extraction replies for edited artifacts that have no
  // recorded knowledge.
  bool synthesize_knowledge = false;
  Timestamp epoch = Timestamp{std::chrono::seconds(1'735'689'600)};  // 2025-01-01T00:00:00Z
};

// Drives the full pipeline (orchestrator, generator, extraction, edit ledger)
// against a scripted mock provider with a deterministic clock.
class Replayer {
 public:
  explicit Replayer(ReplayOptions options = {});
  ~Replayer();

  void add_paper(PaperRecord paper);
  void apply(const TraceEvent& event);
  // Applies every event, then a final extraction pass over each project.
  void run(const std::vector<TraceEvent>& events);
  void finish();

  MetricsReport report() const;

  Store& store() { return *store_; }
  llm::MockProvider& mock() { return *mock_; }
  llm::Gateway& gateway() { return *gateway_; }
  const std::vector<std::size_t>& knowledge_timeline() const { return timeline_; }

 private:
  std::string session_of(const TraceEvent& e) const;
  std::string artifact_at(const TraceEvent& e) const;
  void touch_clock(const TraceEvent& e);
  void feed_extraction_replies(const std::string& project_id);
  void on_session_start(const TraceEvent& e);
  void on_generate(const TraceEvent& e);
  void on_direct_edit(const TraceEvent& e);
  void on_prompt_edit(const TraceEvent& e);
  void on_rate(const TraceEvent& e);
  void on_delete(const TraceEvent& e);
  void on_session_end(const TraceEvent& e);

  ReplayOptions options_;
  std::shared_ptr<ManualClock> clock_;
  Timestamp clock_floor_;
  std::unique_ptr<Store> store_;
  std::shared_ptr<llm::MockProvider> mock_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::unique_ptr<orchestrator::TaskEngine> engine_;

  std::map<std::string, std::string> sessions_;   // participant \x1f paper -> session id
  std::map<std::string, Timestamp> last_at_;      // session id -> last event time
  std::map<std::string, Json> recorded_knowledge_;  // artifact id -> reply array
  std::vector<std::string> projects_;
  std::vector<std::size_t> timeline_;
  std::vector<std::string> warnings_;
};

MetricsReport replay_trace(const std::vector<TraceEvent>& events, const std::vector<PaperRecord>& papers,
                           const ReplayOptions& options = {});

// Simulation script (JSON):
//   {"papers": [paper...]?, "participants": [{"expertise"?, "sessions": [
//       {"paper", "questions"?, "events": [event-without-participant/paper...],
//        "knowledge": {"<position>": [{text, category}]}}]}]}
// Participants or sessions missing from the script are synthesized.
struct SimulationOptions {
  std::size_t participants = 5;
  std::size_t papers = 3;
  Json script = Json::object();
  ReplayOptions replay;
};

// Builds the trace for participants 1..N in order and replays it, adding the
// containment, first-participant and monotonicity checks to the report.
std::vector<TraceEvent> build_simulation_trace(const SimulationOptions& options,
                                               std::vector<PaperRecord>& papers_out);
MetricsReport simulate_sequential(const SimulationOptions& options);

}  // namespace cmda::harness

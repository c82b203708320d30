#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "cmda/clock.hpp"
#include "cmda/domain.hpp"
#include "cmda/edit_ledger.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/storage.hpp"

namespace cmda::testing {

inline Timestamp epoch() { return Timestamp{std::chrono::seconds(1'735'689'600)}; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture(const std::string& name) {
  return read_file(std::filesystem::path(CMDA_FIXTURE_DIR) / name);
}

// Deterministic store plus helpers for seeding the usual entity chain
// (paper -> participant -> session -> artifacts).
struct World {
  std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(epoch());
  std::unique_ptr<Store> store = std::make_unique<Store>(clock);
  std::string project = "proj-a";

  PaperRecord paper(const std::string& id = "paper-1", const std::string& full_text = "Full text of the paper.") {
    PaperRecord p;
    p.id = id;
    p.title = "Title of " + id;
    p.authors = "A. Author";
    p.abstract_text = "Abstract of " + id;
    p.full_text = full_text;
    p.created_at = store->now();
    store->put(p);
    return p;
  }

  Participant participant(const std::string& id, int order, const std::string& project_id = {}) {
    Participant p;
    p.id = id;
    p.project_id = project_id.empty() ? project : project_id;
    p.order_index = order;
    p.domain_expertise = "visualization";
    p.status = ParticipantStatus::active;
    store->put(p);
    return p;
  }

  EvaluationSession session(const std::string& id, const std::string& participant_id, const std::string& paper_id,
                            const std::string& project_id = {}) {
    EvaluationSession s;
    s.id = id;
    s.participant_id = participant_id;
    s.project_id = project_id.empty() ? project : project_id;
    s.paper_id = paper_id;
    s.started_at = store->now();
    s.trace_id = "trace-" + id;
    store->put(s);
    return s;
  }

  ResearchQuestionArtifact artifact(const std::string& id, const std::string& session_id, const std::string& paper_id,
                                    const std::string& question, const std::string& contribution,
                                    int position = 1) {
    ResearchQuestionArtifact a;
    a.id = id;
    a.paper_id = paper_id;
    a.session_id = session_id;
    a.position = position;
    a.initial_question = a.current_question = question;
    a.initial_contribution = a.current_contribution = contribution;
    a.created_at = store->now();
    store->put(a);
    return a;
  }

  // One paper, one participant, one session, one artifact.
  ResearchQuestionArtifact basic(const std::string& artifact_id = "rq-1") {
    if (!store->get<PaperRecord>("paper-1")) paper("paper-1");
    if (!store->get<Participant>("p1")) participant("p1", 1);
    if (!store->get<EvaluationSession>("s1")) session("s1", "p1", "paper-1");
    return artifact(artifact_id, "s1", "paper-1", "How do users read charts?",
                    "Shows how charts are read by users.");
  }

  EditOutcome edit(const std::string& artifact_id, const std::string& field, const std::string& new_value,
                   EditType type = EditType::direct_edit) {
    auto a = store->get<ResearchQuestionArtifact>(artifact_id).value();
    EditRequest r;
    r.artifact_id = artifact_id;
    r.edit_type = type;
    r.field_name = field;
    r.original_value = field == kFieldQuestion ? a.current_question : a.current_contribution;
    r.new_value = new_value;
    if (type == EditType::prompt_regeneration) r.user_prompt = "rewrite it";
    return record_edit(*store, r);
  }
};

inline std::string random_string(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

}  // namespace cmda::testing

#include <httplib.h>

#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>

#include "cmda/api_service.hpp"
#include "cmda/context_assembler.hpp"
#include "cmda/document_fetcher.hpp"
#include "cmda/eval_harness.hpp"
#include "cmda/llm_gateway.hpp"
#include "cmda/orchestrator.hpp"
#include "cmda/storage.hpp"

namespace {

constexpr int kExitValidation = 2;

void write_report(const cmda::harness::MetricsReport& report, const std::string& format, const std::string& out) {
  std::string text = format == "csv" ? report.to_csv() : report.to_json().dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw cmda::Error(cmda::ErrorCode::invalid_argument, "cannot write " + out, "out");
  f << text;
}

cmda::Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cmda::Error(cmda::ErrorCode::not_found, "cannot open " + path, "script");
  auto j = cmda::Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw cmda::Error(cmda::ErrorCode::validation_failed, "malformed JSON in " + path, "script");
  return j;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmda: edit capture, knowledge extraction and context injection for research-question generation"};
  app.require_subcommand(1);

  std::string trace, papers_dir, out, format = "json", gate = "participant_order";
  auto* replay = app.add_subcommand("replay", "Replay a JSON-lines trace and emit metrics");
  replay->add_option("--trace", trace, "Trace file (JSON lines)")->required();
  replay->add_option("--papers", papers_dir, "Directory of <paper>.json files")->required();
  replay->add_option("--out", out, "Output file (default stdout)");
  replay->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  replay->add_option("--gate", gate, "Knowledge gate")->check(CLI::IsMember({"participant_order", "store_non_empty"}));

  std::size_t participants = 5, paper_count = 3;
  std::string script_path;
  auto* simulate = app.add_subcommand("simulate", "Simulate sequential participants against the mock provider");
  simulate->add_option("--participants", participants, "Number of participants")->check(CLI::Range(1, 1000));
  simulate->add_option("--papers", paper_count, "Synthetic papers per participant")->check(CLI::Range(1, 100));
  simulate->add_option("--script", script_path, "Simulation script (JSON)");
  simulate->add_option("--out", out, "Output file (default stdout)");
  simulate->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  simulate->add_option("--gate", gate, "Knowledge gate")->check(CLI::IsMember({"participant_order", "store_non_empty"}));

  std::string project, store_path;
  auto* stats = app.add_subcommand("stats", "Knowledge statistics for a project in a store snapshot");
  stats->add_option("--project", project, "Project id")->required();
  stats->add_option("--store", store_path, "Store snapshot file")->required();

  std::string host = "127.0.0.1", mock_script;
  int port = 8080;
  std::size_t workers = 2;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API with background workers");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--store", store_path, "Store snapshot file (in-memory when omitted)");
  serve->add_option("--workers", workers, "Worker threads")->check(CLI::Range(1, 64));
  serve->add_option("--papers", papers_dir, "Directory the document fetcher reads");
  serve->add_option("--mock-script", mock_script, "Use the mock provider with this script instead of HTTP");
  serve->add_option("--gate", gate, "Knowledge gate")->check(CLI::IsMember({"participant_order", "store_non_empty"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    auto knowledge_gate = *cmda::generation::parse_knowledge_gate(gate);

    if (*replay) {
      cmda::harness::ReplayOptions options;
      options.gate = knowledge_gate;
      auto report = cmda::harness::replay_trace(cmda::harness::load_trace(trace), cmda::harness::load_papers(papers_dir),
                                                options);
      write_report(report, format, out);
      return 0;
    }

    if (*simulate) {
      cmda::harness::SimulationOptions options;
      options.participants = participants;
      options.papers = paper_count;
      options.replay.gate = knowledge_gate;
      if (!script_path.empty()) options.script = read_json_file(script_path);
      auto report = cmda::harness::simulate_sequential(options);
      write_report(report, format, out);
      const auto& c = *report.checks;
      bool ok = c.containment_ok && c.knowledge_monotone &&
                (knowledge_gate != cmda::generation::KnowledgeGate::participant_order || c.first_participant_clean);
      if (!ok) std::cerr << "simulation checks failed\n";
      return ok ? 0 : 1;
    }

    if (*stats) {
      if (!std::filesystem::exists(store_path)) {
        throw cmda::Error(cmda::ErrorCode::not_found, "no store snapshot at " + store_path, "store");
      }
      auto store = cmda::Store::open(store_path);
      auto s = cmda::context::knowledge_stats(*store, project);
      auto j = s.to_json();
      j["project_id"] = project;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*serve) {
      std::unique_ptr<cmda::Store> store =
          store_path.empty() ? std::make_unique<cmda::Store>() : cmda::Store::open(store_path);
      std::shared_ptr<cmda::llm::Provider> provider;
      if (!mock_script.empty()) {
        provider = cmda::llm::MockProvider::configure(read_json_file(mock_script));
      } else if (auto http = cmda::llm::HttpProviderConfig::from_env()) {
        provider = cmda::llm::make_http_provider(*http);
      } else {
        throw cmda::Error(cmda::ErrorCode::invalid_argument,
                          "no provider: set CMDA_LLM_BASE_URL or pass --mock-script", "provider");
      }
      cmda::llm::GatewayOptions gopts;
      if (const char* p = std::getenv("CMDA_TRACE_JSONL")) gopts.trace_jsonl = p;
      cmda::llm::Gateway gateway(provider, store.get(), gopts);

      std::shared_ptr<cmda::fetch::DocumentFetcher> fetcher;
      if (!papers_dir.empty()) fetcher = std::make_shared<cmda::fetch::DirectoryFetcher>(papers_dir);
      else fetcher = std::make_shared<cmda::fetch::StubFetcher>();

      cmda::orchestrator::EngineConfig config;
      config.generation.gate = knowledge_gate;
      config.generation.model = cmda::llm::ModelConfig::from_env();
      config.extraction.model = config.generation.model;
      cmda::orchestrator::TaskEngine engine(*store, gateway, fetcher, config);
      cmda::api::ServiceOptions sopts;
      sopts.generation = config.generation;
      cmda::api::Router router(*store, engine, gateway, sopts);

      cmda::orchestrator::WorkerPool::Options wopts;
      wopts.workers = workers;
      cmda::orchestrator::WorkerPool pool(engine, wopts);
      pool.start();

      httplib::Server server;
      cmda::api::bind(server, router);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << port << "\n";
      bool ok = server.listen(host, port);
      pool.stop();
      if (!ok) {
        std::cerr << "could not bind " << host << ":" << port << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const cmda::Error& e) {
    std::cerr << "error [" << cmda::to_string(e.code()) << "]: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  - " << d << "\n";
    switch (e.code()) {
      case cmda::ErrorCode::invalid_argument:
      case cmda::ErrorCode::validation_failed:
      case cmda::ErrorCode::not_found:
        return kExitValidation;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

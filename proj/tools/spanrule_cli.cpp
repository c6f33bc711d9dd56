// spanrule: serve the labeling API, replay session logs, evaluate projects.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "api_server.hpp"
#include "simulate.hpp"
#include "spanrule/error.hpp"
#include "spanrule/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spanrule;

namespace {

ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, p.string() + ": " + e.what());
  }
}

ProjectConfig config_for(const fs::path& corpus_dir, const std::string& config_path) {
  if (!config_path.empty()) return project_config_from_json(read_json_file(config_path));
  if (fs::exists(corpus_dir / "project.json"))
    return project_config_from_json(read_json_file(corpus_dir / "project.json"));
  return {};
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kInternal, "cannot write " + path);
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive rule synthesis for weak supervision"};
  app.require_subcommand(1);

  std::string data_dir = "data/projects";
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--data-dir", data_dir, "Project storage directory");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--static-dir", static_dir, "Serve UI assets from this directory");

  std::string log_path, corpus_dir, out_path, config_path, state_out;
  auto* replay = app.add_subcommand("replay", "Rebuild a project from an event log");
  replay->add_option("--log", log_path, "Event log (JSONL)")->required();
  replay->add_option("--corpus-dir", corpus_dir, "Directory with unlabeled/dev/test.jsonl")->required();
  replay->add_option("--out", out_path, "Metrics JSON output (- for stdout)");
  replay->add_option("--config", config_path, "Project config JSON (default: <corpus-dir>/project.json)");
  replay->add_option("--state-out", state_out, "Also write the full project state JSON");

  std::string project_dir;
  std::uint64_t seed = 42;
  auto* eval = app.add_subcommand("eval", "Train and evaluate the end model of a stored project");
  eval->add_option("--project", project_dir, "Project directory")->required();
  eval->add_option("--seed", seed, "End-model seed");
  eval->add_option("--out", out_path, "Metrics JSON output (- for stdout)");

  std::string script_path;
  auto* simulate = app.add_subcommand("simulate", "Run a scripted labeling session");
  simulate->add_option("--corpus-dir", corpus_dir, "Directory with unlabeled/dev/test.jsonl")->required();
  simulate->add_option("--script", script_path, "Labeler script JSON")->required();
  simulate->add_option("--out-log", log_path, "Event log output")->required();
  simulate->add_option("--config", config_path, "Project config JSON");
  simulate->add_option("--out", out_path, "Metrics JSON output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      ApiServer server(data_dir, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir));
      int bound = server.bind(host, port);
      if (bound < 0) fail(ErrorCode::kUnavailable, "cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      server.serve();
      g_server = nullptr;
    } else if (*replay) {
      auto corpora = std::make_shared<const ProjectCorpora>(load_corpora(corpus_dir));
      Project p = Project::replay(config_for(corpus_dir, config_path), corpora, read_event_log(log_path));
      write_output(out_path, p.metrics_report().dump(2) + "\n");
      if (!state_out.empty()) write_output(state_out, p.state_json().dump(2) + "\n");
    } else if (*eval) {
      Project p = open_project_dir(project_dir);
      EndModelConfig cfg = p.config().end_model;
      cfg.seed = seed;
      p.train(cfg, utc_timestamp());
      write_output(out_path, to_json(*p.state().end_model).dump(2) + "\n");
    } else if (*simulate) {
      auto corpora = std::make_shared<const ProjectCorpora>(load_corpora(corpus_dir));
      LabelerScript script = labeler_script_from_json(read_json_file(script_path));
      Project p = simulate_session(config_for(corpus_dir, config_path), corpora, script);
      std::ostringstream log;
      write_event_log(log, p.events());
      write_output(log_path, log.str());
      if (!out_path.empty()) write_output(out_path, p.metrics_report().dump(2) + "\n");
    }
  } catch (const Error& e) {
    std::cerr << json{{"code", to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"code", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}

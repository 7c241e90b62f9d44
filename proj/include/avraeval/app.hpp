#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <stop_token>
#include <string>

#include <nlohmann/json.hpp>

#include "avraeval/dataset.hpp"
#include "avraeval/inference.hpp"
#include "avraeval/metrics.hpp"
#include "avraeval/prompts.hpp"

namespace avraeval::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kIoError = 2, kBackendConfig = 3 };

struct AppConfig {
  inference::BackendConfig backend;
  DatasetOptions dataset;
  prompts::PromptOptions prompts;
  metrics::AggregateOptions report;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Top-level keys: backend, dataset, prompts, report. See README for the key set.
AppConfig config_from_json(const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);

class Log {
 public:
  Log(std::ostream& out, bool verbose) : out_(out), verbose_(verbose) {}
  void info(const std::string& msg) const;
  void warn(const std::string& msg) const;
  void error(const std::string& msg) const;

 private:
  std::ostream& out_;
  bool verbose_;
};

// "1-5", "3", "1,3,5", "1-2,4". Throws std::invalid_argument.
std::set<int> parse_template_set(const std::string& spec);

struct IngestArgs {
  std::filesystem::path input;
  std::filesystem::path out;
  std::filesystem::path report;  // default: <out>.filter.json
};

struct RunArgs {
  std::filesystem::path records;
  std::filesystem::path results;
  std::filesystem::path checkpoint;  // default: <results>.ckpt
  std::filesystem::path manifest;    // default: <results>.manifest.json
  std::set<int> template_ids = {1, 2, 3, 4, 5};
  bool resume = false;
};

struct ScoreArgs {
  std::filesystem::path results;
  std::filesystem::path records;
  std::filesystem::path out;
  std::filesystem::path manifest;  // optional stage bookkeeping
};

struct ReportArgs {
  std::filesystem::path rows;
  std::filesystem::path out_csv;
  std::filesystem::path out_json;
  std::filesystem::path manifest;  // optional; finalized when given
};

int cmd_ingest(const IngestArgs& args, const AppConfig& cfg, const Log& log);

// Uses `transport` when given, otherwise an HTTP client for cfg.backend.
int cmd_run(const RunArgs& args, const AppConfig& cfg, const Log& log,
            inference::ChatTransport* transport = nullptr, std::stop_token stop = {});

int cmd_score(const ScoreArgs& args, const AppConfig& cfg, const Log& log);
int cmd_report(const ReportArgs& args, const AppConfig& cfg, const Log& log);

// Deterministic id for (records digest, model, templates).
std::string make_run_id(const std::string& records_digest, const std::string& model_name,
                        const std::set<int>& template_ids);

}  // namespace avraeval::app

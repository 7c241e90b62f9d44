#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "avraeval/app.hpp"

using namespace avraeval;

int main(int argc, char** argv) {
  CLI::App cli{"Batch evaluation harness for Avrae command generation"};
  cli.require_subcommand(1);

  std::string config_path;
  bool verbose = false;
  cli.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  cli.add_flag("-v,--verbose", verbose, "Progress and summary output on stderr");

  app::IngestArgs ingest;
  auto* ingest_cmd = cli.add_subcommand("ingest", "Load, clean and filter FIREBALL records");
  ingest_cmd->add_option("--input", ingest.input, "JSONL input, optionally gzip-compressed")->required();
  ingest_cmd->add_option("--out", ingest.out, "Normalized records output")->required();
  ingest_cmd->add_option("--report", ingest.report, "Filter report (default <out>.filter.json)");

  app::RunArgs run;
  std::string templates = "1-5";
  std::string base_url;
  std::string model;
  int max_in_flight = 0;
  auto* run_cmd = cli.add_subcommand("run", "Send prompts to a chat-completions backend");
  run_cmd->add_option("--records", run.records, "Normalized records from ingest")->required();
  run_cmd->add_option("--results", run.results, "Generation results output")->required();
  run_cmd->add_option("--templates", templates, "Template ids, e.g. 1-5 or 1,3")->capture_default_str();
  run_cmd->add_option("--checkpoint", run.checkpoint, "Checkpoint file (default <results>.ckpt)");
  run_cmd->add_option("--manifest", run.manifest, "Run manifest (default <results>.manifest.json)");
  run_cmd->add_flag("--resume", run.resume, "Continue from an existing checkpoint");
  run_cmd->add_option("--base-url", base_url, "Overrides backend.base_url");
  run_cmd->add_option("--model", model, "Overrides backend.model_name");
  run_cmd->add_option("--max-in-flight", max_in_flight, "Overrides backend.max_in_flight");

  app::ScoreArgs score;
  auto* score_cmd = cli.add_subcommand("score", "Score generations against the records");
  score_cmd->add_option("--results", score.results, "Results from run")->required();
  score_cmd->add_option("--records", score.records, "Normalized records from ingest")->required();
  score_cmd->add_option("--out", score.out, "Per-instance rows output")->required();
  score_cmd->add_option("--manifest", score.manifest, "Run manifest to update");

  app::ReportArgs report;
  bool corpus_bleu = false;
  auto* report_cmd = cli.add_subcommand("report", "Aggregate rows per model and prompt");
  report_cmd->add_option("--rows", report.rows, "Rows from score")->required();
  report_cmd->add_option("--csv", report.out_csv, "Summary table output")->required();
  report_cmd->add_option("--json", report.out_json, "Reference-check chart data output")->required();
  report_cmd->add_option("--manifest", report.manifest, "Run manifest to finalize");
  report_cmd->add_flag("--corpus-bleu", corpus_bleu, "Corpus BLEU per group instead of mean sentence BLEU");

  CLI11_PARSE(cli, argc, argv);

  const app::Log log(std::cerr, verbose);
  app::AppConfig cfg;
  try {
    if (!config_path.empty()) cfg = app::load_config(config_path);
  } catch (const app::ConfigError& e) {
    log.error(e.what());
    return run_cmd->parsed() ? app::kBackendConfig : app::kUsage;
  }

  if (*ingest_cmd) return app::cmd_ingest(ingest, cfg, log);
  if (*run_cmd) {
    try {
      run.template_ids = app::parse_template_set(templates);
    } catch (const std::invalid_argument& e) {
      log.error(e.what());
      return app::kUsage;
    }
    if (!base_url.empty()) cfg.backend.base_url = base_url;
    if (!model.empty()) cfg.backend.model_name = model;
    if (max_in_flight != 0) cfg.backend.max_in_flight = max_in_flight;
    return app::cmd_run(run, cfg, log);
  }
  if (*score_cmd) return app::cmd_score(score, cfg, log);
  if (*report_cmd) {
    if (corpus_bleu) cfg.report.corpus_bleu = true;
    return app::cmd_report(report, cfg, log);
  }
  return app::kUsage;
}

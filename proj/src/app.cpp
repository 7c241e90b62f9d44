#include "avraeval/app.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "avraeval/digest.hpp"

namespace avraeval::app {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

// Writes via a temporary file so a crash never leaves a half-written artifact.
template <typename Fn>
void write_file(const fs::path& path, Fn&& fill) {
  const fs::path tmp = with_suffix(path, ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    fill(out);
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError("not valid JSON: " + path.string());
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError("cannot read " + path.string());
}

struct TaggedResult {
  inference::GenerationResult result;
  std::string run_id;
};

std::vector<TaggedResult> read_tagged_results(const fs::path& path, const Log& log) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<TaggedResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    auto r = j.is_discarded() ? std::nullopt : inference::result_from_json(j);
    if (!r) {
      log.warn(path.string() + ":" + std::to_string(line_no) + ": unreadable result skipped");
      continue;
    }
    out.push_back({std::move(*r), j.value("run_id", "")});
  }
  return out;
}

void update_manifest(const fs::path& path, const std::string& stage, const json& info, bool finalize) {
  json manifest = json::object();
  std::error_code ec;
  if (fs::exists(path, ec)) manifest = read_json_file(path);
  manifest["stages"][stage] = info;
  if (finalize) manifest["finalized_at"] = utc_now();
  write_json_file(path, manifest);
}

}  // namespace

void Log::info(const std::string& msg) const {
  if (verbose_) out_ << "info: " << msg << '\n';
}
void Log::warn(const std::string& msg) const { out_ << "warning: " << msg << '\n'; }
void Log::error(const std::string& msg) const { out_ << "error: " << msg << '\n'; }

AppConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  AppConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "backend") {
        cfg.backend = inference::backend_from_json(value, cfg.backend);
      } else if (key == "dataset") {
        for (const auto& [k, v] : value.items()) {
          if (k == "max_context_chars") cfg.dataset.max_context_chars = v.get<std::size_t>();
          else if (k == "scrub_fields") cfg.dataset.scrub_fields = v.get<std::set<std::string>>();
          else throw ConfigError("unknown dataset key: " + k);
        }
      } else if (key == "prompts") {
        for (const auto& [k, v] : value.items()) {
          if (k == "separator") cfg.prompts.separator = v.get<std::string>();
          else if (k == "current_header") cfg.prompts.context.current_header = v.get<std::string>();
          else if (k == "others_header") cfg.prompts.context.others_header = v.get<std::string>();
          else if (k == "history_header") cfg.prompts.context.history_header = v.get<std::string>();
          else throw ConfigError("unknown prompts key: " + k);
        }
      } else if (key == "report") {
        for (const auto& [k, v] : value.items()) {
          if (k == "corpus_bleu") cfg.report.corpus_bleu = v.get<bool>();
          else if (k == "smoothing") {
            const auto s = v.get<std::string>();
            if (s == "add_one") cfg.report.smoothing = metrics::BleuSmoothing::AddOne;
            else if (s == "none") cfg.report.smoothing = metrics::BleuSmoothing::None;
            else throw ConfigError("unknown smoothing: " + s);
          } else {
            throw ConfigError("unknown report key: " + k);
          }
        }
      } else {
        throw ConfigError("unknown config section: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  // The context layout is shared by the length filter and the prompts.
  cfg.dataset.context = cfg.prompts.context;
  return cfg;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return config_from_json(j);
}

std::set<int> parse_template_set(const std::string& spec) {
  std::set<int> out;
  std::stringstream ss(spec);
  std::string part;
  auto to_id = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad template id '" + s + "'");
    }
    if (used != s.size() || v < 1 || v > prompts::kTemplateCount) {
      throw std::invalid_argument("template id out of range: '" + s + "'");
    }
    return v;
  };
  while (std::getline(ss, part, ',')) {
    if (part.empty()) throw std::invalid_argument("empty template id in '" + spec + "'");
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.insert(to_id(part));
      continue;
    }
    const int lo = to_id(part.substr(0, dash));
    const int hi = to_id(part.substr(dash + 1));
    if (lo > hi) throw std::invalid_argument("empty template range '" + part + "'");
    for (int id = lo; id <= hi; ++id) out.insert(id);
  }
  if (out.empty()) throw std::invalid_argument("no templates selected");
  return out;
}

std::string make_run_id(const std::string& records_digest, const std::string& model_name,
                        const std::set<int>& template_ids) {
  std::string key = records_digest + "\n" + model_name + "\n";
  for (int id : template_ids) key += std::to_string(id) + ",";
  return sha256_hex(key).substr(0, 16);
}

int cmd_ingest(const IngestArgs& args, const AppConfig& cfg, const Log& log) {
  try {
    const LoadResult loaded = load_records(args.input, cfg.dataset);
    write_file(args.out, [&](std::ostream& out) { write_records(out, loaded.records); });
    const fs::path report_path = args.report.empty() ? with_suffix(args.out, ".filter.json") : args.report;
    json report = to_json(loaded.report);
    report["input"] = args.input.string();
    report["input_digest"] = sha256_file(args.input);
    write_json_file(report_path, report);
    for (const auto& w : loaded.report.warnings) log.warn("record " + w.record_id + ": " + w.message);
    log.info("kept " + std::to_string(loaded.report.kept) + " of " + std::to_string(loaded.report.total) +
             " rows; dropped " + std::to_string(loaded.report.dropped.size()));
    return kOk;
  } catch (const IoError& e) {
    log.error(e.what());
    return kIoError;
  }
}

int cmd_run(const RunArgs& args, const AppConfig& cfg, const Log& log, inference::ChatTransport* transport,
            std::stop_token stop) {
  if (const auto problems = cfg.backend.validate(); !problems.empty()) {
    for (const auto& p : problems) log.error("backend: " + p);
    return kBackendConfig;
  }
  if (args.template_ids.empty()) {
    log.error("no templates selected");
    return kUsage;
  }
  for (int id : args.template_ids) {
    if (id < 1 || id > prompts::kTemplateCount) {
      log.error("unknown template id " + std::to_string(id));
      return kUsage;
    }
  }

  try {
    const LoadResult loaded = load_records(args.records, cfg.dataset);
    if (!loaded.report.dropped.empty()) {
      log.warn(std::to_string(loaded.report.dropped.size()) + " rows of " + args.records.string() +
               " did not load; run ingest first");
    }
    const auto instances = prompts::expand(loaded.records, args.template_ids, cfg.prompts);

    const std::string records_digest = sha256_file(args.records);
    const std::string run_id = make_run_id(records_digest, cfg.backend.model_name, args.template_ids);
    const fs::path checkpoint = args.checkpoint.empty() ? with_suffix(args.results, ".ckpt") : args.checkpoint;
    const fs::path manifest_path =
        args.manifest.empty() ? with_suffix(args.results, ".manifest.json") : args.manifest;

    std::error_code ec;
    if (!args.resume && fs::exists(checkpoint, ec)) {
      log.info("starting fresh; removing old checkpoint " + checkpoint.string());
      fs::remove(checkpoint, ec);
    }

    json templates = json::object();
    for (int id : args.template_ids) templates["prompt" + std::to_string(id)] = prompts::pinned_digest(id);
    json manifest = {{"run_id", run_id},
                     {"records", args.records.string()},
                     {"input_digest", records_digest},
                     {"template_digests", templates},
                     {"backend", inference::to_json(cfg.backend)},
                     {"started_at", utc_now()},
                     {"status", "running"},
                     {"counts", {{"records", loaded.records.size()}, {"instances", instances.size()}}},
                     {"artifacts", {{"results", args.results.string()}, {"checkpoint", checkpoint.string()}}}};
    write_json_file(manifest_path, manifest);

    std::unique_ptr<inference::ChatTransport> owned;
    if (transport == nullptr) {
      owned = inference::make_http_transport(cfg.backend);
      transport = owned.get();
    }

    inference::BatchStats stats;
    inference::BatchOptions options;
    options.stop = stop;
    options.stats = &stats;
    options.on_progress = [&](std::size_t done, std::size_t total) {
      if (done % 100 == 0 || done == total) log.info(std::to_string(done) + "/" + std::to_string(total) + " requests done");
    };
    const auto results = inference::run_batch(instances, cfg.backend, checkpoint, *transport, options);

    write_file(args.results, [&](std::ostream& out) {
      for (const auto& r : results) {
        json j = inference::to_json(r);
        j["run_id"] = run_id;
        out << j.dump() << '\n';
      }
    });

    const bool complete = results.size() == stats.unique_instances;
    manifest["status"] = complete ? "complete" : "partial";
    manifest["finished_at"] = utc_now();
    manifest["counts"]["results"] = results.size();
    manifest["counts"]["from_checkpoint"] = stats.from_checkpoint;
    manifest["counts"]["requested"] = stats.requested;
    manifest["counts"]["failed"] = stats.failed;
    write_json_file(manifest_path, manifest);

    if (stats.failed > 0) log.warn(std::to_string(stats.failed) + " requests failed; see error fields in results");
    if (!complete) log.warn("batch stopped early; rerun with --resume to finish");
    log.info("run " + run_id + ": " + std::to_string(stats.requested) + " requested, " +
             std::to_string(stats.from_checkpoint) + " from checkpoint");
    return kOk;
  } catch (const IoError& e) {
    log.error(e.what());
    return kIoError;
  }
}

int cmd_score(const ScoreArgs& args, const AppConfig& cfg, const Log& log) {
  try {
    const auto results = read_tagged_results(args.results, log);
    const LoadResult loaded = load_records(args.records, cfg.dataset);
    std::unordered_map<std::string, const FireballRecord*> by_id;
    for (const auto& r : loaded.records) by_id.emplace(r.record_id, &r);

    const fs::path run_manifest = args.manifest.empty() ? with_suffix(args.results, ".manifest.json") : args.manifest;
    std::error_code ec;
    if (fs::exists(run_manifest, ec)) {
      const json m = read_json_file(run_manifest);
      if (m.value("input_digest", "") != sha256_file(args.records)) {
        log.warn("records file differs from the one recorded in " + run_manifest.string());
      }
    }

    std::vector<metrics::EvalRow> rows;
    rows.reserve(results.size());
    std::size_t orphans = 0;
    for (const auto& tagged : results) {
      std::string record_id;
      int template_id = 0;
      const FireballRecord* record = nullptr;
      if (prompts::split_instance_id(tagged.result.instance_id, record_id, template_id)) {
        if (auto it = by_id.find(record_id); it != by_id.end()) record = it->second;
      }
      metrics::EvalRow row;
      if (record != nullptr) {
        row = metrics::score_row(tagged.result, *record, cfg.report.smoothing);
      } else {
        log.warn("no record for " + tagged.result.instance_id + "; scored as no_command");
        row = metrics::score_orphan(tagged.result);
        ++orphans;
      }
      row.run_id = tagged.run_id;
      rows.push_back(std::move(row));
    }

    write_file(args.out, [&](std::ostream& out) {
      for (const auto& row : rows) out << metrics::to_json(row).dump() << '\n';
    });
    if (!args.manifest.empty()) {
      update_manifest(args.manifest, "score",
                      {{"rows", rows.size()}, {"orphans", orphans}, {"out", args.out.string()}, {"at", utc_now()}},
                      false);
    }
    log.info("scored " + std::to_string(rows.size()) + " results");
    return kOk;
  } catch (const IoError& e) {
    log.error(e.what());
    return kIoError;
  }
}

int cmd_report(const ReportArgs& args, const AppConfig& cfg, const Log& log) {
  try {
    require_file(args.rows);
    std::ifstream in(args.rows);
    if (!in) throw IoError("cannot read " + args.rows.string());
    std::vector<metrics::EvalRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      auto row = j.is_discarded() ? std::nullopt : metrics::row_from_json(j);
      if (!row) {
        log.warn(args.rows.string() + ":" + std::to_string(line_no) + ": unreadable row skipped");
        continue;
      }
      rows.push_back(std::move(*row));
    }

    const auto summary = metrics::aggregate(rows, cfg.report);
    write_file(args.out_csv, [&](std::ostream& out) { metrics::write_csv(out, summary); });
    write_json_file(args.out_json, metrics::figure_json(summary));
    if (!args.manifest.empty()) {
      update_manifest(args.manifest, "report",
                      {{"groups", summary.groups.size()},
                       {"rows", rows.size()},
                       {"csv", args.out_csv.string()},
                       {"json", args.out_json.string()}},
                      true);
    }
    log.info("reported " + std::to_string(summary.groups.size()) + " groups");
    return kOk;
  } catch (const IoError& e) {
    log.error(e.what());
    return kIoError;
  }
}

}  // namespace avraeval::app

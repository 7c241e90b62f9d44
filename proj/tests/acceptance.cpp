// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "avraeval/app.hpp"
#include "avraeval/command.hpp"
#include "avraeval/digest.hpp"
#include "avraeval/game_state.hpp"
#include "avraeval/metrics.hpp"
#include "avraeval/prompts.hpp"
#include "generators.hpp"
#include "mock_server.hpp"
#include "oracles.hpp"
#include "process.hpp"
#include "support.hpp"

using namespace avraeval;
using namespace test_support;
using nlohmann::json;

namespace {

// Pinned limits.
constexpr double kRegressionBudgetS = 1.0;
constexpr double kEndToEndBudgetS = 30.0;
constexpr double kExpansionBudgetS = 10.0;
constexpr double kOracleTolerance = 1e-9;
constexpr double kMinReferenceRate = 0.9;
constexpr std::size_t kSyntheticRecords = 4071;
constexpr std::size_t kExpectedInstances = 20355;
constexpr int kOraclePairs = 1000;
constexpr std::uint64_t kOracleSeed = 1000;
constexpr std::size_t kOracleMaxLen = 12;
constexpr int kFuzzInputs = 100000;
constexpr std::size_t kFuzzMaxBytes = 256;
constexpr int kRoundTrips = 10000;
constexpr int kResumeRecords = 40;
constexpr int kResumeInFlight = 8;
constexpr std::size_t kKillAfter = 60;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are kept for the report line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& what) { info_ += (info_.empty() ? "" : "; ") + what; }
  Outcome outcome() const {
    if (failures_ == 0) return {true, info_};
    return {false, std::to_string(failures_) + " failed check(s): " + notes_ + (info_.empty() ? "" : " | " + info_)};
  }

 private:
  int failures_ = 0;
  std::string notes_;
  std::string info_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return "\"" + out + "\"";
}

std::vector<std::string> random_tokens(gen::Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> vocab = {"!attack", "!cast", "-t", "ba1", "wy1", "longbow", "dagger", "adv"};
  std::vector<std::string> out(gen::pick(rng, max_len + 1));
  for (auto& t : out) t = vocab[gen::pick(rng, vocab.size())];
  return out;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

std::size_t count_lines(const fs::path& p) {
  std::size_t n = 0;
  for (char c : read_file(p)) n += c == '\n';
  return n;
}

std::optional<AvraeCommand> parsed(const std::string& text) {
  auto r = parse_command(text);
  if (!r) return std::nullopt;
  return *r;
}

inference::GenerationResult generation(const std::string& id, const std::string& text) {
  inference::GenerationResult r;
  r.instance_id = id;
  r.raw_text = text;
  r.model_name = "fixture";
  r.finish_reason = "stop";
  return r;
}

Outcome regression_suite() {
  Checker c;
  const auto start = std::chrono::steady_clock::now();
  const FireballRecord emma = emma_record();
  const Actor& actor = emma.current_actor;
  const CombatState& state = emma.combat_state;
  auto verdict = [&](const std::string& text) { return reference_check(parsed(text), actor, state).verdict; };

  {
    const auto cmd = parsed("!a 2-Hand");
    c.expect(cmd && cmd->verb == "a" && cmd->subject == "2-Hand" && cmd->targets.empty(), "!a 2-Hand fields");
    c.expect(cmd && render(*cmd) == "!a 2-Hand", "!a 2-Hand render");
    c.expect(name_match("2-Hand", actor.attacks.entries, actor.attacks.raw), "2-Hand prefix match");
    c.expect(verdict("!a 2-Hand") == Verdict::Pass, "!a 2-Hand verdict");
  }
  {
    c.expect(format_check("!cast psychic -t ba1"), "psychic format");
    c.expect(name_match("psychic", actor.spells.entries, actor.spells.raw), "psychic substring match");
    c.expect(verdict("!cast psychic -t ba1") == Verdict::Pass, "psychic verdict");
    const auto row = metrics::score_row(generation("emma:1", "{{!cast psychic -t ba1}}"), emma);
    c.expect(row.format_pass && row.reference.passed(), "psychic scored row");
    c.expect(row.rouge1_f1 == 1.0 && row.rouge2_f1 == 1.0 && row.rougeL_f1 == 1.0, "psychic identity rouge");
  }
  {
    const auto cmd = parsed("!attack longbow -t WY1 adv");
    c.expect(cmd && cmd->verb == "attack" && cmd->subject == "longbow" &&
                 cmd->targets == std::vector<std::string>{"WY1"} && cmd->extra_args.size() == 1 &&
                 !cmd->extra_args[0].flag && cmd->extra_args[0].value == "adv",
             "longbow fields");
  }
  {
    const auto cmd = parsed("!cast 'fire bolt' -t BA3");
    c.expect(cmd && cmd->verb == "cast" && cmd->subject == "fire bolt" &&
                 cmd->targets == std::vector<std::string>{"BA3"} && cmd->extra_args.empty(),
             "fire bolt fields");
  }
  {
    c.expect(format_check("!spell Healing Word -t Inquisitus"), "healing word format");
    c.expect(verdict("!spell Healing Word -t Inquisitus") == Verdict::UnknownVerb, "healing word verdict");
    const auto row = metrics::score_row(generation("emma:2", "{{!spell Healing Word -t Inquisitus}}"), emma);
    c.expect(row.format_pass && row.reference.verdict == Verdict::UnknownVerb, "healing word scored row");
  }
  {
    const auto extracted = extract_command("...reasoning... {{!attack Dagger -t Hylga}}");
    c.expect(extracted == std::optional<std::string>("!attack Dagger -t Hylga"), "Hylga extraction");
    const auto cmd = extracted ? parsed(*extracted) : std::nullopt;
    c.expect(cmd && cmd->subject == "Dagger" && cmd->targets == std::vector<std::string>{"Hylga"}, "Hylga fields");
  }
  {
    c.expect(verdict("!attack Aid -t self") == Verdict::AttackMismatch, "Aid verdict");
    c.expect(!reference_check(parsed("!attack Aid -t self"), actor, state).detail.empty(), "Aid detail");
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < kRegressionBudgetS, "runtime " + fmt(elapsed) + " s");
  c.note("7 commands, " + fmt(elapsed, 4) + " s");
  return c.outcome();
}

Outcome gold_echo_end_to_end() {
  Checker c;
  const auto start = std::chrono::steady_clock::now();
  TempDir dir("accept-e2e");
  const std::string cli = cli_path().string();
  const auto log = dir / "log.txt";
  const auto records = dir / "records.jsonl";

  c.expect(run_process({cli, "ingest", "--input", (data_dir() / "fireball_50.jsonl").string(), "--out",
                        records.string()},
                       log) == 0,
           "ingest exit");
  const auto loaded = load_records(records);
  c.expect(loaded.records.size() == 50, "kept " + std::to_string(loaded.records.size()) + " of 50");
  std::unordered_map<std::string, std::string> gold;
  for (const auto& r : loaded.records) gold[r.record_id] = r.gold_command;

  MockServer server([&](const std::string& id, const json&) {
    std::string record_id;
    int template_id = 0;
    if (!prompts::split_instance_id(id, record_id, template_id) || !gold.count(record_id)) {
      return MockServer::Reply{400, R"({"error":"unknown id"})"};
    }
    return MockServer::Reply{200, completion_body("{{" + gold.at(record_id) + "}}", {-0.1, -0.2})};
  });
  const auto results = dir / "results.jsonl";
  const auto rows_path = dir / "rows.jsonl";
  const auto manifest = dir / "run.json";
  c.expect(run_process({cli, "run", "--records", records.string(), "--results", results.string(), "--manifest",
                        manifest.string(), "--templates", "1-5", "--base-url", server.base_url(), "--model",
                        "gold-echo", "--max-in-flight", "8"},
                       log) == 0,
           "run exit");
  c.expect(run_process({cli, "score", "--results", results.string(), "--records", records.string(), "--out",
                        rows_path.string(), "--manifest", manifest.string()},
                       log) == 0,
           "score exit");
  c.expect(run_process({cli, "report", "--rows", rows_path.string(), "--csv", (dir / "summary.csv").string(),
                        "--json", (dir / "figure.json").string(), "--manifest", manifest.string()},
                       log) == 0,
           "report exit");

  const auto rows = read_jsonl(rows_path);
  c.expect(rows.size() == 250, "rows " + std::to_string(rows.size()));
  std::size_t formatted = 0, passed = 0, missing_detail = 0;
  for (const auto& row : rows) {
    formatted += row["format_pass"].get<bool>();
    const bool ok = row["verdict"] == "pass";
    passed += ok;
    if (!ok && row["detail"].get<std::string>().empty()) ++missing_detail;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  const double format_rate = formatted / n;
  const double reference_rate = passed / n;
  c.expect(format_rate == 1.0, "format_rate " + fmt(format_rate));
  c.expect(reference_rate >= kMinReferenceRate, "reference_rate " + fmt(reference_rate));
  c.expect(missing_detail == 0, std::to_string(missing_detail) + " failures without detail");

  std::istringstream csv(read_file(dir / "summary.csv"));
  std::string line;
  std::vector<std::string> groups;
  std::getline(csv, line);
  c.expect(line == "model,prompt,format,reference,perplexity,rouge1,rouge2,rougeL,bleu", "csv header");
  while (std::getline(csv, line)) groups.push_back(line);
  c.expect(groups.size() == 5, "csv groups " + std::to_string(groups.size()));
  for (const auto& g : groups) c.expect(g.rfind("gold-echo,", 0) == 0 && g.find(",1.000000,") != std::string::npos, "group " + g);

  const double elapsed = seconds_since(start);
  c.expect(elapsed < kEndToEndBudgetS, "runtime " + fmt(elapsed) + " s");
  c.note("format_rate " + fmt(format_rate) + ", reference_rate " + fmt(reference_rate) + ", " +
         std::to_string(groups.size()) + " groups, " + fmt(elapsed, 2) + " s");
  return c.outcome();
}

Outcome expansion_count() {
  Checker c;
  TempDir dir("accept-expand");
  auto write_rows = [&](std::size_t n, const fs::path& path) {
    std::ofstream out(path);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = minimal_row(i % 2 ? "!cast Fire Bolt -t GO1" : "!attack Dagger -t GO1");
      row["record_id"] = "syn" + std::to_string(i);
      row["utterance_history"] = {"DM: Round " + std::to_string(i) + " begins."};
      out << row.dump() << '\n';
    }
  };
  const std::set<int> all = {1, 2, 3, 4, 5};
  for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{2}, std::size_t{13}}) {
    const auto path = dir / ("small" + std::to_string(n) + ".jsonl");
    write_rows(n, path);
    const auto loaded = load_records(path);
    c.expect(prompts::expand(loaded.records, all).size() == 5 * loaded.records.size(),
             "5N for N=" + std::to_string(n));
  }

  const auto start = std::chrono::steady_clock::now();
  const auto path = dir / "synthetic.jsonl";
  write_rows(kSyntheticRecords, path);
  const auto loaded = load_records(path);
  const auto instances = prompts::expand(loaded.records, all);
  const double elapsed = seconds_since(start);
  std::set<std::string> ids;
  for (const auto& inst : instances) ids.insert(inst.instance_id);
  c.expect(loaded.records.size() == kSyntheticRecords, "kept " + std::to_string(loaded.records.size()));
  c.expect(instances.size() == kExpectedInstances, "instances " + std::to_string(instances.size()));
  c.expect(ids.size() == instances.size(), "instance ids not unique");
  c.expect(elapsed < kExpansionBudgetS, "runtime " + fmt(elapsed) + " s");
  c.note(std::to_string(loaded.records.size()) + " records -> " + std::to_string(instances.size()) +
         " instances in " + fmt(elapsed, 2) + " s");
  return c.outcome();
}

Outcome metric_oracles() {
  Checker c;
  gen::Rng rng(kOracleSeed);
  double worst = 0.0;
  int rouge_order_violations = 0;
  std::string counterexample;
  for (int i = 0; i < kOraclePairs; ++i) {
    const auto a = random_tokens(rng, kOracleMaxLen);
    const auto b = random_tokens(rng, kOracleMaxLen);
    const double r1 = metrics::rouge_n_tokens(a, b, 1);
    const double r2 = metrics::rouge_n_tokens(a, b, 2);
    const double diffs[] = {
        std::abs(metrics::bleu_tokens(a, b) - oracle::bleu(a, b, true)),
        std::abs(metrics::bleu_tokens(a, b, metrics::BleuSmoothing::None) - oracle::bleu(a, b, false)),
        std::abs(r1 - oracle::rouge_n(a, b, 1)),
        std::abs(r2 - oracle::rouge_n(a, b, 2)),
        std::abs(metrics::rouge_l_tokens(a, b) - oracle::rouge_l(a, b)),
    };
    for (double d : diffs) worst = std::max(worst, d);
    if (r1 < r2) {
      ++rouge_order_violations;
      if (counterexample.empty()) {
        counterexample = join(a) + " vs " + join(b) + " rouge1=" + fmt(r1, 4) + " rouge2=" + fmt(r2, 4);
      }
    }
  }
  c.expect(worst <= kOracleTolerance, "max oracle difference " + std::to_string(worst));
  c.expect(rouge_order_violations == 0, "rouge1 < rouge2 on " + std::to_string(rouge_order_violations) +
                                            " of " + std::to_string(kOraclePairs) + " pairs, e.g. " + counterexample);

  for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{50}}) {
    const std::vector<double> lps(k, -std::log(2.0));
    const auto p = metrics::perplexity(lps);
    c.expect(p && *p == 2.0, "perplexity k=" + std::to_string(k));
  }
  std::ostringstream worst_text;
  worst_text << std::scientific << std::setprecision(1) << worst;
  c.note(std::to_string(kOraclePairs) + " pairs, max diff " + worst_text.str() + ", rouge1<rouge2 on " +
         std::to_string(rouge_order_violations) + " pairs");
  return c.outcome();
}

Outcome grammar_fuzz() {
  Checker c;
  gen::Rng rng(5);
  std::size_t accepted = 0;
  for (int i = 0; i < kFuzzInputs; ++i) {
    const std::string bytes = gen::random_bytes(rng, kFuzzMaxBytes);
    const auto r = parse_command(bytes);
    accepted += r.has_value();
    c.expect(r.has_value() == format_check(bytes), "format_check disagrees with parse");
    if (r) c.expect(!r->verb.empty(), "accepted command with empty verb");
  }
  for (int i = 0; i < kFuzzInputs / 10; ++i) {
    const std::string bytes = gen::command_like_bytes(rng, kFuzzMaxBytes);
    const auto r = parse_command(bytes);
    accepted += r.has_value();
    c.expect(r.has_value() == format_check(bytes), "format_check disagrees with parse");
  }
  int round_trips = 0;
  for (int i = 0; i < kRoundTrips; ++i) {
    const auto cmd = gen::command(rng);
    const std::string text = render(cmd);
    const auto back = parse_command(text);
    const bool ok = back && *back == cmd;
    round_trips += ok;
    c.expect(ok, "round trip failed for " + text);
  }
  c.note(std::to_string(kFuzzInputs) + " random byte strings (+" + std::to_string(kFuzzInputs / 10) +
         " biased), " + std::to_string(accepted) + " accepted; " + std::to_string(round_trips) + "/" +
         std::to_string(kRoundTrips) + " round trips");
  return c.outcome();
}

Outcome checkpoint_resume() {
  Checker c;
  TempDir dir("accept-resume");
  std::vector<json> rows;
  for (int i = 0; i < kResumeRecords; ++i) {
    auto row = minimal_row(i % 3 ? "!attack Dagger -t GO1" : "!cast Fire Bolt -t GO1");
    row["record_id"] = "ck" + std::to_string(i);
    rows.push_back(row);
  }
  std::string raw;
  for (const auto& r : rows) raw += r.dump() + "\n";
  write_file(dir / "raw.jsonl", raw);
  const auto records = dir / "records.jsonl";
  {
    std::ostringstream sink;
    c.expect(app::cmd_ingest({dir / "raw.jsonl", records, {}}, app::AppConfig{}, app::Log(sink, false)) == 0,
             "ingest");
  }

  MockServer server([](const std::string& id, const json&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    const double lp = -static_cast<double>(sha256_hex(id)[0] % 16) / 16.0;
    return MockServer::Reply{200, completion_body("{{!attack Dagger -t GO1}} for " + id, {lp, lp / 2, -0.01})};
  });
  const std::string cli = cli_path().string();
  const auto log = dir / "log.txt";
  auto run_args = [&](const fs::path& results, bool resume) {
    std::vector<std::string> argv = {cli,         "run",      "--records",       records.string(),
                                     "--results", results.string(), "--base-url", server.base_url(),
                                     "--model",   "resume-mock",    "--max-in-flight", std::to_string(kResumeInFlight)};
    if (resume) argv.push_back("--resume");
    return argv;
  };

  const auto interrupted = dir / "interrupted.jsonl";
  const auto checkpoint = dir / "interrupted.jsonl.ckpt";
  int kill_status = 0;
  {
    Child child(run_args(interrupted, false), log);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    while (std::chrono::steady_clock::now() < deadline) {
      std::error_code ec;
      if (fs::exists(checkpoint, ec) && count_lines(checkpoint) >= kKillAfter) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    child.kill_hard();
    kill_status = child.wait();
  }
  c.expect(kill_status == 128 + SIGKILL, "runner was not killed mid-run (status " + std::to_string(kill_status) + ")");
  c.expect(!fs::exists(interrupted), "results file written before the kill");

  std::set<std::string> done;
  for (const auto& r : inference::read_results(checkpoint)) done.insert(r.instance_id);
  const auto first_requests = server.requested();
  c.expect(done.size() < 200, "checkpoint already complete at kill time");
  const int first_peak = server.peak_in_flight();
  // Requests the killed runner left behind still occupy server workers.
  while (server.in_flight() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

  server.reset_counters();
  c.expect(run_process(run_args(interrupted, true), log) == 0, "resume exit");
  const auto resumed_requests = server.requested();
  const int resume_peak = server.peak_in_flight();
  std::set<std::string> resumed(resumed_requests.begin(), resumed_requests.end());
  c.expect(resumed.size() == resumed_requests.size(), "resume requested an id twice");
  for (const auto& id : resumed) c.expect(!done.count(id), "resume re-requested checkpointed " + id);
  std::set<std::string> covered = done;
  covered.insert(resumed.begin(), resumed.end());
  c.expect(covered.size() == 200, "done + resumed cover " + std::to_string(covered.size()) + " ids");

  server.reset_counters();
  const auto straight = dir / "straight.jsonl";
  c.expect(run_process(run_args(straight, false), log) == 0, "uninterrupted exit");
  const int straight_peak = server.peak_in_flight();
  const auto a = inference::read_results(interrupted);
  const auto b = inference::read_results(straight);
  c.expect(a.size() == 200 && b.size() == 200,
           "result counts " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  bool identical = a.size() == b.size();
  for (std::size_t i = 0; identical && i < a.size(); ++i) identical = a[i].same_output(b[i]);
  c.expect(identical, "resumed results differ from the uninterrupted run");
  const int peak = std::max({first_peak, resume_peak, straight_peak});
  c.expect(peak <= kResumeInFlight, "peak in flight " + std::to_string(peak));

  c.note("killed after " + std::to_string(done.size()) + " checkpointed (" + std::to_string(first_requests.size()) +
         " sent), resume sent " + std::to_string(resumed.size()) + ", peak in flight " + std::to_string(peak));
  return c.outcome();
}

// True if some `!verb` token is followed by a concrete argument rather than
// a `<placeholder>`.
bool has_example_command(const std::string& text) {
  for (std::size_t pos = text.find('!'); pos != std::string::npos; pos = text.find('!', pos + 1)) {
    if (pos > 0 && !std::isspace(static_cast<unsigned char>(text[pos - 1])) && text[pos - 1] != '\'' &&
        text[pos - 1] != '{') {
      continue;
    }
    std::size_t end = pos + 1;
    while (end < text.size() && std::isalpha(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos + 1 || end >= text.size() || text[end] != ' ') continue;
    if (end + 1 < text.size() && text[end + 1] != '<') return true;
  }
  return false;
}

Outcome template_fidelity() {
  Checker c;
  const auto embedded = prompts::verify_embedded_templates();
  c.expect(embedded.empty(), std::to_string(embedded.size()) + " embedded digest mismatches");
  const auto on_disk = prompts::verify_template_dir(prompts_dir());
  for (const auto& m : on_disk) c.expect(false, "digest mismatch " + m.file_name);
  c.expect(prompts::pinned_digests().size() == 6, "pinned digest count");

  const auto& t2 = prompts::builtin_template(2);
  const auto& t3 = prompts::builtin_template(3);
  const auto& t4 = prompts::builtin_template(4);
  const std::string full3 = t3.preamble + "\n" + t3.body;
  const std::string full4 = t4.preamble + "\n" + t4.body;
  c.expect(full3.find("Reason step by step") == std::string::npos, "prompt 3 asks for step-by-step reasoning");
  c.expect(!has_example_command(full4), "prompt 4 contains an example command");
  c.expect(has_example_command(t2.body) && has_example_command(t3.body), "example detector misses prompts 2/3");
  const std::string marker = "These examples are not relevant";
  c.expect(t2.body.find(marker) != std::string::npos, "prompt 2 lacks the relevance note");
  c.expect(t3.body.find(marker) != std::string::npos, "prompt 3 lacks the relevance note");
  c.note("6 resources verified, checks on prompts 2-4 hold");
  return c.outcome();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"example command regression", regression_suite},
      {"gold-echo end to end", gold_echo_end_to_end},
      {"expansion count", expansion_count},
      {"metric oracle equivalence", metric_oracles},
      {"grammar fuzz and round trip", grammar_fuzz},
      {"checkpoint resume after kill", checkpoint_resume},
      {"template fidelity", template_fidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failed += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << " ("
              << fmt(seconds_since(start), 2) << " s): " << out.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

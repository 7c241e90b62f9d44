#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "avraeval/command.hpp"
#include "avraeval/dataset.hpp"
#include "avraeval/inference.hpp"

namespace test_support {

namespace fs = std::filesystem;

inline fs::path data_dir() { return AVRAE_TEST_DATA_DIR; }
inline fs::path prompts_dir() { return AVRAE_PROMPTS_DIR; }
inline fs::path cli_path() { return AVRAE_CLI_PATH; }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("avraeval-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline nlohmann::json emma_row() {
  std::ifstream in(data_dir() / "emma_thornwall.jsonl");
  std::string line;
  std::getline(in, line);
  return nlohmann::json::parse(line);
}

inline avraeval::FireballRecord emma_record() {
  auto rec = avraeval::filter_record(emma_row(), "emma");
  if (!rec) throw std::runtime_error("emma fixture rejected");
  return *rec;
}

// Small hand-built record for tests that need a specific shape.
inline nlohmann::json minimal_row(const std::string& gold = "!attack Dagger -t GO1") {
  return {
      {"current_actor", {{"name", "Hero"}, {"hp", "<10/10 HP; Healthy>"}, {"attacks", "Dagger, Longbow"},
                         {"spells", "Fire Bolt, Cure Wounds"}}},
      {"combat_state_before",
       {{{"name", "Hero"}, {"hp", "<10/10 HP; Healthy>"}, {"attacks", "Dagger, Longbow"},
         {"spells", "Fire Bolt, Cure Wounds"}},
        {{"name", "GO1"}, {"hp", "<7/7 HP; Healthy>"}, {"race", "Goblin"}, {"attacks", "Scimitar"}}}},
      {"utterance_history", {"DM: A goblin appears."}},
      {"commands_norm", {gold}},
  };
}

using ReplyFn = std::function<avraeval::inference::TransportResponse(const avraeval::inference::ChatRequest&)>;

inline std::string completion_body(const std::string& content, const std::vector<double>& logprobs = {}) {
  nlohmann::json choice = {{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}},
                           {"finish_reason", "stop"}};
  if (!logprobs.empty()) {
    nlohmann::json items = nlohmann::json::array();
    for (double lp : logprobs) items.push_back({{"token", "x"}, {"logprob", lp}});
    choice["logprobs"] = {{"content", items}};
  }
  return nlohmann::json{{"id", "cmpl"}, {"object", "chat.completion"}, {"choices", {choice}}}.dump();
}

// In-process transport: calls a reply function and records what it saw.
class MockTransport : public avraeval::inference::ChatTransport {
 public:
  explicit MockTransport(ReplyFn reply) : reply_(std::move(reply)) {}

  avraeval::inference::TransportResponse post(const avraeval::inference::ChatRequest& req) override {
    const int now = ++in_flight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    {
      std::lock_guard lock(mu_);
      requested_.push_back(req.instance_id);
    }
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    auto resp = reply_(req);
    --in_flight_;
    return resp;
  }

  void set_delay(std::chrono::milliseconds d) { delay_ = d; }
  int peak_in_flight() const { return peak_.load(); }
  std::vector<std::string> requested() const {
    std::lock_guard lock(mu_);
    return requested_;
  }

 private:
  ReplyFn reply_;
  std::chrono::milliseconds delay_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mu_;
  std::vector<std::string> requested_;
};

// Deterministic reply derived from the instance id, so two runs over the
// same instances produce identical results.
inline avraeval::inference::TransportResponse deterministic_reply(const avraeval::inference::ChatRequest& req) {
  std::hash<std::string> h;
  const double lp = -static_cast<double>(h(req.instance_id) % 1000) / 1000.0;
  return {200, completion_body("{{!attack Dagger -t " + req.instance_id + "}}", {lp, lp / 2}), ""};
}

}  // namespace test_support

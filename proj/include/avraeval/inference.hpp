#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avraeval/prompts.hpp"

namespace avraeval::inference {

struct BackendConfig {
  // Chat-completions base, e.g. http://localhost:8000/v1; requests go to
  // <base_url>/chat/completions.
  std::string base_url;
  std::string model_name;
  // Name of the environment variable holding the bearer token. The token
  // itself never appears in config files or flags.
  std::string api_key_env = "AVRAEVAL_API_KEY";
  int max_tokens = 2048;
  double temperature = 0.0;
  bool request_logprobs = true;
  int max_in_flight = 4;
  int max_retries = 3;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
  int timeout_s = 300;
  bool split_context_role = false;

  // Empty when usable; otherwise one message per problem.
  std::vector<std::string> validate() const;
};

// Reads the documented key set; unknown keys are rejected.
BackendConfig backend_from_json(const nlohmann::json& j, BackendConfig base = {});
// Secrets redacted: only the variable name and whether it is set.
nlohmann::json to_json(const BackendConfig& cfg);

struct GenerationResult {
  std::string instance_id;
  std::string raw_text;
  std::optional<std::vector<double>> token_logprobs;
  std::string finish_reason;
  std::int64_t latency_ms = 0;
  std::string model_name;
  // Set when the request failed permanently or exhausted its retries.
  std::optional<std::string> error;

  bool failed() const { return error.has_value(); }
  // Everything except latency.
  bool same_output(const GenerationResult& other) const;
};

nlohmann::json to_json(const GenerationResult& r);
std::optional<GenerationResult> result_from_json(const nlohmann::json& j);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string instance_id;
  std::vector<ChatMessage> messages;
  nlohmann::json body;  // wire payload
};

// Raw HTTP exchange. status 0 means the request never got a response.
struct TransportResponse {
  int status = 0;
  std::string body;
  std::string error;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  // Must be safe to call from several threads at once.
  virtual TransportResponse post(const ChatRequest& request) = 0;
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

std::optional<ParsedUrl> parse_base_url(const std::string& base_url);

// HTTP client for <base_url>/chat/completions with a bearer token read from
// the configured environment variable.
std::unique_ptr<ChatTransport> make_http_transport(const BackendConfig& cfg);

ChatRequest make_request(const prompts::PromptInstance& instance, const BackendConfig& cfg);

// One request with retries. Never throws for backend failures: permanent
// errors and exhausted retries come back as a failed result with empty text.
GenerationResult generate(const prompts::PromptInstance& instance, const BackendConfig& cfg,
                          ChatTransport& transport);

struct BatchStats {
  std::size_t unique_instances = 0;
  std::size_t from_checkpoint = 0;
  std::size_t requested = 0;
  std::size_t failed = 0;
};

struct BatchOptions {
  std::stop_token stop;
  BatchStats* stats = nullptr;
  std::function<void(std::size_t done, std::size_t total)> on_progress;
};

// Runs every instance not already in the checkpoint, appending each result
// to the checkpoint as it finishes. Returns one result per distinct
// instance_id in first-occurrence order; instances left undone because of a
// stop request are omitted. Throws IoError if the checkpoint is unusable.
std::vector<GenerationResult> run_batch(const std::vector<prompts::PromptInstance>& instances,
                                        const BackendConfig& cfg, const std::filesystem::path& checkpoint,
                                        ChatTransport& transport, const BatchOptions& options = {});

// Results in a checkpoint or results file; unparseable lines are skipped.
std::vector<GenerationResult> read_results(const std::filesystem::path& path);

}  // namespace avraeval::inference

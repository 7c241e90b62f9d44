#include "avraeval/inference.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "avraeval/errors.hpp"

namespace avraeval::inference {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

bool transient_status(int status) { return status == 0 || status == 429 || status >= 500; }

// Extracts text, finish reason and logprobs from a chat-completions body.
std::optional<GenerationResult> parse_completion(const std::string& body, bool want_logprobs) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const json& choice = choices->front();
  if (!choice.is_object()) return std::nullopt;

  GenerationResult out;
  if (const auto msg = choice.find("message"); msg != choice.end() && msg->is_object()) {
    if (const auto c = msg->find("content"); c != msg->end() && c->is_string()) out.raw_text = c->get<std::string>();
    // Servers that split the reasoning trace out of `content`.
    for (const char* key : {"reasoning_content", "reasoning"}) {
      if (const auto r = msg->find(key); r != msg->end() && r->is_string() && !r->empty()) {
        out.raw_text = "<think>" + r->get<std::string>() + "</think>\n" + out.raw_text;
        break;
      }
    }
  } else if (const auto t = choice.find("text"); t != choice.end() && t->is_string()) {
    out.raw_text = t->get<std::string>();
  }
  if (const auto f = choice.find("finish_reason"); f != choice.end() && f->is_string()) {
    out.finish_reason = f->get<std::string>();
  }

  if (want_logprobs) {
    const auto lp = choice.find("logprobs");
    if (lp != choice.end() && lp->is_object()) {
      std::vector<double> values;
      if (const auto content = lp->find("content"); content != lp->end() && content->is_array()) {
        for (const auto& tok : *content) {
          if (tok.is_object() && tok.contains("logprob") && tok["logprob"].is_number()) {
            values.push_back(tok["logprob"].get<double>());
          }
        }
        out.token_logprobs = std::move(values);
      } else if (const auto tl = lp->find("token_logprobs"); tl != lp->end() && tl->is_array()) {
        for (const auto& v : *tl) {
          if (v.is_number()) values.push_back(v.get<double>());
        }
        out.token_logprobs = std::move(values);
      }
    }
  }
  return out;
}

class CheckpointWriter {
 public:
  explicit CheckpointWriter(const std::filesystem::path& path) {
    bool needs_newline = false;
    if (std::FILE* probe = std::fopen(path.c_str(), "rb")) {
      if (std::fseek(probe, -1, SEEK_END) == 0) needs_newline = std::fgetc(probe) != '\n';
      std::fclose(probe);
    }
    file_ = std::fopen(path.c_str(), "ab");
    if (file_ == nullptr) throw IoError("cannot open checkpoint " + path.string());
    // A crash mid-write leaves a partial last line; keep it from swallowing the next record.
    if (needs_newline) write_raw("\n");
  }
  ~CheckpointWriter() {
    if (file_ != nullptr) std::fclose(file_);
  }
  CheckpointWriter(const CheckpointWriter&) = delete;
  CheckpointWriter& operator=(const CheckpointWriter&) = delete;

  void append(const GenerationResult& r) {
    std::lock_guard lock(mu_);
    write_raw(to_json(r).dump() + "\n");
  }

 private:
  void write_raw(const std::string& s) {
    if (std::fwrite(s.data(), 1, s.size(), file_) != s.size() || std::fflush(file_) != 0) {
      throw IoError("checkpoint write failed");
    }
  }

  std::FILE* file_ = nullptr;
  std::mutex mu_;
};

}  // namespace

std::vector<std::string> BackendConfig::validate() const {
  std::vector<std::string> problems;
  if (base_url.empty()) {
    problems.emplace_back("base_url is not set");
  } else if (!parse_base_url(base_url)) {
    problems.push_back("base_url is not an http(s) URL: " + base_url);
  }
  if (model_name.empty()) problems.emplace_back("model_name is not set");
  if (max_in_flight < 1) problems.emplace_back("max_in_flight must be >= 1");
  if (!(temperature >= 0.0)) problems.emplace_back("temperature must be >= 0");
  if (max_tokens < 1) problems.emplace_back("max_tokens must be >= 1");
  if (max_retries < 0) problems.emplace_back("max_retries must be >= 0");
  if (backoff_initial_ms < 0 || backoff_max_ms < 0) problems.emplace_back("backoff must be >= 0");
  if (timeout_s < 1) problems.emplace_back("timeout_s must be >= 1");
  return problems;
}

BackendConfig backend_from_json(const json& j, BackendConfig cfg) {
  if (!j.is_object()) throw std::invalid_argument("backend config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "base_url") cfg.base_url = value.get<std::string>();
    else if (key == "model_name") cfg.model_name = value.get<std::string>();
    else if (key == "api_key_env") cfg.api_key_env = value.get<std::string>();
    else if (key == "max_tokens") cfg.max_tokens = value.get<int>();
    else if (key == "temperature") cfg.temperature = value.get<double>();
    else if (key == "request_logprobs") cfg.request_logprobs = value.get<bool>();
    else if (key == "max_in_flight") cfg.max_in_flight = value.get<int>();
    else if (key == "max_retries") cfg.max_retries = value.get<int>();
    else if (key == "backoff_initial_ms") cfg.backoff_initial_ms = value.get<int>();
    else if (key == "backoff_max_ms") cfg.backoff_max_ms = value.get<int>();
    else if (key == "timeout_s") cfg.timeout_s = value.get<int>();
    else if (key == "split_context_role") cfg.split_context_role = value.get<bool>();
    else if (key == "api_key") throw std::invalid_argument("api_key may only come from the environment (api_key_env)");
    else throw std::invalid_argument("unknown backend config key: " + key);
  }
  return cfg;
}

json to_json(const BackendConfig& cfg) {
  const bool key_set = !cfg.api_key_env.empty() && std::getenv(cfg.api_key_env.c_str()) != nullptr;
  return {{"base_url", cfg.base_url},
          {"model_name", cfg.model_name},
          {"api_key_env", cfg.api_key_env},
          {"api_key", key_set ? "<redacted>" : "<unset>"},
          {"max_tokens", cfg.max_tokens},
          {"temperature", cfg.temperature},
          {"request_logprobs", cfg.request_logprobs},
          {"max_in_flight", cfg.max_in_flight},
          {"max_retries", cfg.max_retries},
          {"backoff_initial_ms", cfg.backoff_initial_ms},
          {"backoff_max_ms", cfg.backoff_max_ms},
          {"timeout_s", cfg.timeout_s},
          {"split_context_role", cfg.split_context_role}};
}

bool GenerationResult::same_output(const GenerationResult& o) const {
  return instance_id == o.instance_id && raw_text == o.raw_text && token_logprobs == o.token_logprobs &&
         finish_reason == o.finish_reason && model_name == o.model_name && error == o.error;
}

json to_json(const GenerationResult& r) {
  json j = {{"instance_id", r.instance_id},
            {"model_name", r.model_name},
            {"raw_text", r.raw_text},
            {"token_logprobs", r.token_logprobs ? json(*r.token_logprobs) : json(nullptr)},
            {"finish_reason", r.finish_reason},
            {"latency_ms", r.latency_ms}};
  if (r.error) j["error"] = *r.error;
  return j;
}

std::optional<GenerationResult> result_from_json(const json& j) {
  if (!j.is_object()) return std::nullopt;
  try {
    GenerationResult r;
    r.instance_id = j.at("instance_id").get<std::string>();
    if (r.instance_id.empty()) return std::nullopt;
    r.model_name = j.value("model_name", "");
    r.raw_text = j.value("raw_text", "");
    if (const auto lp = j.find("token_logprobs"); lp != j.end() && lp->is_array()) {
      r.token_logprobs = lp->get<std::vector<double>>();
    }
    r.finish_reason = j.value("finish_reason", "");
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    if (const auto e = j.find("error"); e != j.end() && e->is_string()) r.error = e->get<std::string>();
    return r;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::optional<ParsedUrl> parse_base_url(const std::string& base_url) {
  static const std::regex kUrl(R"(^(https?)://([^/\s?#]+)(/[^\s?#]*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, kUrl)) return std::nullopt;
  ParsedUrl out;
  out.scheme_host_port = m[1].str() + "://" + m[2].str();
  out.path_prefix = m[3].matched ? m[3].str() : "";
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

ChatRequest make_request(const prompts::PromptInstance& instance, const BackendConfig& cfg) {
  ChatRequest req;
  req.instance_id = instance.instance_id;
  if (cfg.split_context_role) {
    req.messages = {{"system", instance.instruction_text}, {"user", instance.context_text}};
  } else {
    req.messages = {{"system", instance.system_text}};
  }
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  req.body = {{"model", cfg.model_name},
              {"messages", messages},
              {"max_tokens", cfg.max_tokens},
              {"temperature", cfg.temperature},
              {"logprobs", cfg.request_logprobs}};
  return req;
}

GenerationResult generate(const prompts::PromptInstance& instance, const BackendConfig& cfg,
                          ChatTransport& transport) {
  const ChatRequest request = make_request(instance, cfg);
  const auto started = Clock::now();
  auto finish = [&](GenerationResult r) {
    r.instance_id = instance.instance_id;
    r.model_name = cfg.model_name;
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
    return r;
  };
  auto failure = [&](std::string message) {
    GenerationResult r;
    r.finish_reason = "error";
    r.error = std::move(message);
    return finish(std::move(r));
  };

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = std::min<double>(cfg.backoff_max_ms, cfg.backoff_initial_ms * std::pow(2.0, attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(delay)));
    }
    TransportResponse resp;
    try {
      resp = transport.post(request);
    } catch (const std::exception& e) {
      resp = {0, "", e.what()};
    }

    if (resp.status >= 200 && resp.status < 300) {
      auto parsed = parse_completion(resp.body, cfg.request_logprobs);
      if (!parsed) return failure("malformed response body");
      return finish(std::move(*parsed));
    }
    last_error = resp.status == 0 ? "transport: " + resp.error : "HTTP " + std::to_string(resp.status);
    if (!transient_status(resp.status)) return failure(last_error);
  }
  return failure("retries exhausted: " + last_error);
}

std::vector<GenerationResult> read_results(const std::filesystem::path& path) {
  std::vector<GenerationResult> out;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (auto r = result_from_json(j)) out.push_back(std::move(*r));
  }
  return out;
}

std::vector<GenerationResult> run_batch(const std::vector<prompts::PromptInstance>& instances,
                                        const BackendConfig& cfg, const std::filesystem::path& checkpoint,
                                        ChatTransport& transport, const BatchOptions& options) {
  std::unordered_map<std::string, GenerationResult> done;
  for (auto& r : read_results(checkpoint)) done.try_emplace(r.instance_id, std::move(r));

  std::vector<const prompts::PromptInstance*> unique;
  std::unordered_set<std::string> seen;
  for (const auto& inst : instances) {
    if (seen.insert(inst.instance_id).second) unique.push_back(&inst);
  }

  std::vector<const prompts::PromptInstance*> pending;
  for (const auto* inst : unique) {
    if (!done.count(inst->instance_id)) pending.push_back(inst);
  }

  BatchStats stats;
  stats.unique_instances = unique.size();
  stats.from_checkpoint = unique.size() - pending.size();

  std::vector<std::optional<GenerationResult>> fresh(pending.size());
  if (!pending.empty()) {
    CheckpointWriter writer(checkpoint);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> completed{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&] {
      while (!abort && !options.stop.stop_requested()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        GenerationResult r = generate(*pending[i], cfg, transport);
        try {
          writer.append(r);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          abort = true;
          return;
        }
        fresh[i] = std::move(r);
        const std::size_t n = completed.fetch_add(1) + 1;
        if (options.on_progress) options.on_progress(n, pending.size());
      }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.max_in_flight)), pending.size());
    {
      std::vector<std::jthread> threads;
      threads.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (!fresh[i]) continue;
    ++stats.requested;
    if (fresh[i]->failed()) ++stats.failed;
    done.try_emplace(pending[i]->instance_id, std::move(*fresh[i]));
  }

  std::vector<GenerationResult> out;
  out.reserve(unique.size());
  for (const auto* inst : unique) {
    if (auto it = done.find(inst->instance_id); it != done.end()) out.push_back(it->second);
  }
  if (options.stats) *options.stats = stats;
  return out;
}

}  // namespace avraeval::inference

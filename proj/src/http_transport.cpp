#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "avraeval/inference.hpp"

namespace avraeval::inference {
namespace {

class HttpTransport final : public ChatTransport {
 public:
  HttpTransport(ParsedUrl url, std::string token, int timeout_s)
      : url_(std::move(url)), token_(std::move(token)), timeout_s_(timeout_s) {}

  TransportResponse post(const ChatRequest& request) override {
    // One client per call: httplib clients serialize requests internally.
    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(timeout_s_, 0);
    client.set_write_timeout(timeout_s_, 0);
    httplib::Headers headers = {{"X-Request-Id", request.instance_id}};
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    auto res = client.Post(url_.path_prefix + "/chat/completions", headers, request.body.dump(),
                           "application/json");
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }

 private:
  ParsedUrl url_;
  std::string token_;
  int timeout_s_;
};

}  // namespace

std::unique_ptr<ChatTransport> make_http_transport(const BackendConfig& cfg) {
  auto url = parse_base_url(cfg.base_url);
  if (!url) throw std::invalid_argument("invalid base_url: " + cfg.base_url);
  std::string token;
  if (!cfg.api_key_env.empty()) {
    if (const char* value = std::getenv(cfg.api_key_env.c_str())) token = value;
  }
  return std::make_unique<HttpTransport>(std::move(*url), std::move(token), cfg.timeout_s);
}

}  // namespace avraeval::inference

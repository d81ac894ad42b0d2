#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "kconflict/backend.hpp"

namespace kc {

// Maps BackendRequest/BackendResponse onto a concrete endpoint schema.
class WireAdapter {
 public:
  virtual ~WireAdapter() = default;
  virtual std::string name() const = 0;
  virtual json encode(const BackendRequest& req) const = 0;
  virtual BackendResponse decode(const json& body, const BackendRequest& req) const = 0;
  // Capabilities the schema can never provide are masked off.
  virtual BackendCapabilities mask(BackendCapabilities declared) const { return declared; }
};

struct HttpBackendConfig {
  std::string url;  // scheme://host[:port]
  std::string path = "/v1/query";
  std::string auth_token;
  std::string adapter = "native";  // native | openai-completions
  std::string model;
  double temperature = 0.0;
  int top_logprobs = 20;
  int default_max_tokens = 64;
  BackendCapabilities capabilities = BackendCapabilities::all();
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::seconds timeout{60};
};

// native: the body is the BackendRequest JSON (plus model/temperature) and
// the reply is a BackendResponse JSON.
// openai-completions: legacy completions schema with top-k `logprobs`.
std::unique_ptr<WireAdapter> make_adapter(const HttpBackendConfig& cfg);

// POSTs each request as JSON. Transport failures (connection errors, 429,
// 5xx) are retried with exponential backoff; contract failures are not.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg);
  ~HttpBackend() override;

  std::string name() const override { return "http:" + adapter_->name(); }
  BackendCapabilities capabilities() const override { return caps_; }
  BackendResponse query(const BackendRequest& req) override;

 private:
  BackendResponse attempt(const BackendRequest& req) const;

  HttpBackendConfig cfg_;
  std::unique_ptr<WireAdapter> adapter_;
  BackendCapabilities caps_;
};

}  // namespace kc

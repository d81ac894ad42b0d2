#include "kconflict/http_backend.hpp"

#include <algorithm>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "kconflict/errors.hpp"

namespace kc {

namespace {

class NativeAdapter final : public WireAdapter {
 public:
  explicit NativeAdapter(const HttpBackendConfig& cfg) : model_(cfg.model), temperature_(cfg.temperature) {}

  std::string name() const override { return "native"; }

  json encode(const BackendRequest& req) const override {
    json body = req;
    if (!model_.empty()) body["model"] = model_;
    body["temperature"] = temperature_;
    return body;
  }

  BackendResponse decode(const json& body, const BackendRequest&) const override {
    try {
      return body.get<BackendResponse>();
    } catch (const MalformedResponse&) {
      throw;
    } catch (const std::exception& e) {
      throw MalformedResponse(std::string("native response: ") + e.what());
    }
  }

 private:
  std::string model_;
  double temperature_;
};

class OpenAiCompletionsAdapter final : public WireAdapter {
 public:
  explicit OpenAiCompletionsAdapter(const HttpBackendConfig& cfg)
      : model_(cfg.model),
        temperature_(cfg.temperature),
        top_logprobs_(cfg.top_logprobs),
        max_tokens_(cfg.default_max_tokens) {}

  std::string name() const override { return "openai-completions"; }

  BackendCapabilities mask(BackendCapabilities declared) const override {
    declared.supports_images = false;
    declared.supports_full_next_token_logprobs = false;  // top-k only
    return declared;
  }

  json encode(const BackendRequest& req) const override {
    json body{{"model", model_}, {"prompt", req.prompt}, {"temperature", req.stochastic ? 1.0 : temperature_}};
    if (req.mode == RequestMode::free_text) {
      body["max_tokens"] = req.max_tokens.value_or(max_tokens_);
    } else {
      body["max_tokens"] = 1;
      body["logprobs"] = top_logprobs_;
    }
    if (req.seed) body["seed"] = *req.seed;
    return body;
  }

  BackendResponse decode(const json& body, const BackendRequest& req) const override {
    try {
      const auto& choice = body.at("choices").at(0);
      BackendResponse resp;
      if (body.contains("usage")) resp.usage = body.at("usage");
      if (req.mode == RequestMode::free_text) {
        resp.text = choice.at("text").get<std::string>();
        return resp;
      }
      const auto& top = choice.at("logprobs").at("top_logprobs").at(0);
      std::map<std::string, double> m;
      for (const auto& [tok, v] : top.items()) m[tok] = clamp_logp(v.get<double>());
      if (req.mode == RequestMode::option_logprobs) {
        resp.option_token_logps = std::move(m);
      } else {
        TokenLogprobs v(m.begin(), m.end());
        resp.next_token_logps = std::move(v);
      }
      return resp;
    } catch (const std::exception& e) {
      throw MalformedResponse(std::string("openai-completions response: ") + e.what());
    }
  }

 private:
  std::string model_;
  double temperature_;
  int top_logprobs_;
  int max_tokens_;
};

}  // namespace

std::unique_ptr<WireAdapter> make_adapter(const HttpBackendConfig& cfg) {
  if (cfg.adapter == "native") return std::make_unique<NativeAdapter>(cfg);
  if (cfg.adapter == "openai-completions") return std::make_unique<OpenAiCompletionsAdapter>(cfg);
  throw ConfigError("unknown backend adapter: " + cfg.adapter);
}

HttpBackend::HttpBackend(HttpBackendConfig cfg)
    : cfg_(std::move(cfg)), adapter_(make_adapter(cfg_)), caps_(adapter_->mask(cfg_.capabilities)) {
  if (cfg_.url.empty()) throw ConfigError("http backend requires a url");
  if (cfg_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

HttpBackend::~HttpBackend() = default;

BackendResponse HttpBackend::attempt(const BackendRequest& req) const {
  httplib::Client client(cfg_.url);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  if (!cfg_.auth_token.empty()) client.set_bearer_token_auth(cfg_.auth_token);

  auto res = client.Post(cfg_.path, adapter_->encode(req).dump(), "application/json");
  if (!res) throw TransportError("POST " + cfg_.url + cfg_.path + ": " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("POST " + cfg_.url + cfg_.path + ": HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw MalformedResponse("POST " + cfg_.url + cfg_.path + ": HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }
  return adapter_->decode(body, req);
}

BackendResponse HttpBackend::query(const BackendRequest& req) {
  auto delay = cfg_.backoff;
  for (int i = 1;; ++i) {
    try {
      return attempt(req);
    } catch (const TransportError& e) {
      if (i >= cfg_.max_attempts) throw;
      spdlog::warn("attempt {}/{} failed: {}; retrying in {} ms", i, cfg_.max_attempts, e.what(), delay.count());
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
}

}  // namespace kc

#include "kconflict/config.hpp"

#include <cstdlib>
#include <initializer_list>
#include <set>

#include "kconflict/errors.hpp"
#include "kconflict/replay.hpp"

namespace kc {

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  std::set<std::string_view> ok(allowed);
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown config key " + std::string(where) + "." + key);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::replay: return "replay";
    case BackendKind::synthetic: return "synthetic";
    case BackendKind::http: return "http";
  }
  return "synthetic";
}

BackendKind parse_kind(const std::string& s) {
  if (s == "replay") return BackendKind::replay;
  if (s == "synthetic") return BackendKind::synthetic;
  if (s == "http") return BackendKind::http;
  throw ConfigError("unknown backend kind: " + s);
}

BackendSpec parse_backend(const json& j, std::string_view where) {
  check_keys(j, where, {"kind", "replay_path", "capabilities", "world", "http"});
  BackendSpec spec;
  std::string kind = "synthetic";
  read(j, "kind", kind);
  spec.kind = parse_kind(kind);
  read(j, "replay_path", spec.replay_path);
  if (j.contains("capabilities")) {
    const auto& c = j.at("capabilities");
    check_keys(c, std::string(where) + ".capabilities",
               {"supports_images", "supports_option_logprobs", "supports_full_next_token_logprobs",
                "supports_stochastic_mode"});
    spec.capabilities = c.get<BackendCapabilities>();
  }
  if (j.contains("world")) {
    const auto& w = j.at("world");
    check_keys(w, std::string(where) + ".world",
               {"seed", "recognition_rate", "textual_accuracy", "visual_accuracy", "strategy_accuracy",
                "stochastic_sigma"});
    spec.world = w.get<WorldProfile>();
  }
  if (j.contains("http")) {
    const auto& h = j.at("http");
    check_keys(h, std::string(where) + ".http",
               {"url", "path", "auth_token", "adapter", "model", "temperature", "top_logprobs",
                "default_max_tokens", "max_attempts", "backoff_ms", "timeout_s"});
    auto& cfg = spec.http;
    read(h, "url", cfg.url);
    read(h, "path", cfg.path);
    read(h, "auth_token", cfg.auth_token);
    read(h, "adapter", cfg.adapter);
    read(h, "model", cfg.model);
    read(h, "temperature", cfg.temperature);
    read(h, "top_logprobs", cfg.top_logprobs);
    read(h, "default_max_tokens", cfg.default_max_tokens);
    read(h, "max_attempts", cfg.max_attempts);
    std::int64_t backoff = cfg.backoff.count(), timeout = cfg.timeout.count();
    read(h, "backoff_ms", backoff);
    read(h, "timeout_s", timeout);
    cfg.backoff = std::chrono::milliseconds(backoff);
    cfg.timeout = std::chrono::seconds(timeout);
  }
  spec.http.capabilities = spec.capabilities;
  return spec;
}

json backend_to_json(const BackendSpec& spec, bool include_secrets) {
  json h{{"url", spec.http.url},
         {"path", spec.http.path},
         {"adapter", spec.http.adapter},
         {"model", spec.http.model},
         {"temperature", spec.http.temperature},
         {"top_logprobs", spec.http.top_logprobs},
         {"default_max_tokens", spec.http.default_max_tokens},
         {"max_attempts", spec.http.max_attempts},
         {"backoff_ms", spec.http.backoff.count()},
         {"timeout_s", spec.http.timeout.count()}};
  if (include_secrets) h["auth_token"] = spec.http.auth_token;
  return json{{"kind", kind_name(spec.kind)},
              {"replay_path", spec.replay_path},
              {"capabilities", spec.capabilities},
              {"world", spec.world},
              {"http", std::move(h)}};
}

}  // namespace

AppConfig parse_config(const json& j) {
  check_keys(j, "config",
             {"seed", "parallel", "max_skip_fraction", "backend", "generator", "prompts", "surface_forms",
              "confidence", "contrastive", "dataset_builder", "mitigate"});
  AppConfig cfg;
  read(j, "seed", cfg.seed);
  read(j, "parallel", cfg.parallel);
  read(j, "max_skip_fraction", cfg.max_skip_fraction);
  if (cfg.parallel == 0) throw ConfigError("parallel must be at least 1");
  if (cfg.max_skip_fraction < 0.0 || cfg.max_skip_fraction > 1.0) {
    throw ConfigError("max_skip_fraction must lie in [0, 1]");
  }
  if (j.contains("backend")) cfg.backend = parse_backend(j.at("backend"), "backend");
  if (j.contains("generator")) cfg.generator = parse_backend(j.at("generator"), "generator");
  if (j.contains("prompts")) {
    const auto& p = j.at("prompts");
    check_keys(p, "prompts", {"recognition", "answer_instruction", "rephrase"});
    read(p, "recognition", cfg.templates.recognition);
    read(p, "answer_instruction", cfg.templates.answer_instruction);
    read(p, "rephrase", cfg.rephrase_prompt);
  }
  read(j, "surface_forms", cfg.surface_form_templates);
  try {
    (void)surface_forms_from_templates(cfg.surface_form_templates);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("confidence")) {
    const auto& c = j.at("confidence");
    check_keys(c, "confidence", {"variance_samples", "variance_target"});
    read(c, "variance_samples", cfg.variance_samples);
    std::string target = "own_answer";
    read(c, "variance_target", target);
    if (target == "own_answer") {
      cfg.variance_target = VarianceTarget::own_answer;
    } else if (target == "gold") {
      cfg.variance_target = VarianceTarget::gold;
    } else {
      throw ConfigError("variance_target must be own_answer or gold");
    }
    if (cfg.variance_samples == 0) throw ConfigError("variance_samples must be positive");
  }
  if (j.contains("contrastive")) {
    const auto& c = j.at("contrastive");
    check_keys(c, "contrastive", {"eval_token", "bin_width", "hist_max", "elicit"});
    std::string rule = to_string(cfg.eval_token);
    read(c, "eval_token", rule);
    try {
      cfg.eval_token = parse_eval_token_rule(rule);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    read(c, "bin_width", cfg.bin_width);
    read(c, "hist_max", cfg.hist_max);
    if (!(cfg.bin_width > 0.0) || !(cfg.hist_max > 0.0)) throw ConfigError("histogram bounds must be positive");
    if (c.contains("elicit")) {
      const auto& e = c.at("elicit");
      check_keys(e, "contrastive.elicit",
                 {"max_tokens", "stop_tokens", "plausibility_floor", "divergence_floor", "divergence_patience"});
      read(e, "max_tokens", cfg.elicit.max_tokens);
      read(e, "stop_tokens", cfg.elicit.stop_tokens);
      read(e, "plausibility_floor", cfg.elicit.plausibility_floor);
      read(e, "divergence_floor", cfg.elicit.divergence_floor);
      read(e, "divergence_patience", cfg.elicit.divergence_patience);
    }
  }
  if (j.contains("dataset_builder")) {
    const auto& d = j.at("dataset_builder");
    check_keys(d, "dataset_builder", {"synthesis_attempts"});
    read(d, "synthesis_attempts", cfg.synthesis_attempts);
    if (cfg.synthesis_attempts < 1) throw ConfigError("synthesis_attempts must be at least 1");
  }
  if (j.contains("mitigate")) {
    const auto& m = j.at("mitigate");
    check_keys(m, "mitigate", {"requery_all"});
    read(m, "requery_all", cfg.requery_all);
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j);
}

void apply_env_overrides(AppConfig& cfg) {
  if (const char* token = std::getenv("KC_AUTH_TOKEN"); token && *token) {
    cfg.backend.http.auth_token = token;
    if (cfg.generator) cfg.generator->http.auth_token = token;
  }
}

json config_to_json(const AppConfig& cfg, bool include_secrets) {
  json j{{"seed", cfg.seed},
         {"parallel", cfg.parallel},
         {"max_skip_fraction", cfg.max_skip_fraction},
         {"backend", backend_to_json(cfg.backend, include_secrets)},
         {"prompts",
          {{"recognition", cfg.templates.recognition},
           {"answer_instruction", cfg.templates.answer_instruction},
           {"rephrase", cfg.rephrase_prompt}}},
         {"surface_forms", cfg.surface_form_templates},
         {"confidence",
          {{"variance_samples", cfg.variance_samples},
           {"variance_target", cfg.variance_target == VarianceTarget::gold ? "gold" : "own_answer"}}},
         {"contrastive",
          {{"eval_token", to_string(cfg.eval_token)},
           {"bin_width", cfg.bin_width},
           {"hist_max", cfg.hist_max},
           {"elicit",
            {{"max_tokens", cfg.elicit.max_tokens},
             {"stop_tokens", cfg.elicit.stop_tokens},
             {"plausibility_floor", cfg.elicit.plausibility_floor},
             {"divergence_floor", cfg.elicit.divergence_floor},
             {"divergence_patience", cfg.elicit.divergence_patience}}}}},
         {"dataset_builder", {{"synthesis_attempts", cfg.synthesis_attempts}}},
         {"mitigate", {{"requery_all", cfg.requery_all}}}};
  if (cfg.generator) j["generator"] = backend_to_json(*cfg.generator, include_secrets);
  return j;
}

std::string config_hash(const AppConfig& cfg) { return sha256_hex(config_to_json(cfg, false).dump()); }

void apply_backend_flag(BackendSpec& spec, const std::string& flag) {
  auto colon = flag.find(':');
  std::string kind = flag.substr(0, colon);
  std::string arg = colon == std::string::npos ? std::string() : flag.substr(colon + 1);
  spec.kind = parse_kind(kind);
  switch (spec.kind) {
    case BackendKind::replay:
      if (arg.empty()) throw ConfigError("--backend replay:PATH needs a path");
      spec.replay_path = arg;
      break;
    case BackendKind::synthetic:
      if (!arg.empty()) {
        try {
          spec.world.seed = std::stoull(arg);
        } catch (const std::exception&) {
          throw ConfigError("--backend synthetic:SEED needs an integer seed");
        }
      }
      break;
    case BackendKind::http:
      if (!arg.empty()) spec.http.url = arg;
      break;
  }
}

DetectConfig detect_config(const AppConfig& cfg) {
  DetectConfig d;
  d.answer.templates = cfg.templates;
  d.answer.surface_forms = surface_forms_from_templates(cfg.surface_form_templates);
  d.parallel = cfg.parallel;
  d.max_skip_fraction = cfg.max_skip_fraction;
  return d;
}

MinVarianceConfig min_variance_config(const AppConfig& cfg) {
  MinVarianceConfig m;
  m.n_samples = cfg.variance_samples;
  m.target = cfg.variance_target;
  m.seed = cfg.seed;
  m.rephrase_prompt = cfg.rephrase_prompt;
  m.answer = detect_config(cfg).answer;
  m.parallel = cfg.parallel;
  return m;
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::vector<McqaItem>& dataset) {
  switch (spec.kind) {
    case BackendKind::replay:
      if (spec.replay_path.empty()) throw ConfigError("replay backend needs replay_path");
      try {
        return std::make_unique<ReplayBackend>(spec.replay_path, spec.capabilities);
      } catch (const IoError& e) {
        throw ConfigError(e.what());
      }
    case BackendKind::synthetic:
      return make_world_backend(dataset, spec.world);
    case BackendKind::http: {
      auto http = spec.http;
      http.capabilities = spec.capabilities;
      return std::make_unique<HttpBackend>(std::move(http));
    }
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace kc

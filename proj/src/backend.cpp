#include "kconflict/backend.hpp"

#include <algorithm>
#include <cmath>

#include "kconflict/errors.hpp"

namespace kc {

std::string to_string(RequestMode m) {
  switch (m) {
    case RequestMode::option_logprobs: return "option_logprobs";
    case RequestMode::next_token_logprobs: return "next_token_logprobs";
    case RequestMode::free_text: return "free_text";
  }
  return "free_text";
}

RequestMode parse_request_mode(std::string_view s) {
  if (s == "option_logprobs") return RequestMode::option_logprobs;
  if (s == "next_token_logprobs") return RequestMode::next_token_logprobs;
  if (s == "free_text") return RequestMode::free_text;
  throw std::invalid_argument("unknown request mode: " + std::string(s));
}

SurfaceForms surface_forms_from_templates(const std::vector<std::string>& templates) {
  if (templates.empty()) throw std::invalid_argument("surface form templates must not be empty");
  SurfaceForms forms;
  for (auto k : kAllOptions) {
    for (const auto& t : templates) {
      auto pos = t.find("{}");
      if (pos == std::string::npos) {
        throw std::invalid_argument("surface form template lacks '{}': " + t);
      }
      std::string form = t;
      form.replace(pos, 2, to_string(k));
      forms[k].push_back(std::move(form));
    }
  }
  return forms;
}

SurfaceForms default_surface_forms() { return surface_forms_from_templates({"{}", " {}", "{}."}); }

// ---------------------------------------------------------------------------

void to_json(json& j, const BackendCapabilities& c) {
  j = json{{"supports_images", c.supports_images},
           {"supports_option_logprobs", c.supports_option_logprobs},
           {"supports_full_next_token_logprobs", c.supports_full_next_token_logprobs},
           {"supports_stochastic_mode", c.supports_stochastic_mode}};
}

void from_json(const json& j, BackendCapabilities& c) {
  c.supports_images = j.value("supports_images", false);
  c.supports_option_logprobs = j.value("supports_option_logprobs", false);
  c.supports_full_next_token_logprobs = j.value("supports_full_next_token_logprobs", false);
  c.supports_stochastic_mode = j.value("supports_stochastic_mode", false);
}

void to_json(json& j, const BackendRequest& r) {
  j = json{{"prompt", r.prompt},
           {"mode", to_string(r.mode)},
           {"stochastic", r.stochastic},
           {"trace_id", r.trace_id}};
  if (r.image_ref) j["image_ref"] = *r.image_ref;
  if (r.option_surface_forms) {
    json forms = json::object();
    for (auto k : kAllOptions) forms[to_string(k)] = (*r.option_surface_forms)[k];
    j["option_surface_forms"] = std::move(forms);
  }
  if (r.seed) j["seed"] = *r.seed;
  if (r.max_tokens) j["max_tokens"] = *r.max_tokens;
}

void from_json(const json& j, BackendRequest& r) {
  r = BackendRequest{};
  r.prompt = j.at("prompt").get<std::string>();
  r.mode = parse_request_mode(j.at("mode").get<std::string>());
  r.stochastic = j.value("stochastic", false);
  r.trace_id = j.value("trace_id", std::string());
  if (j.contains("image_ref")) r.image_ref = j.at("image_ref").get<std::string>();
  if (j.contains("option_surface_forms")) {
    SurfaceForms forms;
    const auto& jf = j.at("option_surface_forms");
    for (auto k : kAllOptions) forms[k] = jf.at(to_string(k)).get<std::vector<std::string>>();
    r.option_surface_forms = std::move(forms);
  }
  if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("max_tokens")) r.max_tokens = j.at("max_tokens").get<int>();
}

namespace {

double logp_from_json(const json& v) {
  if (v.is_null()) return kLogProbFloor;  // -inf does not survive JSON
  if (!v.is_number()) throw MalformedResponse("log-probability is not a number: " + v.dump());
  double x = v.get<double>();
  if (std::isnan(x)) throw MalformedResponse("log-probability is NaN");
  return clamp_logp(x);
}

}  // namespace

void to_json(json& j, const BackendResponse& r) {
  j = json::object();
  if (r.option_token_logps) j["option_token_logps"] = *r.option_token_logps;
  if (r.next_token_logps) {
    json arr = json::array();
    for (const auto& [tok, lp] : *r.next_token_logps) arr.push_back(json::array({tok, lp}));
    j["next_token_logps"] = std::move(arr);
  }
  if (r.text) j["text"] = *r.text;
  if (!r.usage.empty()) j["usage"] = r.usage;
}

void from_json(const json& j, BackendResponse& r) {
  r = BackendResponse{};
  if (!j.is_object()) throw MalformedResponse("response is not an object");
  if (j.contains("option_token_logps") && !j.at("option_token_logps").is_null()) {
    std::map<std::string, double> m;
    for (const auto& [tok, v] : j.at("option_token_logps").items()) m[tok] = logp_from_json(v);
    r.option_token_logps = std::move(m);
  }
  if (j.contains("next_token_logps") && !j.at("next_token_logps").is_null()) {
    TokenLogprobs v;
    for (const auto& e : j.at("next_token_logps")) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string()) {
        throw MalformedResponse("next_token_logps entries must be [token, logp]");
      }
      v.emplace_back(e[0].get<std::string>(), logp_from_json(e[1]));
    }
    r.next_token_logps = std::move(v);
  }
  if (j.contains("text") && !j.at("text").is_null()) {
    if (!j.at("text").is_string()) throw MalformedResponse("text is not a string");
    r.text = j.at("text").get<std::string>();
  }
  if (j.contains("usage") && j.at("usage").is_object()) r.usage = j.at("usage");
}

std::string request_hash(const BackendRequest& req) { return sha256_hex(json(req).dump()); }

void check_capabilities(const BackendCapabilities& caps, const BackendRequest& req) {
  if (req.image_ref && !caps.supports_images) {
    throw CapabilityMissing("backend does not accept images");
  }
  if (req.stochastic && !caps.supports_stochastic_mode) {
    throw CapabilityMissing("backend has no stochastic sampling mode");
  }
  switch (req.mode) {
    case RequestMode::option_logprobs:
      if (!caps.supports_option_logprobs) {
        throw CapabilityMissing("backend does not expose option log-probabilities");
      }
      break;
    case RequestMode::next_token_logprobs:
      if (!caps.supports_full_next_token_logprobs) {
        throw CapabilityMissing("backend does not expose untruncated next-token log-probabilities");
      }
      break;
    case RequestMode::free_text: break;
  }
}

void check_response(const BackendRequest& req, const BackendResponse& resp) {
  switch (req.mode) {
    case RequestMode::option_logprobs:
      if (!resp.option_token_logps) throw MalformedResponse("response lacks option_token_logps");
      break;
    case RequestMode::next_token_logprobs:
      if (!resp.next_token_logps) throw MalformedResponse("response lacks next_token_logps");
      break;
    case RequestMode::free_text:
      if (!resp.text) throw MalformedResponse("response lacks text");
      break;
  }
}

// ---------------------------------------------------------------------------

PerOption<double> aggregate_option_logps(const std::map<std::string, double>& token_logps,
                                         const SurfaceForms& forms) {
  PerOption<double> out;
  for (auto k : kAllOptions) {
    double best = kLogProbFloor;
    for (const auto& form : forms[k]) {
      if (auto it = token_logps.find(form); it != token_logps.end()) {
        best = std::max(best, clamp_logp(it->second));
      }
    }
    out[k] = best;
  }
  return out;
}

namespace {

BackendResponse send(Backend& backend, const BackendRequest& req) {
  check_capabilities(backend.capabilities(), req);
  BackendResponse resp = backend.query(req);
  check_response(req, resp);
  return resp;
}

}  // namespace

OptionDistribution mc_logits(Backend& backend, const OptionQuery& q) {
  for (auto k : kAllOptions) {
    if (q.surface_forms[k].empty()) {
      throw std::invalid_argument("surface forms missing for option " + to_string(k));
    }
  }
  BackendRequest req;
  req.prompt = q.prompt;
  req.image_ref = q.image_ref;
  req.mode = RequestMode::option_logprobs;
  req.option_surface_forms = q.surface_forms;
  req.stochastic = q.stochastic;
  req.seed = q.seed;
  req.trace_id = q.trace_id;
  auto resp = send(backend, req);
  return OptionDistribution::from_logps(aggregate_option_logps(*resp.option_token_logps, q.surface_forms),
                                        q.image_ref ? Modality::visual : Modality::textual);
}

TokenLogprobs next_token_logprobs(Backend& backend, const std::string& prefix,
                                  const std::optional<std::string>& image_ref,
                                  const std::string& trace_id) {
  BackendRequest req;
  req.prompt = prefix;
  req.image_ref = image_ref;
  req.mode = RequestMode::next_token_logprobs;
  req.trace_id = trace_id;
  auto resp = send(backend, req);
  auto& dist = *resp.next_token_logps;
  if (dist.empty()) throw MalformedResponse("empty next-token distribution");
  double mass = 0.0;
  for (auto& [tok, lp] : dist) {
    lp = clamp_logp(lp);
    mass += std::exp(lp);
  }
  // Floor clamping may add up to vocab * 1e-12 of mass.
  if (mass > 1.0 + 1e-6) throw MalformedResponse("next-token probabilities sum above 1");
  return std::move(dist);
}

std::string generate(Backend& backend, const GenerateQuery& q) {
  BackendRequest req;
  req.prompt = q.prompt;
  req.image_ref = q.image_ref;
  req.mode = RequestMode::free_text;
  req.stochastic = q.stochastic;
  req.seed = q.seed;
  req.max_tokens = q.max_tokens;
  req.trace_id = q.trace_id;
  return *send(backend, req).text;
}

}  // namespace kc

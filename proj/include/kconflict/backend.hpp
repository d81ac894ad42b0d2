#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kconflict/datamodel.hpp"

namespace kc {

struct BackendCapabilities {
  bool supports_images = false;
  bool supports_option_logprobs = false;
  // Untruncated distribution over the whole vocabulary. Top-k endpoints
  // must leave this false.
  bool supports_full_next_token_logprobs = false;
  bool supports_stochastic_mode = false;

  static BackendCapabilities all() { return {true, true, true, true}; }
  bool operator==(const BackendCapabilities&) const = default;
};

enum class RequestMode : std::uint8_t { option_logprobs, next_token_logprobs, free_text };
std::string to_string(RequestMode m);
RequestMode parse_request_mode(std::string_view s);

using SurfaceForms = PerOption<std::vector<std::string>>;

// {"X", " X", "X."} for every option key.
SurfaceForms default_surface_forms();
// Expands templates such as "{}" or " {}" with the option letter.
SurfaceForms surface_forms_from_templates(const std::vector<std::string>& templates);

struct BackendRequest {
  std::string prompt;
  std::optional<std::string> image_ref;
  RequestMode mode = RequestMode::free_text;
  std::optional<SurfaceForms> option_surface_forms;
  bool stochastic = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_tokens;
  // Caller correlation tag (usually the item id). Part of the request hash.
  std::string trace_id;

  bool operator==(const BackendRequest&) const = default;
};

// Vocabulary-ordered (token, log-probability) pairs; position is the token id.
using TokenLogprobs = std::vector<std::pair<std::string, double>>;

struct BackendResponse {
  // Log-probabilities of candidate surface forms at the first generated position.
  std::optional<std::map<std::string, double>> option_token_logps;
  std::optional<TokenLogprobs> next_token_logps;
  std::optional<std::string> text;
  json usage = json::object();

  bool operator==(const BackendResponse&) const = default;
};

void to_json(json& j, const BackendCapabilities& c);
void from_json(const json& j, BackendCapabilities& c);
void to_json(json& j, const BackendRequest& r);
void from_json(const json& j, BackendRequest& r);
void to_json(json& j, const BackendResponse& r);
void from_json(const json& j, BackendResponse& r);

// SHA-256 of the canonical (sorted-key, compact) JSON encoding.
std::string request_hash(const BackendRequest& req);

// Throws CapabilityMissing if `req` needs anything `caps` lacks.
void check_capabilities(const BackendCapabilities& caps, const BackendRequest& req);

// Throws MalformedResponse unless the field matching `mode` is present.
void check_response(const BackendRequest& req, const BackendResponse& resp);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual BackendCapabilities capabilities() const = 0;
  // Raw request entry point. Must be safe to call concurrently.
  virtual BackendResponse query(const BackendRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Typed operations. Each checks capabilities before calling query().
// ---------------------------------------------------------------------------

struct OptionQuery {
  std::string prompt;
  std::optional<std::string> image_ref;
  SurfaceForms surface_forms = default_surface_forms();
  bool stochastic = false;
  std::optional<std::uint64_t> seed;
  std::string trace_id;
};

// Per key, the maximum log-probability over its surface forms. Forms absent
// from the payload count as the floor.
PerOption<double> aggregate_option_logps(const std::map<std::string, double>& token_logps,
                                         const SurfaceForms& forms);

// Option distribution at the first answer token. The modality is visual iff
// an image is attached.
OptionDistribution mc_logits(Backend& backend, const OptionQuery& q);

TokenLogprobs next_token_logprobs(Backend& backend, const std::string& prefix,
                                  const std::optional<std::string>& image_ref,
                                  const std::string& trace_id = {});

struct GenerateQuery {
  std::string prompt;
  std::optional<std::string> image_ref;
  bool stochastic = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_tokens;
  std::string trace_id;
};

std::string generate(Backend& backend, const GenerateQuery& q);

}  // namespace kc

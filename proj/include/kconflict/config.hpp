#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/confidence.hpp"
#include "kconflict/contrastive.hpp"
#include "kconflict/detector.hpp"
#include "kconflict/http_backend.hpp"
#include "kconflict/synthetic.hpp"

namespace kc {

enum class BackendKind : std::uint8_t { replay, synthetic, http };

struct BackendSpec {
  BackendKind kind = BackendKind::synthetic;
  std::string replay_path;
  BackendCapabilities capabilities = BackendCapabilities::all();
  WorldProfile world;
  HttpBackendConfig http;
};

// Full run configuration. Loaded from one JSON file; only the auth token may
// come from the environment (KC_AUTH_TOKEN).
struct AppConfig {
  BackendSpec backend;
  std::optional<BackendSpec> generator;  // distractors and rephrasings
  std::uint64_t seed = 0;
  std::size_t parallel = 4;
  double max_skip_fraction = 0.10;
  PromptTemplates templates;
  std::vector<std::string> surface_form_templates{"{}", " {}", "{}."};
  // Confidence analysis
  std::size_t variance_samples = 10;
  VarianceTarget variance_target = VarianceTarget::own_answer;
  std::string rephrase_prompt{prompts::kRephrasePrompt};
  // Contrastive metric and elicitation
  EvalTokenRule eval_token = EvalTokenRule::visual_answer;
  double bin_width = 0.2;
  double hist_max = 5.0;
  ElicitConfig elicit;
  // Dataset construction
  int synthesis_attempts = 3;
  // Mitigation
  bool requery_all = false;
};

// Throws ConfigError on unknown keys or bad values.
AppConfig parse_config(const json& j);
AppConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(AppConfig& cfg);

json config_to_json(const AppConfig& cfg, bool include_secrets = false);

// SHA-256 of the canonical config without secrets.
std::string config_hash(const AppConfig& cfg);

// "replay:PATH", "synthetic", "synthetic:SEED", "http:URL".
void apply_backend_flag(BackendSpec& spec, const std::string& flag);

DetectConfig detect_config(const AppConfig& cfg);
MinVarianceConfig min_variance_config(const AppConfig& cfg);

// The world backend needs the dataset it answers about.
std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::vector<McqaItem>& dataset);

}  // namespace kc

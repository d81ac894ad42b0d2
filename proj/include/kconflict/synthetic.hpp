#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"

namespace kc {

// Scripted in-process backend. Hooks return probabilities; the backend turns
// them into the same wire payloads a remote endpoint would produce.
struct SyntheticHooks {
  std::function<PerOption<double>(const BackendRequest&)> option_probs;
  std::function<std::vector<std::pair<std::string, double>>(const BackendRequest&)> next_token_probs;
  std::function<std::string(const BackendRequest&)> text;
};

// Log-normal multiplicative noise applied to option probabilities of
// stochastic requests, seeded by the request seed. Stands in for
// sampling-time noise such as dropout inside a served model.
struct SyntheticNoise {
  double textual_sigma = 0.0;
  double visual_sigma = 0.0;
};

class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(SyntheticHooks hooks, BackendCapabilities caps = BackendCapabilities::all(),
                            SyntheticNoise noise = {}, std::string name = "synthetic");

  std::string name() const override { return name_; }
  BackendCapabilities capabilities() const override { return caps_; }
  BackendResponse query(const BackendRequest& req) override;

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  SyntheticHooks hooks_;
  BackendCapabilities caps_;
  SyntheticNoise noise_;
  std::string name_;
  std::atomic<std::size_t> calls_{0};
};

// Deterministic stand-in for an LVLM over a known dataset. Requests are
// routed by trace_id (item id); per-item behavior is drawn from `seed`.
struct WorldProfile {
  std::uint64_t seed = 0;
  double recognition_rate = 0.85;
  double textual_accuracy = 0.78;
  double visual_accuracy = 0.58;
  // Chance that a mitigation re-query lands on the gold option.
  double strategy_accuracy = 0.65;
  double stochastic_sigma = 0.15;
};

void to_json(json& j, const WorldProfile& p);
void from_json(const json& j, WorldProfile& p);

std::unique_ptr<SyntheticBackend> make_world_backend(std::vector<McqaItem> items, WorldProfile profile);

// Stable 64-bit seed for (base, key); independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key) noexcept;

}  // namespace kc

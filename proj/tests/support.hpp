#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/synthetic.hpp"

namespace kc::test {

inline McqaItem make_item(const std::string& id, OptionKey gold = OptionKey::A) {
  McqaItem item;
  item.id = id;
  item.question = "In which city is this building located?";
  item.entity_name = "Sydney Opera House";
  item.image_ref = "img/" + id + ".jpg";
  item.options[OptionKey::A] = "Sydney";
  item.options[OptionKey::B] = "Melbourne";
  item.options[OptionKey::C] = "Brisbane";
  item.options[OptionKey::D] = "Perth";
  std::swap(item.options[OptionKey::A], item.options[gold]);
  item.gold = gold;
  return item;
}

inline PerOption<double> probs(double a, double b, double c, double d) { return {{a, b, c, d}}; }

inline OptionDistribution dist(double a, double b, double c, double d, Modality m = Modality::textual) {
  return OptionDistribution::from_probs(probs(a, b, c, d), m);
}

// Probability vector with its mass peaked on `top`.
inline PerOption<double> peaked(OptionKey top, double peak = 0.7) {
  PerOption<double> p;
  for (auto k : kAllOptions) p[k] = k == top ? peak : (1.0 - peak) / 3.0;
  return p;
}

inline OptionDistribution random_dist(std::mt19937_64& rng, Modality m = Modality::textual) {
  std::gamma_distribution<double> g(1.0, 1.0);
  PerOption<double> p;
  double sum = 0.0;
  for (auto& v : p) sum += v = g(rng) + 1e-9;
  for (auto& v : p) v /= sum;
  return OptionDistribution::from_probs(p, m);
}

inline bool is_visual(const BackendRequest& r) { return r.image_ref.has_value(); }

inline bool is_recognition(const BackendRequest& r) {
  return r.mode == RequestMode::free_text && r.prompt.find("name of the main subject") != std::string::npos;
}

// Per-item plan for a scripted LVLM: recognition outcome and the option each
// modality prefers.
struct Plan {
  bool recognized = true;
  OptionKey textual = OptionKey::A;
  OptionKey visual = OptionKey::A;
};

// Answers recognition with the entity of make_item() when planned, and puts
// `peak` mass on the planned option of the queried modality.
inline SyntheticBackend planted_backend(std::map<std::string, Plan> plan, double peak = 0.7) {
  auto shared = std::make_shared<const std::map<std::string, Plan>>(std::move(plan));
  SyntheticHooks hooks;
  hooks.option_probs = [shared, peak](const BackendRequest& r) {
    const auto& p = shared->at(r.trace_id);
    return peaked(r.image_ref ? p.visual : p.textual, peak);
  };
  hooks.text = [shared](const BackendRequest& r) {
    return shared->at(r.trace_id).recognized ? std::string("Sydney Opera House") : std::string("a building by the water");
  };
  return SyntheticBackend(std::move(hooks));
}

struct PlantedWorld {
  std::vector<McqaItem> items;
  std::map<std::string, Plan> plan;
};

// Recognized items split into outcome groups (gold is always A), plus
// `unrecognized` extra items answered correctly in both modalities.
inline PlantedWorld planted_world(std::size_t both_correct, std::size_t textual_only, std::size_t visual_only,
                                  std::size_t same_wrong, std::size_t different_wrong,
                                  std::size_t unrecognized = 0) {
  PlantedWorld w;
  std::size_t n = 0;
  auto add = [&](std::size_t count, Plan p) {
    for (std::size_t i = 0; i < count; ++i, ++n) {
      char id[32];
      std::snprintf(id, sizeof id, "p%06zu", n);
      w.items.push_back(make_item(id));
      w.plan[id] = p;
    }
  };
  add(both_correct, {true, OptionKey::A, OptionKey::A});
  add(textual_only, {true, OptionKey::A, OptionKey::B});
  add(visual_only, {true, OptionKey::B, OptionKey::A});
  add(same_wrong, {true, OptionKey::B, OptionKey::B});
  add(different_wrong, {true, OptionKey::B, OptionKey::C});
  add(unrecognized, {false, OptionKey::A, OptionKey::A});
  return w;
}

// Next-token script: per step, probabilities over `vocab` for each modality.
// The step is the number of generated tokens after the free-form cue, so
// generated tokens must start with one space and contain no other.
struct TokenScript {
  std::vector<std::string> vocab;
  std::vector<std::vector<double>> visual;
  std::vector<std::vector<double>> textual;
};

inline std::size_t generated_steps(const std::string& prompt) {
  auto cue = prompt.rfind("\nAnswer:");
  if (cue == std::string::npos) return 0;
  return static_cast<std::size_t>(std::count(prompt.begin() + static_cast<std::ptrdiff_t>(cue), prompt.end(), ' '));
}

inline SyntheticBackend scripted_tokens(TokenScript script) {
  auto shared = std::make_shared<const TokenScript>(std::move(script));
  SyntheticHooks hooks;
  hooks.next_token_probs = [shared](const BackendRequest& r) {
    const auto& steps = r.image_ref ? shared->visual : shared->textual;
    const auto& p = steps.at(std::min(generated_steps(r.prompt), steps.size() - 1));
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < shared->vocab.size(); ++i) out.emplace_back(shared->vocab[i], p.at(i));
    return out;
  };
  return SyntheticBackend(std::move(hooks));
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace kc::test

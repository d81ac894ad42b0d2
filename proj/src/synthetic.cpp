#include "kconflict/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "kconflict/errors.hpp"
#include "kconflict/prompts.hpp"

namespace kc {

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) noexcept {
  // FNV-1a over the key, then a splitmix64 finalizer over (base ^ hash).
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = base ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SyntheticBackend::SyntheticBackend(SyntheticHooks hooks, BackendCapabilities caps, SyntheticNoise noise,
                                   std::string name)
    : hooks_(std::move(hooks)), caps_(caps), noise_(noise), name_(std::move(name)) {}

BackendResponse SyntheticBackend::query(const BackendRequest& req) {
  ++calls_;
  BackendResponse resp;
  switch (req.mode) {
    case RequestMode::option_logprobs: {
      if (!hooks_.option_probs) throw MalformedResponse("synthetic backend has no option hook");
      PerOption<double> p = hooks_.option_probs(req);
      double sigma = req.image_ref ? noise_.visual_sigma : noise_.textual_sigma;
      if (req.stochastic && sigma > 0.0) {
        std::mt19937_64 rng(derive_seed(req.seed.value_or(0), req.prompt));
        std::normal_distribution<double> n(0.0, sigma);
        for (auto& v : p) v *= std::exp(n(rng));
        double total = 0.0;
        for (double v : p) total += v;
        for (auto& v : p) v /= total;
      }
      std::map<std::string, double> payload;
      for (auto k : kAllOptions) {
        std::string form = req.option_surface_forms && !(*req.option_surface_forms)[k].empty()
                               ? (*req.option_surface_forms)[k].front()
                               : to_string(k);
        payload[form] = std::log(std::max(p[k], kProbFloor));
      }
      resp.option_token_logps = std::move(payload);
      break;
    }
    case RequestMode::next_token_logprobs: {
      if (!hooks_.next_token_probs) throw MalformedResponse("synthetic backend has no next-token hook");
      TokenLogprobs out;
      for (auto& [tok, p] : hooks_.next_token_probs(req)) {
        out.emplace_back(tok, std::log(std::max(p, kProbFloor)));
      }
      resp.next_token_logps = std::move(out);
      break;
    }
    case RequestMode::free_text:
      if (!hooks_.text) throw MalformedResponse("synthetic backend has no text hook");
      resp.text = hooks_.text(req);
      break;
  }
  return resp;
}

// ---------------------------------------------------------------------------
// World backend
// ---------------------------------------------------------------------------

void to_json(json& j, const WorldProfile& p) {
  j = json{{"seed", p.seed},
           {"recognition_rate", p.recognition_rate},
           {"textual_accuracy", p.textual_accuracy},
           {"visual_accuracy", p.visual_accuracy},
           {"strategy_accuracy", p.strategy_accuracy},
           {"stochastic_sigma", p.stochastic_sigma}};
}

void from_json(const json& j, WorldProfile& p) {
  WorldProfile d;
  p.seed = j.value("seed", d.seed);
  p.recognition_rate = j.value("recognition_rate", d.recognition_rate);
  p.textual_accuracy = j.value("textual_accuracy", d.textual_accuracy);
  p.visual_accuracy = j.value("visual_accuracy", d.visual_accuracy);
  p.strategy_accuracy = j.value("strategy_accuracy", d.strategy_accuracy);
  p.stochastic_sigma = j.value("stochastic_sigma", d.stochastic_sigma);
}

namespace {

struct ItemTraits {
  bool recognized = false;
  OptionKey textual = OptionKey::A;
  OptionKey visual = OptionKey::A;
  double textual_peak = 0.5;
  double visual_peak = 0.5;
  PerOption<double> textual_spread;
  PerOption<double> visual_spread;
};

OptionKey wrong_key(OptionKey gold, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(1, kNumOptions - 1);
  return option_from_ordinal((ordinal(gold) + pick(rng)) % kNumOptions);
}

PerOption<double> spread(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0, 2.0);
  PerOption<double> w;
  for (auto& v : w) v = u(rng);
  return w;
}

// Peak mass on `top`; the remainder split by `weights` over the other keys.
PerOption<double> peaked(OptionKey top, double peak, const PerOption<double>& weights) {
  double rest = 0.0;
  for (auto k : kAllOptions) {
    if (k != top) rest += weights[k];
  }
  PerOption<double> p;
  for (auto k : kAllOptions) p[k] = k == top ? peak : (1.0 - peak) * weights[k] / rest;
  return p;
}

// Deterministic small perturbation keyed by the prompt text, so reworded
// prompts move the confidences a little.
PerOption<double> perturb(PerOption<double> p, std::uint64_t seed, std::string_view prompt, double sigma) {
  std::mt19937_64 rng(derive_seed(seed, prompt));
  std::normal_distribution<double> n(0.0, sigma);
  double total = 0.0;
  for (auto& v : p) {
    v *= std::exp(n(rng));
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

class World {
 public:
  World(std::vector<McqaItem> items, WorldProfile profile) : profile_(profile) {
    for (auto& item : items) {
      std::mt19937_64 rng(derive_seed(profile.seed, item.id));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      ItemTraits t;
      t.recognized = u(rng) < profile.recognition_rate;
      bool t_ok = u(rng) < profile.textual_accuracy;
      bool v_ok = u(rng) < profile.visual_accuracy;
      OptionKey t_wrong = wrong_key(item.gold, rng);
      OptionKey v_wrong = wrong_key(item.gold, rng);
      t.textual = t_ok ? item.gold : t_wrong;
      t.visual = v_ok ? item.gold : v_wrong;
      t.textual_peak = 0.45 + 0.5 * u(rng);
      t.visual_peak = 0.40 + 0.5 * u(rng);
      t.textual_spread = spread(rng);
      t.visual_spread = spread(rng);
      traits_.emplace(item.id, t);
      items_.emplace(item.id, std::move(item));
    }
  }

  PerOption<double> option_probs(const BackendRequest& req) const {
    const auto& [item, t] = lookup(req);
    bool visual = req.image_ref.has_value();
    if (req.prompt.find(prompts::kMitigationMarker) != std::string::npos) {
      std::mt19937_64 rng(derive_seed(profile_.seed, item.id + "|mitigate|" + req.prompt));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      OptionKey top = u(rng) < profile_.strategy_accuracy ? item.gold : t.visual;
      return perturb(peaked(top, t.visual_peak, t.visual_spread), profile_.seed, req.prompt, 0.05);
    }
    auto p = visual ? peaked(t.visual, t.visual_peak, t.visual_spread)
                    : peaked(t.textual, t.textual_peak, t.textual_spread);
    return perturb(p, profile_.seed, req.prompt, 0.05);
  }

  std::string text(const BackendRequest& req) const {
    const auto& [item, t] = lookup(req);
    if (req.prompt.starts_with(prompts::kRecognitionPrompt)) {
      if (!t.recognized) return "A photo of a place.";
      // Alternate surface forms so both matching rules get exercised.
      return derive_seed(profile_.seed, item.id) % 2 == 0 ? item.entity_name : "the " + normalize_text(item.entity_name);
    }
    if (req.prompt.find("multiple choice version") != std::string::npos) {
      json j = json::object();
      for (auto k : kAllOptions) j[to_string(k)] = item.options[k];
      return j.dump();
    }
    if (req.prompt.starts_with("Rephrase")) {
      static constexpr std::string_view kLeads[] = {"", "Please answer: ", "Quick question: ", "Tell me: ",
                                                    "I wonder, "};
      auto idx = derive_seed(req.seed.value_or(0), item.id) % std::size(kLeads);
      return std::string(kLeads[idx]) + item.question;
    }
    return item.options[req.image_ref ? t.visual : t.textual];
  }

  std::vector<std::pair<std::string, double>> next_token(const BackendRequest& req) const {
    const auto& [item, t] = lookup(req);
    // "</s>" first: once both memories are exhausted the contrast is flat and
    // the lowest-index tie ends the decode.
    std::vector<std::string> vocab{"</s>"};
    for (const auto& opt : item.options) {
      for (auto& w : words(opt)) {
        std::string tok = " " + w;
        if (std::find(vocab.begin(), vocab.end(), tok) == vocab.end()) vocab.push_back(tok);
      }
    }

    auto cue = req.prompt.rfind(prompts::kFreeFormCue);
    std::size_t step = cue == std::string::npos
                           ? 0
                           : words(std::string_view(req.prompt).substr(cue + prompts::kFreeFormCue.size())).size();
    auto memory = words(item.options[req.image_ref ? t.visual : t.textual]);
    std::string target = step < memory.size() ? " " + memory[step] : "</s>";

    const double peak = 0.6;
    double rest = (1.0 - peak) / static_cast<double>(vocab.size() - 1);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& tok : vocab) out.emplace_back(tok, tok == target ? peak : rest);
    return out;
  }

 private:
  std::pair<const McqaItem&, const ItemTraits&> lookup(const BackendRequest& req) const {
    auto it = items_.find(req.trace_id);
    if (it == items_.end()) throw MalformedResponse("world backend: unknown trace id '" + req.trace_id + "'");
    return {it->second, traits_.at(req.trace_id)};
  }

  WorldProfile profile_;
  std::map<std::string, McqaItem> items_;
  std::map<std::string, ItemTraits> traits_;
};

}  // namespace

std::unique_ptr<SyntheticBackend> make_world_backend(std::vector<McqaItem> items, WorldProfile profile) {
  auto world = std::make_shared<const World>(std::move(items), profile);
  SyntheticHooks hooks;
  hooks.option_probs = [world](const BackendRequest& r) { return world->option_probs(r); };
  hooks.next_token_probs = [world](const BackendRequest& r) { return world->next_token(r); };
  hooks.text = [world](const BackendRequest& r) { return world->text(r); };
  SyntheticNoise noise{profile.stochastic_sigma, profile.stochastic_sigma};
  return std::make_unique<SyntheticBackend>(std::move(hooks), BackendCapabilities::all(), noise, "synthetic-world");
}

}  // namespace kc

#include "kconflict/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include <spdlog/spdlog.h>

#include "kconflict/errors.hpp"
#include "kconflict/parallel.hpp"
#include "kconflict/synthetic.hpp"

namespace kc {

ConfidenceVector option_confidence(const OptionDistribution& dist) {
  const auto& lp = dist.logp();
  double hi = *std::max_element(lp.begin(), lp.end());
  ConfidenceVector c;
  double total = 0.0;
  for (auto k : kAllOptions) {
    c[k] = std::exp(lp[k] - hi);
    total += c[k];
  }
  for (auto& v : c) v /= total;
  return c;
}

Selection max_confidence_select(const ConfidenceVector& c_t, OptionKey y_t, const ConfidenceVector& c_v,
                                OptionKey y_v) {
  if (c_t[y_t] >= c_v[y_v]) return {y_t, Modality::textual};
  return {y_v, Modality::visual};
}

Selection max_confidence_shift_select(const ConfidenceVector& c_t, OptionKey y_t, const ConfidenceVector& c_v,
                                      OptionKey y_v) {
  double shift_t = c_t[y_t] - c_t[y_v];
  double shift_v = c_v[y_v] - c_v[y_t];
  if (shift_t >= shift_v) return {y_t, Modality::textual};
  return {y_v, Modality::visual};
}

std::string to_string(Disturbance d) { return d == Disturbance::prompt_rephrase ? "prompt_rephrase" : "stochastic"; }

double population_variance(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  // Welford: constant samples give exactly zero.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    double delta = x - mean;
    mean += delta / static_cast<double>(++n);
    m2 += delta * (x - mean);
  }
  return m2 / static_cast<double>(n);
}

namespace {

std::string first_line_trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_first_of("\r\n", b);
  auto line = s.substr(b, e == std::string::npos ? std::string::npos : e - b);
  auto last = line.find_last_not_of(" \t");
  return line.substr(0, last + 1);
}

}  // namespace

MinVarianceResult min_variance_select(const McqaItem& item, Backend& backend, const MinVarianceConfig& config,
                                      Backend* generator) {
  if (config.n_samples == 0) throw std::invalid_argument("n_samples must be positive");
  Backend& gen = generator ? *generator : backend;
  if (config.disturbance == Disturbance::stochastic && !backend.capabilities().supports_stochastic_mode) {
    throw CapabilityMissing("stochastic disturbance needs a backend with a stochastic mode");
  }

  auto [y_t, d_t] = answer(item, backend, Modality::textual, config.answer);
  auto [y_v, d_v] = answer(item, backend, Modality::visual, config.answer);
  OptionKey target_t = config.target == VarianceTarget::gold ? item.gold : y_t;
  OptionKey target_v = config.target == VarianceTarget::gold ? item.gold : y_v;

  const auto base_seed = derive_seed(config.seed, item.id);
  std::vector<double> s_t(config.n_samples), s_v(config.n_samples);
  parallel_for(config.n_samples, config.parallel, [&](std::size_t i) {
    AnswerOptions opts = config.answer;
    McqaItem disturbed = item;
    const auto sample_seed = base_seed + i;
    if (config.disturbance == Disturbance::prompt_rephrase) {
      GenerateQuery q;
      q.prompt = config.rephrase_prompt + "\nQuestion: " + item.question;
      q.stochastic = gen.capabilities().supports_stochastic_mode;
      q.seed = sample_seed;
      q.trace_id = item.id;
      auto rephrased = first_line_trimmed(generate(gen, q));
      if (!rephrased.empty()) disturbed.question = std::move(rephrased);
    } else {
      opts.stochastic = true;
      opts.seed = sample_seed;
    }
    s_t[i] = option_confidence(answer(disturbed, backend, Modality::textual, opts).second)[target_t];
    s_v[i] = option_confidence(answer(disturbed, backend, Modality::visual, opts).second)[target_v];
  });

  MinVarianceResult r;
  r.textual_answer = y_t;
  r.visual_answer = y_v;
  r.textual = {s_t, population_variance(s_t), config.disturbance};
  r.visual = {s_v, population_variance(s_v), config.disturbance};
  r.selection = r.textual.variance <= r.visual.variance ? Selection{y_t, Modality::textual}
                                                        : Selection{y_v, Modality::visual};
  return r;
}

std::string to_string(ConfidenceStrategy s) {
  switch (s) {
    case ConfidenceStrategy::max: return "max";
    case ConfidenceStrategy::shift: return "shift";
    case ConfidenceStrategy::minvar_prompt: return "minvar-prompt";
    case ConfidenceStrategy::minvar_stochastic: return "minvar-stochastic";
  }
  return "max";
}

ConfidenceStrategy parse_confidence_strategy(std::string_view s) {
  if (s == "max") return ConfidenceStrategy::max;
  if (s == "shift") return ConfidenceStrategy::shift;
  if (s == "minvar-prompt") return ConfidenceStrategy::minvar_prompt;
  if (s == "minvar-stochastic") return ConfidenceStrategy::minvar_stochastic;
  throw std::invalid_argument("unknown confidence strategy: " + std::string(s));
}

void to_json(json& j, const ConfidenceAnalysis& a) {
  json items = json::array();
  for (const auto& it : a.items) {
    items.push_back({{"item_id", it.item_id},
                     {"recognized", it.recognized},
                     {"answer", it.selection.answer},
                     {"modality", to_string(it.selection.modality)},
                     {"correct", it.correct}});
  }
  j = json{{"strategy", to_string(a.strategy)},
           {"n_total", a.n_total},
           {"n_recognized", a.n_recognized},
           {"acc", a.acc},
           {"racc", a.racc},
           {"items", std::move(items)},
           {"skipped", a.skipped}};
}

ConfidenceAnalysis analyze_confidence(const ConflictReport& report, const std::vector<McqaItem>& dataset,
                                      Backend* backend, ConfidenceStrategy strategy, const MinVarianceConfig& config,
                                      double max_skip_fraction, Backend* generator) {
  bool needs_backend = strategy == ConfidenceStrategy::minvar_prompt || strategy == ConfidenceStrategy::minvar_stochastic;
  if (needs_backend && !backend) throw std::invalid_argument("min-variance strategies need a backend");

  std::map<std::string, const McqaItem*> by_id;
  for (const auto& item : dataset) by_id[item.id] = &item;

  MinVarianceConfig mv = config;
  mv.disturbance =
      strategy == ConfidenceStrategy::minvar_stochastic ? Disturbance::stochastic : Disturbance::prompt_rephrase;
  if (needs_backend && mv.disturbance == Disturbance::stochastic && !backend->capabilities().supports_stochastic_mode) {
    throw CapabilityMissing("stochastic disturbance needs a backend with a stochastic mode");
  }

  const auto& records = report.records;
  std::vector<std::optional<Selection>> picks(records.size());
  std::vector<std::string> errors(records.size());
  auto per_item = [&](std::size_t i) {
    const auto& r = records[i];
    auto c_t = option_confidence(r.textual_dist);
    auto c_v = option_confidence(r.visual_dist);
    switch (strategy) {
      case ConfidenceStrategy::max:
        picks[i] = max_confidence_select(c_t, r.textual_answer, c_v, r.visual_answer);
        return;
      case ConfidenceStrategy::shift:
        picks[i] = max_confidence_shift_select(c_t, r.textual_answer, c_v, r.visual_answer);
        return;
      default: break;
    }
    auto it = by_id.find(r.item_id);
    if (it == by_id.end()) {
      errors[i] = "item not in dataset";
      return;
    }
    try {
      MinVarianceConfig local = mv;
      local.parallel = 1;
      picks[i] = min_variance_select(*it->second, *backend, local, generator).selection;
    } catch (const CapabilityMissing&) {
      throw;
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  };
  parallel_for(records.size(), needs_backend ? config.parallel : 1, per_item);

  ConfidenceAnalysis out;
  out.strategy = strategy;
  out.skipped = report.skipped;
  std::size_t ok = 0, rok = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!picks[i]) {
      spdlog::warn("item {} skipped: {}", r.item_id, errors[i]);
      out.skipped.push_back({r.item_id, errors[i]});
      continue;
    }
    ConfidenceItemResult res{r.item_id, r.recognized, *picks[i], picks[i]->answer == r.gold};
    ++out.n_total;
    ok += res.correct;
    if (r.recognized) {
      ++out.n_recognized;
      rok += res.correct;
    }
    out.items.push_back(res);
  }
  enforce_skip_policy(out.skipped.size() - report.skipped.size(), out.n_total, max_skip_fraction);
  out.acc = out.n_total ? static_cast<double>(ok) / static_cast<double>(out.n_total) : 0.0;
  out.racc = out.n_recognized ? static_cast<double>(rok) / static_cast<double>(out.n_recognized) : 0.0;
  return out;
}

}  // namespace kc

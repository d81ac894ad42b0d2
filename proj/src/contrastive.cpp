#include "kconflict/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "kconflict/errors.hpp"
#include "kconflict/prompts.hpp"

namespace kc {

ContrastScore contrast_score(const OptionDistribution& visual, const OptionDistribution& textual,
                             OptionKey eval_token) {
  ContrastScore s;
  for (auto k : kAllOptions) s.per_option[k] = visual.logp(k) - textual.logp(k);
  s.eval_token = eval_token;
  s.metric = std::abs(s.per_option[eval_token]);
  return s;
}

std::string to_string(EvalTokenRule r) {
  switch (r) {
    case EvalTokenRule::visual_answer: return "visual_answer";
    case EvalTokenRule::textual_answer: return "textual_answer";
    case EvalTokenRule::max_abs_difference: return "max_abs_difference";
  }
  return "visual_answer";
}

EvalTokenRule parse_eval_token_rule(std::string_view s) {
  if (s == "visual_answer") return EvalTokenRule::visual_answer;
  if (s == "textual_answer") return EvalTokenRule::textual_answer;
  if (s == "max_abs_difference") return EvalTokenRule::max_abs_difference;
  throw std::invalid_argument("unknown eval token rule: " + std::string(s));
}

OptionKey eval_token_for(const SampleRecord& record, EvalTokenRule rule) {
  switch (rule) {
    case EvalTokenRule::visual_answer: return record.visual_answer;
    case EvalTokenRule::textual_answer: return record.textual_answer;
    case EvalTokenRule::max_abs_difference: {
      PerOption<double> diff;
      for (auto k : kAllOptions) diff[k] = std::abs(record.visual_dist.logp(k) - record.textual_dist.logp(k));
      return argmax(diff);
    }
  }
  return record.visual_answer;
}

ContrastScore score_record(const SampleRecord& record, EvalTokenRule rule) {
  return contrast_score(record.visual_dist, record.textual_dist, eval_token_for(record, rule));
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw EmptyInput("median of an empty list");
  std::sort(xs.begin(), xs.end());
  auto n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

SeparationStats separation_stats(std::span<const ScoredSample> samples, double bin_width, double hist_max) {
  if (samples.empty()) throw EmptyInput("separation_stats needs at least one sample");
  if (!(bin_width > 0.0) || !(hist_max > 0.0)) throw std::invalid_argument("bin width and range must be positive");

  auto n_bins = static_cast<std::size_t>(std::llround(hist_max / bin_width));
  SeparationStats out;
  out.histogram.resize(n_bins + 1);
  for (std::size_t b = 0; b < n_bins; ++b) out.histogram[b].lower = static_cast<double>(b) * bin_width;
  out.histogram[n_bins].lower = static_cast<double>(n_bins) * bin_width;
  out.histogram[n_bins].overflow = true;

  std::vector<double> all, consistent, conflicting;
  for (const auto& s : samples) {
    double m = s.score.metric;
    all.push_back(m);
    (s.flipped ? conflicting : consistent).push_back(m);
    // The epsilon keeps values such as 0.6 out of the bin below.
    auto b = static_cast<std::size_t>(std::max(0.0, std::floor(m / bin_width + 1e-9)));
    auto& bin = out.histogram[std::min(b, n_bins)];
    ++bin.count;
    ++(s.flipped ? bin.conflicting : bin.consistent);
  }
  out.median_all = median(all);
  if (!consistent.empty()) out.median_consistent = median(consistent);
  if (!conflicting.empty()) out.median_conflicting = median(conflicting);
  return out;
}

void to_json(json& j, const SeparationStats& s) {
  json bins = json::array();
  for (const auto& b : s.histogram) {
    bins.push_back({{"lower", b.lower},
                    {"count", b.count},
                    {"consistent", b.consistent},
                    {"conflicting", b.conflicting},
                    {"overflow", b.overflow}});
  }
  j = json{{"median_all", s.median_all},
           {"median_consistent", s.median_consistent ? json(*s.median_consistent) : json(nullptr)},
           {"median_conflicting", s.median_conflicting ? json(*s.median_conflicting) : json(nullptr)},
           {"histogram", std::move(bins)}};
}

// ---------------------------------------------------------------------------

StepChoice contrastive_step(const TokenLogprobs& visual, const TokenLogprobs& textual, double plausibility_floor) {
  if (visual.empty()) throw MalformedResponse("empty visual distribution");
  if (visual.size() != textual.size()) throw MalformedResponse("visual and textual vocabularies differ in size");
  const double log_floor = std::log(plausibility_floor);

  std::optional<StepChoice> best;
  for (std::size_t i = 0; i < visual.size(); ++i) {
    if (visual[i].first != textual[i].first) {
      throw MalformedResponse("vocabulary mismatch at token " + std::to_string(i));
    }
    if (visual[i].second < log_floor) continue;
    double score = visual[i].second - textual[i].second;
    if (!best || score > best->score) {
      best = StepChoice{i, score, false};
    } else if (score == best->score) {
      best->tied = true;
    }
  }
  if (best) return *best;

  std::size_t top = 0;
  for (std::size_t i = 1; i < visual.size(); ++i) {
    if (visual[i].second > visual[top].second) top = i;
  }
  return StepChoice{top, visual[top].second - textual[top].second, false};
}

void to_json(json& j, const ElicitationResult& r) {
  j = json{{"text", r.text},
           {"tokens", r.tokens},
           {"scores", r.scores},
           {"degenerate", r.degenerate},
           {"stopped", r.stopped}};
}

std::string elicitation_visual_prompt(const McqaItem& item) {
  return item.question + std::string(prompts::kFreeFormCue);
}

std::string elicitation_textual_prompt(const McqaItem& item) {
  return std::string(prompts::kIndicatorPrefix) + item.entity_name + ".\n" + item.question +
         std::string(prompts::kFreeFormCue);
}

ElicitationResult elicit_visual_memory(const McqaItem& item, Backend& backend, const ElicitConfig& config) {
  if (!backend.capabilities().supports_full_next_token_logprobs) {
    throw CapabilityMissing("elicitation needs untruncated next-token log-probabilities");
  }
  if (!backend.capabilities().supports_images) throw CapabilityMissing("elicitation needs image input");

  std::string visual_prefix = elicitation_visual_prompt(item);
  std::string textual_prefix = elicitation_textual_prompt(item);
  const double log_divergence = std::log(config.divergence_floor);

  ElicitationResult out;
  bool all_tied = true;
  std::size_t low_streak = 0;
  for (std::size_t step = 0; step < config.max_tokens; ++step) {
    auto pv = next_token_logprobs(backend, visual_prefix, item.image_ref, item.id);
    auto pt = next_token_logprobs(backend, textual_prefix, std::nullopt, item.id);
    auto choice = contrastive_step(pv, pt, config.plausibility_floor);
    all_tied = all_tied && choice.tied;

    const auto& [token, logp_v] = pv[choice.index];
    low_streak = logp_v < log_divergence ? low_streak + 1 : 0;
    if (low_streak >= config.divergence_patience) {
      throw DivergenceError("elicitation for " + item.id + " diverged after " + std::to_string(step + 1) +
                            " steps");
    }
    if (std::find(config.stop_tokens.begin(), config.stop_tokens.end(), token) != config.stop_tokens.end()) {
      out.stopped = true;
      out.scores.push_back(choice.score);
      break;
    }
    out.tokens.push_back(token);
    out.scores.push_back(choice.score);
    out.text += token;
    visual_prefix += token;
    textual_prefix += token;
  }
  out.degenerate = !out.scores.empty() && all_tied;
  return out;
}

}  // namespace kc

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"

namespace kc {

// Per-option log p_v - log p_t and its magnitude at the evaluated option.
struct ContrastScore {
  PerOption<double> per_option{};
  double metric = 0.0;
  OptionKey eval_token = OptionKey::A;
};

ContrastScore contrast_score(const OptionDistribution& visual, const OptionDistribution& textual,
                             OptionKey eval_token);

enum class EvalTokenRule : std::uint8_t { visual_answer, textual_answer, max_abs_difference };
std::string to_string(EvalTokenRule r);
EvalTokenRule parse_eval_token_rule(std::string_view s);

// Option the metric is read at, for one record under `rule`.
OptionKey eval_token_for(const SampleRecord& record, EvalTokenRule rule);

ContrastScore score_record(const SampleRecord& record, EvalTokenRule rule);

struct ScoredSample {
  ContrastScore score;
  bool flipped = false;
};

struct HistogramBin {
  double lower = 0.0;
  std::size_t count = 0;
  std::size_t consistent = 0;
  std::size_t conflicting = 0;
  bool overflow = false;  // [hist_max, inf)
};

struct SeparationStats {
  double median_all = 0.0;
  std::optional<double> median_consistent;  // absent when the group is empty
  std::optional<double> median_conflicting;
  std::vector<HistogramBin> histogram;
};

double median(std::vector<double> xs);

// Medians per group plus a histogram over [0, hist_max) in bin_width steps
// and one overflow bin. Throws EmptyInput on an empty list.
SeparationStats separation_stats(std::span<const ScoredSample> samples, double bin_width = 0.2,
                                 double hist_max = 5.0);

void to_json(json& j, const SeparationStats& s);

// ---------------------------------------------------------------------------
// Autoregressive elicitation
// ---------------------------------------------------------------------------

struct StepChoice {
  std::size_t index = 0;
  double score = 0.0;
  // The winning score was not strictly above every other candidate.
  bool tied = false;
};

// argmax over tokens of log p_v - log p_t among tokens with
// p_v >= plausibility_floor; ties go to the lowest token index. Falls back to
// the visual argmax when no token clears the floor. Throws MalformedResponse
// if the two distributions do not share one vocabulary.
StepChoice contrastive_step(const TokenLogprobs& visual, const TokenLogprobs& textual, double plausibility_floor);

struct ElicitConfig {
  std::size_t max_tokens = 64;
  std::vector<std::string> stop_tokens{"</s>"};
  double plausibility_floor = 1e-6;
  // Abort after `divergence_patience` consecutive picks whose visual
  // probability is below `divergence_floor`.
  double divergence_floor = 1e-3;
  std::size_t divergence_patience = 5;
};

struct ElicitationResult {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> scores;
  bool degenerate = false;  // every step was a tie
  bool stopped = false;     // a stop token ended the decode
};

void to_json(json& j, const ElicitationResult& r);

// Visual context: image + free-form question. Textual context: indicator
// sentence + the same question. Both extend with the chosen token.
std::string elicitation_visual_prompt(const McqaItem& item);
std::string elicitation_textual_prompt(const McqaItem& item);

ElicitationResult elicit_visual_memory(const McqaItem& item, Backend& backend, const ElicitConfig& config = {});

}  // namespace kc

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/detector.hpp"
#include "kconflict/prompts.hpp"

namespace kc {

// Softmax over the four option log-probabilities; sums to 1.
using ConfidenceVector = PerOption<double>;

ConfidenceVector option_confidence(const OptionDistribution& dist);

struct Selection {
  OptionKey answer = OptionKey::A;
  Modality modality = Modality::textual;
  bool operator==(const Selection&) const = default;
};

// Answer of the modality whose own answer is more confident. Ties -> textual.
Selection max_confidence_select(const ConfidenceVector& c_t, OptionKey y_t, const ConfidenceVector& c_v,
                                OptionKey y_v);

// shift_t = c_t[y_t] - c_t[y_v], shift_v = c_v[y_v] - c_v[y_t]; the larger
// shift wins. Ties -> textual.
Selection max_confidence_shift_select(const ConfidenceVector& c_t, OptionKey y_t, const ConfidenceVector& c_v,
                                      OptionKey y_v);

enum class Disturbance : std::uint8_t { prompt_rephrase, stochastic };
std::string to_string(Disturbance d);

enum class VarianceTarget : std::uint8_t {
  own_answer,  // sigma(c_t[y_t]), sigma(c_v[y_v])
  gold,        // sigma of the gold option's confidence
};

struct VarianceEstimate {
  std::vector<double> samples;
  double variance = 0.0;
  Disturbance disturbance = Disturbance::prompt_rephrase;
};

double population_variance(std::span<const double> xs);

struct MinVarianceConfig {
  std::size_t n_samples = 10;
  Disturbance disturbance = Disturbance::prompt_rephrase;
  VarianceTarget target = VarianceTarget::own_answer;
  std::uint64_t seed = 0;
  std::string rephrase_prompt{prompts::kRephrasePrompt};
  AnswerOptions answer;
  std::size_t parallel = 1;
};

struct MinVarianceResult {
  Selection selection;
  OptionKey textual_answer = OptionKey::A;
  OptionKey visual_answer = OptionKey::A;
  VarianceEstimate textual;
  VarianceEstimate visual;
};

// Collects n_samples confidences per modality under disturbance and picks
// the modality with the smaller variance (ties -> textual). Prompt
// rephrasings come from `generator`, or from `backend` when null.
MinVarianceResult min_variance_select(const McqaItem& item, Backend& backend, const MinVarianceConfig& config,
                                      Backend* generator = nullptr);

enum class ConfidenceStrategy : std::uint8_t { max, shift, minvar_prompt, minvar_stochastic };
std::string to_string(ConfidenceStrategy s);
ConfidenceStrategy parse_confidence_strategy(std::string_view s);

struct ConfidenceItemResult {
  std::string item_id;
  bool recognized = false;
  Selection selection;
  bool correct = false;
};

struct ConfidenceAnalysis {
  ConfidenceStrategy strategy = ConfidenceStrategy::max;
  std::size_t n_total = 0;
  std::size_t n_recognized = 0;
  double acc = 0.0;
  double racc = 0.0;
  std::vector<ConfidenceItemResult> items;
  std::vector<SkippedItem> skipped;
};

void to_json(json& j, const ConfidenceAnalysis& a);

// Applies a selection strategy to every record of a prior report. The
// min-variance strategies re-query `backend` and need the dataset items.
ConfidenceAnalysis analyze_confidence(const ConflictReport& report, const std::vector<McqaItem>& dataset,
                                      Backend* backend, ConfidenceStrategy strategy,
                                      const MinVarianceConfig& config = {}, double max_skip_fraction = 0.10,
                                      Backend* generator = nullptr);

}  // namespace kc

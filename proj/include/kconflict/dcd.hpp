#pragma once

#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/detector.hpp"

namespace kc {

enum class DcdBranch : std::uint8_t { textual_dominant, visual_dominant };
std::string to_string(DcdBranch b);

struct DcdResult {
  OptionKey answer = OptionKey::A;
  DcdBranch branch = DcdBranch::visual_dominant;
  double c_t = 0.0;
  double c_v = 0.0;
  PerOption<double> contrast_scores{};
};

// c * log p, elementwise. Requires c in (0, 1].
PerOption<double> scaled_logits(double c, const OptionDistribution& dist);

// Largest entry of the option confidence vector.
double answer_confidence(const OptionDistribution& dist);

// Dynamic contrastive decoding over the four option logits. The more
// confident modality keeps its scaled logits and the other modality's scaled
// logits are subtracted; c_t == c_v takes the visual branch. Ties in the
// scores go to the lowest ordinal.
DcdResult dcd_select(const OptionDistribution& textual, const OptionDistribution& visual);

struct DcdItem {
  std::string item_id;
  bool recognized = false;
  OptionKey gold = OptionKey::A;
  DcdResult result;
  bool correct = false;
};

struct DcdReport {
  std::size_t n_total = 0;
  std::size_t n_recognized = 0;
  double acc = 0.0;
  double racc = 0.0;
  // Baselines copied from the source report.
  double acc_textual = 0.0;
  double racc_textual = 0.0;
  double acc_visual = 0.0;
  double racc_visual = 0.0;
  std::vector<DcdItem> items;
  std::vector<SkippedItem> skipped;
  RunMetadata meta;
};

void to_json(json& j, const DcdReport& r);
void from_json(const json& j, DcdReport& r);

// Reuses the distributions recorded in a detection report.
DcdReport dcd_run(const ConflictReport& report);

// Runs detection first, then DCD on the fresh distributions.
DcdReport dcd_run(const std::vector<McqaItem>& dataset, Backend& backend, const DetectConfig& config = {});

}  // namespace kc

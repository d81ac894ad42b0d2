#pragma once

#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/detector.hpp"

namespace kc {

enum class MitigationStrategy : std::uint8_t { reminder, answer_conflict };
std::string to_string(MitigationStrategy s);
MitigationStrategy parse_mitigation_strategy(std::string_view s);

// Reminder system prompt followed by the visual query text.
std::string reminder_prompt(const McqaItem& item, const PromptTemplates& t = {});

// Answer-conflict system prompt with the full option texts of y_t and y_v
// filled in, followed by the visual query text.
std::string answer_conflict_prompt(const McqaItem& item, OptionKey y_t, OptionKey y_v,
                                   const PromptTemplates& t = {});

// Visual re-query under the reminder prompt. Requires a nonempty image_ref.
OptionKey reminder_requery(const McqaItem& item, Backend& backend, const AnswerOptions& opts = {});

// Visual re-query under the answer-conflict prompt. When y_t == y_v there is
// nothing to resolve: returns y_t without querying.
OptionKey answer_conflict_requery(const McqaItem& item, OptionKey y_t, OptionKey y_v, Backend& backend,
                                  const AnswerOptions& opts = {});

struct MitigateConfig {
  AnswerOptions answer;
  // Re-query every item, not only flipped ones.
  bool requery_all = false;
  std::size_t parallel = 1;
  double max_skip_fraction = 0.10;
};

struct StrategyItem {
  std::string item_id;
  bool recognized = false;
  bool flipped = false;
  bool requeried = false;
  OptionKey gold = OptionKey::A;
  OptionKey visual_answer = OptionKey::A;
  OptionKey answer = OptionKey::A;
  bool correct = false;
};

struct StrategyReport {
  MitigationStrategy strategy = MitigationStrategy::reminder;
  std::size_t n_total = 0;
  std::size_t n_recognized = 0;
  double acc = 0.0;
  double racc = 0.0;
  double baseline_acc = 0.0;   // visual answer accuracy of the source report
  double baseline_racc = 0.0;
  double delta_acc = 0.0;
  double delta_racc = 0.0;
  std::vector<StrategyItem> items;
  std::vector<SkippedItem> skipped;
  RunMetadata meta;
};

void to_json(json& j, const StrategyReport& r);
void from_json(const json& j, StrategyReport& r);

constexpr double accuracy_delta(double strategy_acc, double baseline_acc) noexcept {
  return strategy_acc - baseline_acc;
}

// Non-requeried items carry their visual answer over, so the result stays
// comparable with the visual baseline.
StrategyReport evaluate_strategy(const ConflictReport& report, const std::vector<McqaItem>& dataset,
                                 Backend& backend, MitigationStrategy strategy, const MitigateConfig& config = {});

}  // namespace kc

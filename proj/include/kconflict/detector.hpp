#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/prompts.hpp"

namespace kc {

struct PromptTemplates {
  std::string recognition{prompts::kRecognitionPrompt};
  std::string answer_instruction{prompts::kAnswerInstruction};
};

struct RecognitionResult {
  std::string predicted_entity;
  bool matched = false;
  MatchRule match_rule = MatchRule::none;
};

// "A. ...\nB. ...\nC. ...\nD. ..." shared by both modalities.
std::string option_block(const McqaItem& item);

// Indicator sentence, question, options and answer instruction.
std::string build_textual_prompt(const McqaItem& item, const PromptTemplates& t = {});

struct VisualPrompt {
  std::string text;
  std::string image_ref;
};

// Question, options and answer instruction; the entity reaches the model
// only through the image.
VisualPrompt build_visual_prompt(const McqaItem& item, const PromptTemplates& t = {});

// Matches `reply` against the entity: exact (trimmed), then normalized
// (case, whitespace, punctuation, leading article), then aliases.
RecognitionResult match_entity(const std::string& reply, const McqaItem& item);

RecognitionResult recognize(const McqaItem& item, Backend& backend, const PromptTemplates& t = {});

struct AnswerOptions {
  PromptTemplates templates;
  SurfaceForms surface_forms = default_surface_forms();
  bool stochastic = false;
  std::optional<std::uint64_t> seed;
};

// Queries one modality and returns the argmax option (lowest ordinal on ties).
std::pair<OptionKey, OptionDistribution> answer(const McqaItem& item, Backend& backend, Modality modality,
                                                const AnswerOptions& opts = {});

struct DetectConfig {
  AnswerOptions answer;
  std::size_t parallel = 1;
  // The run fails when more than this fraction of items is skipped.
  double max_skip_fraction = 0.10;
};

// Recognition plus paired querying for every item, then the metric suite.
// Per-item backend failures are skipped and excluded from all denominators.
ConflictReport detect(const std::vector<McqaItem>& dataset, Backend& backend, const DetectConfig& config = {});

// Throws RunFailed when skipped / (skipped + completed) exceeds the limit.
void enforce_skip_policy(std::size_t skipped, std::size_t completed, double max_skip_fraction);

}  // namespace kc

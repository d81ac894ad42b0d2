#include "kconflict/detector.hpp"

#include <optional>

#include <spdlog/spdlog.h>

#include "kconflict/errors.hpp"
#include "kconflict/parallel.hpp"

namespace kc {

std::string option_block(const McqaItem& item) {
  std::string out;
  for (auto k : kAllOptions) {
    if (!out.empty()) out += '\n';
    out += to_char(k);
    out += ". ";
    out += item.options[k];
  }
  return out;
}

std::string build_textual_prompt(const McqaItem& item, const PromptTemplates& t) {
  std::string p(prompts::kIndicatorPrefix);
  p += item.entity_name;
  p += ".\n";
  p += item.question;
  p += '\n';
  p += option_block(item);
  p += '\n';
  p += t.answer_instruction;
  return p;
}

VisualPrompt build_visual_prompt(const McqaItem& item, const PromptTemplates& t) {
  std::string p = item.question;
  p += '\n';
  p += option_block(item);
  p += '\n';
  p += t.answer_instruction;
  return {std::move(p), item.image_ref};
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RecognitionResult match_entity(const std::string& reply, const McqaItem& item) {
  RecognitionResult r;
  r.predicted_entity = trim(reply);
  if (r.predicted_entity == trim(item.entity_name)) {
    r.matched = true;
    r.match_rule = MatchRule::exact;
    return r;
  }
  auto norm = normalize_entity(reply);
  if (!norm.empty() && norm == normalize_entity(item.entity_name)) {
    r.matched = true;
    r.match_rule = MatchRule::normalized;
    return r;
  }
  for (const auto& alias : item.aliases) {
    if (!norm.empty() && norm == normalize_entity(alias)) {
      r.matched = true;
      r.match_rule = MatchRule::alias;
      return r;
    }
  }
  return r;
}

RecognitionResult recognize(const McqaItem& item, Backend& backend, const PromptTemplates& t) {
  GenerateQuery q;
  q.prompt = t.recognition;
  q.image_ref = item.image_ref;
  q.trace_id = item.id;
  return match_entity(generate(backend, q), item);
}

std::pair<OptionKey, OptionDistribution> answer(const McqaItem& item, Backend& backend, Modality modality,
                                                const AnswerOptions& opts) {
  OptionQuery q;
  if (modality == Modality::textual) {
    q.prompt = build_textual_prompt(item, opts.templates);
  } else {
    auto vp = build_visual_prompt(item, opts.templates);
    q.prompt = std::move(vp.text);
    q.image_ref = std::move(vp.image_ref);
  }
  q.surface_forms = opts.surface_forms;
  q.stochastic = opts.stochastic;
  q.seed = opts.seed;
  q.trace_id = item.id;
  auto dist = mc_logits(backend, q);
  return {dist.argmax(), dist};
}

void enforce_skip_policy(std::size_t skipped, std::size_t completed, double max_skip_fraction) {
  std::size_t total = skipped + completed;
  if (total == 0) return;
  double frac = static_cast<double>(skipped) / static_cast<double>(total);
  if (frac > max_skip_fraction) {
    throw RunFailed(std::to_string(skipped) + " of " + std::to_string(total) +
                    " items failed, above the allowed fraction " + std::to_string(max_skip_fraction));
  }
}

ConflictReport detect(const std::vector<McqaItem>& dataset, Backend& backend, const DetectConfig& config) {
  if (dataset.empty()) throw EmptyInput("detect needs a nonempty dataset");
  auto caps = backend.capabilities();
  if (!caps.supports_images) throw CapabilityMissing("detect: backend does not accept images");
  if (!caps.supports_option_logprobs) throw CapabilityMissing("detect: backend lacks option log-probabilities");

  std::vector<std::optional<SampleRecord>> slots(dataset.size());
  std::vector<std::string> errors(dataset.size());
  parallel_for(dataset.size(), config.parallel, [&](std::size_t i) {
    const auto& item = dataset[i];
    try {
      auto rec = recognize(item, backend, config.answer.templates);
      auto [yt, pt] = answer(item, backend, Modality::textual, config.answer);
      auto [yv, pv] = answer(item, backend, Modality::visual, config.answer);
      slots[i] = make_record(item.id, item.gold, rec.matched, rec.predicted_entity, rec.match_rule, pt, pv);
    } catch (const CapabilityMissing&) {
      throw;
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<SampleRecord> records;
  std::vector<SkippedItem> skipped;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (slots[i]) {
      records.push_back(std::move(*slots[i]));
    } else {
      spdlog::warn("item {} skipped: {}", dataset[i].id, errors[i]);
      skipped.push_back({dataset[i].id, errors[i]});
    }
  }
  enforce_skip_policy(skipped.size(), records.size(), config.max_skip_fraction);
  auto report = aggregate_report(std::move(records), std::move(skipped));
  report.meta.backend = backend.name();
  return report;
}

}  // namespace kc

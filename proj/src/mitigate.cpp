#include "kconflict/mitigate.hpp"

#include <map>
#include <optional>

#include <spdlog/spdlog.h>

#include "kconflict/errors.hpp"
#include "kconflict/parallel.hpp"
#include "kconflict/prompts.hpp"

namespace kc {

std::string to_string(MitigationStrategy s) {
  return s == MitigationStrategy::reminder ? "reminder" : "answer-conflict";
}

MitigationStrategy parse_mitigation_strategy(std::string_view s) {
  if (s == "reminder") return MitigationStrategy::reminder;
  if (s == "answer-conflict") return MitigationStrategy::answer_conflict;
  throw std::invalid_argument("unknown mitigation strategy: " + std::string(s));
}

std::string reminder_prompt(const McqaItem& item, const PromptTemplates& t) {
  return std::string(prompts::kReminderPrompt) + "\n" + build_visual_prompt(item, t).text;
}

std::string answer_conflict_prompt(const McqaItem& item, OptionKey y_t, OptionKey y_v, const PromptTemplates& t) {
  std::string filled(prompts::kAnswerConflictTemplate);
  filled.replace(filled.find(prompts::kTextualSlot), prompts::kTextualSlot.size(), item.options[y_t]);
  filled.replace(filled.find(prompts::kVisualSlot), prompts::kVisualSlot.size(), item.options[y_v]);
  return std::string(prompts::kAnswerConflictPrefix) + " " + filled + "\n" + build_visual_prompt(item, t).text;
}

namespace {

OptionKey visual_requery(const McqaItem& item, std::string prompt, Backend& backend, const AnswerOptions& opts) {
  if (item.image_ref.empty()) throw std::invalid_argument("re-query of " + item.id + " needs an image");
  OptionQuery q;
  q.prompt = std::move(prompt);
  q.image_ref = item.image_ref;
  q.surface_forms = opts.surface_forms;
  q.stochastic = opts.stochastic;
  q.seed = opts.seed;
  q.trace_id = item.id;
  return mc_logits(backend, q).argmax();
}

}  // namespace

OptionKey reminder_requery(const McqaItem& item, Backend& backend, const AnswerOptions& opts) {
  return visual_requery(item, reminder_prompt(item, opts.templates), backend, opts);
}

OptionKey answer_conflict_requery(const McqaItem& item, OptionKey y_t, OptionKey y_v, Backend& backend,
                                  const AnswerOptions& opts) {
  if (y_t == y_v) return y_t;
  return visual_requery(item, answer_conflict_prompt(item, y_t, y_v, opts.templates), backend, opts);
}

void to_json(json& j, const StrategyReport& r) {
  json items = json::array();
  for (const auto& it : r.items) {
    items.push_back({{"item_id", it.item_id},
                     {"recognized", it.recognized},
                     {"flipped", it.flipped},
                     {"requeried", it.requeried},
                     {"gold", it.gold},
                     {"visual_answer", it.visual_answer},
                     {"answer", it.answer},
                     {"correct", it.correct}});
  }
  j = json{{"strategy", to_string(r.strategy)},
           {"n_total", r.n_total},
           {"n_recognized", r.n_recognized},
           {"acc", r.acc},
           {"racc", r.racc},
           {"baseline_acc", r.baseline_acc},
           {"baseline_racc", r.baseline_racc},
           {"delta_acc", r.delta_acc},
           {"delta_racc", r.delta_racc},
           {"items", std::move(items)},
           {"skipped", r.skipped},
           {"meta", r.meta}};
}

void from_json(const json& j, StrategyReport& r) {
  r.strategy = parse_mitigation_strategy(j.at("strategy").get<std::string>());
  r.n_total = j.at("n_total").get<std::size_t>();
  r.n_recognized = j.at("n_recognized").get<std::size_t>();
  r.acc = j.at("acc").get<double>();
  r.racc = j.at("racc").get<double>();
  r.baseline_acc = j.at("baseline_acc").get<double>();
  r.baseline_racc = j.at("baseline_racc").get<double>();
  r.delta_acc = accuracy_delta(r.acc, r.baseline_acc);
  r.delta_racc = accuracy_delta(r.racc, r.baseline_racc);
  r.items.clear();
  for (const auto& ji : j.value("items", json::array())) {
    StrategyItem it;
    it.item_id = ji.at("item_id").get<std::string>();
    it.recognized = ji.at("recognized").get<bool>();
    it.flipped = ji.at("flipped").get<bool>();
    it.requeried = ji.at("requeried").get<bool>();
    it.gold = ji.at("gold").get<OptionKey>();
    it.visual_answer = ji.at("visual_answer").get<OptionKey>();
    it.answer = ji.at("answer").get<OptionKey>();
    it.correct = ji.at("correct").get<bool>();
    r.items.push_back(std::move(it));
  }
  r.skipped = j.value("skipped", std::vector<SkippedItem>{});
  r.meta = j.value("meta", RunMetadata{});
}

StrategyReport evaluate_strategy(const ConflictReport& report, const std::vector<McqaItem>& dataset,
                                 Backend& backend, MitigationStrategy strategy, const MitigateConfig& config) {
  if (!backend.capabilities().supports_images) throw CapabilityMissing("mitigation re-queries need image input");
  if (!backend.capabilities().supports_option_logprobs) {
    throw CapabilityMissing("mitigation re-queries need option log-probabilities");
  }
  std::map<std::string, const McqaItem*> by_id;
  for (const auto& item : dataset) by_id[item.id] = &item;

  const auto& records = report.records;
  std::vector<std::optional<StrategyItem>> slots(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), config.parallel, [&](std::size_t i) {
    const auto& r = records[i];
    StrategyItem it{r.item_id, r.recognized, r.flipped, false, r.gold, r.visual_answer, r.visual_answer, false};
    bool requery = r.flipped || config.requery_all;
    if (strategy == MitigationStrategy::answer_conflict && !r.flipped) requery = false;
    if (requery) {
      auto found = by_id.find(r.item_id);
      if (found == by_id.end()) {
        errors[i] = "item not in dataset";
        return;
      }
      try {
        it.answer = strategy == MitigationStrategy::reminder
                        ? reminder_requery(*found->second, backend, config.answer)
                        : answer_conflict_requery(*found->second, r.textual_answer, r.visual_answer, backend,
                                                  config.answer);
        it.requeried = true;
      } catch (const CapabilityMissing&) {
        throw;
      } catch (const Error& e) {
        errors[i] = e.what();
        return;
      }
    }
    it.correct = it.answer == it.gold;
    slots[i] = it;
  });

  StrategyReport out;
  out.strategy = strategy;
  out.skipped = report.skipped;
  out.meta = report.meta;
  std::size_t ok = 0, rok = 0, failed = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!slots[i]) {
      spdlog::warn("item {} skipped: {}", records[i].item_id, errors[i]);
      out.skipped.push_back({records[i].item_id, errors[i]});
      ++failed;
      continue;
    }
    const auto& it = *slots[i];
    ++out.n_total;
    ok += it.correct;
    if (it.recognized) {
      ++out.n_recognized;
      rok += it.correct;
    }
    out.items.push_back(it);
  }
  enforce_skip_policy(failed, out.n_total, config.max_skip_fraction);
  out.acc = out.n_total ? static_cast<double>(ok) / static_cast<double>(out.n_total) : 0.0;
  out.racc = out.n_recognized ? static_cast<double>(rok) / static_cast<double>(out.n_recognized) : 0.0;
  out.baseline_acc = report.acc_visual;
  out.baseline_racc = report.racc_visual;
  out.delta_acc = accuracy_delta(out.acc, out.baseline_acc);
  out.delta_racc = accuracy_delta(out.racc, out.baseline_racc);
  return out;
}

}  // namespace kc

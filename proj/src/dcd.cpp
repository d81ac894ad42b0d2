#include "kconflict/dcd.hpp"

#include <algorithm>
#include <stdexcept>

#include "kconflict/confidence.hpp"

namespace kc {

std::string to_string(DcdBranch b) {
  return b == DcdBranch::textual_dominant ? "textual_dominant" : "visual_dominant";
}

PerOption<double> scaled_logits(double c, const OptionDistribution& dist) {
  if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("confidence scale must lie in (0, 1]");
  PerOption<double> out;
  for (auto k : kAllOptions) out[k] = c * dist.logp(k);
  return out;
}

double answer_confidence(const OptionDistribution& dist) {
  auto c = option_confidence(dist);
  return *std::max_element(c.begin(), c.end());
}

DcdResult dcd_select(const OptionDistribution& textual, const OptionDistribution& visual) {
  DcdResult r;
  r.c_t = answer_confidence(textual);
  r.c_v = answer_confidence(visual);
  auto s_t = scaled_logits(r.c_t, textual);
  auto s_v = scaled_logits(r.c_v, visual);
  r.branch = r.c_t > r.c_v ? DcdBranch::textual_dominant : DcdBranch::visual_dominant;
  for (auto k : kAllOptions) {
    r.contrast_scores[k] = r.branch == DcdBranch::textual_dominant ? s_t[k] - s_v[k] : s_v[k] - s_t[k];
  }
  r.answer = argmax(r.contrast_scores);
  return r;
}

void to_json(json& j, const DcdReport& r) {
  json items = json::array();
  for (const auto& it : r.items) {
    json scores = json::object();
    for (auto k : kAllOptions) scores[to_string(k)] = it.result.contrast_scores[k];
    items.push_back({{"item_id", it.item_id},
                     {"recognized", it.recognized},
                     {"gold", it.gold},
                     {"answer", it.result.answer},
                     {"branch", to_string(it.result.branch)},
                     {"c_t", it.result.c_t},
                     {"c_v", it.result.c_v},
                     {"contrast_scores", std::move(scores)},
                     {"correct", it.correct}});
  }
  j = json{{"n_total", r.n_total},
           {"n_recognized", r.n_recognized},
           {"acc", r.acc},
           {"racc", r.racc},
           {"acc_textual", r.acc_textual},
           {"racc_textual", r.racc_textual},
           {"acc_visual", r.acc_visual},
           {"racc_visual", r.racc_visual},
           {"items", std::move(items)},
           {"skipped", r.skipped},
           {"meta", r.meta}};
}

void from_json(const json& j, DcdReport& r) {
  r.n_total = j.at("n_total").get<std::size_t>();
  r.n_recognized = j.at("n_recognized").get<std::size_t>();
  r.acc = j.at("acc").get<double>();
  r.racc = j.at("racc").get<double>();
  r.acc_textual = j.value("acc_textual", 0.0);
  r.racc_textual = j.value("racc_textual", 0.0);
  r.acc_visual = j.value("acc_visual", 0.0);
  r.racc_visual = j.value("racc_visual", 0.0);
  r.items.clear();
  for (const auto& ji : j.value("items", json::array())) {
    DcdItem it;
    it.item_id = ji.at("item_id").get<std::string>();
    it.recognized = ji.at("recognized").get<bool>();
    it.gold = ji.at("gold").get<OptionKey>();
    it.result.answer = ji.at("answer").get<OptionKey>();
    it.result.branch = ji.at("branch").get<std::string>() == "textual_dominant" ? DcdBranch::textual_dominant
                                                                                 : DcdBranch::visual_dominant;
    it.result.c_t = ji.at("c_t").get<double>();
    it.result.c_v = ji.at("c_v").get<double>();
    for (auto k : kAllOptions) it.result.contrast_scores[k] = ji.at("contrast_scores").at(to_string(k)).get<double>();
    it.correct = ji.at("correct").get<bool>();
    r.items.push_back(std::move(it));
  }
  r.skipped = j.value("skipped", std::vector<SkippedItem>{});
  r.meta = j.value("meta", RunMetadata{});
}

DcdReport dcd_run(const ConflictReport& report) {
  DcdReport out;
  out.acc_textual = report.acc_textual;
  out.racc_textual = report.racc_textual;
  out.acc_visual = report.acc_visual;
  out.racc_visual = report.racc_visual;
  out.skipped = report.skipped;
  out.meta = report.meta;

  std::size_t ok = 0, rok = 0;
  for (const auto& rec : report.records) {
    DcdItem it;
    it.item_id = rec.item_id;
    it.recognized = rec.recognized;
    it.gold = rec.gold;
    it.result = dcd_select(rec.textual_dist, rec.visual_dist);
    it.correct = it.result.answer == rec.gold;
    ++out.n_total;
    ok += it.correct;
    if (rec.recognized) {
      ++out.n_recognized;
      rok += it.correct;
    }
    out.items.push_back(std::move(it));
  }
  out.acc = out.n_total ? static_cast<double>(ok) / static_cast<double>(out.n_total) : 0.0;
  out.racc = out.n_recognized ? static_cast<double>(rok) / static_cast<double>(out.n_recognized) : 0.0;
  return out;
}

DcdReport dcd_run(const std::vector<McqaItem>& dataset, Backend& backend, const DetectConfig& config) {
  return dcd_run(detect(dataset, backend, config));
}

}  // namespace kc

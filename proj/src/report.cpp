#include "kconflict/report.hpp"

#include <fmt/format.h>

#include "kconflict/errors.hpp"

namespace kc {

std::string pct(double fraction) { return fmt::format("{:.2f}", fraction * 100.0); }

std::string render_conflict_summary(const ConflictReport& r, const std::string& label) {
  std::string out;
  if (!label.empty()) out += label + "\n";
  out += fmt::format("{:<24}Acc / R.Acc / FR / CR\n", "");
  out += fmt::format("{:<24}{} / {} / {} / {}\n", "Textual Answer", pct(r.acc_textual), pct(r.racc_textual),
                     pct(r.flip_rate), pct(r.conflict_rate_lb));
  out += fmt::format("{:<24}{} / {}\n", "Visual Answer", pct(r.acc_visual), pct(r.racc_visual));
  return out;
}

std::string conflict_summary_csv(const ConflictReport& r, const std::string& label) {
  std::string out = "label,n_total,n_recognized,acc_textual,racc_textual,acc_visual,racc_visual,flip_rate,"
                    "delta_acc,conflict_rate_lb\n";
  out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", label, r.n_total, r.n_recognized, r.acc_textual,
                     r.racc_textual, r.acc_visual, r.racc_visual, r.flip_rate, r.delta_acc, r.conflict_rate_lb);
  return out;
}

std::string records_csv(const ConflictReport& r) {
  std::string out = "item_id,recognized,match_rule,gold,textual_answer,visual_answer,textual_correct,"
                    "visual_correct,flipped\n";
  for (const auto& rec : r.records) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", rec.item_id, int(rec.recognized),
                       to_string(rec.match_rule), to_string(rec.gold), to_string(rec.textual_answer),
                       to_string(rec.visual_answer), int(rec.textual_correct), int(rec.visual_correct),
                       int(rec.flipped));
  }
  return out;
}

namespace {

std::string row(const std::string& name, double acc, double racc) {
  return fmt::format("{:<24}{:>8}{:>8}\n", name, pct(acc), pct(racc));
}

std::string header() { return fmt::format("{:<24}{:>8}{:>8}\n", "", "Acc", "R.Acc"); }

}  // namespace

std::string render_confidence(const ConfidenceAnalysis& a, const ConflictReport& baseline) {
  std::string out = header();
  out += row("Textual Answer", baseline.acc_textual, baseline.racc_textual);
  out += row("Visual Answer", baseline.acc_visual, baseline.racc_visual);
  out += row(to_string(a.strategy), a.acc, a.racc);
  return out;
}

std::string render_dcd(const DcdReport& r) {
  std::string out = header();
  out += row("Textual Answer", r.acc_textual, r.racc_textual);
  out += row("Visual Answer", r.acc_visual, r.racc_visual);
  out += row("DCD", r.acc, r.racc);
  return out;
}

std::string render_strategy(const StrategyReport& r) {
  std::string out = fmt::format("{:<24}{:>8}{:>8}{:>8}{:>8}\n", "", "Acc", "R.Acc", "dAcc", "dR.Acc");
  out += fmt::format("{:<24}{:>8}{:>8}\n", "Visual Answer", pct(r.baseline_acc), pct(r.baseline_racc));
  out += fmt::format("{:<24}{:>8}{:>8}{:>+8.2f}{:>+8.2f}\n", to_string(r.strategy), pct(r.acc), pct(r.racc),
                     r.delta_acc * 100.0, r.delta_racc * 100.0);
  return out;
}

std::string scores_csv(std::span<const SampleRecord> records, std::span<const ScoredSample> scores) {
  if (records.size() != scores.size()) throw std::invalid_argument("records and scores differ in length");
  std::string out = "item_id,flipped,eval_token,metric,diff_A,diff_B,diff_C,diff_D\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = scores[i].score;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", records[i].item_id, int(scores[i].flipped),
                       to_string(s.eval_token), s.metric, s.per_option[OptionKey::A], s.per_option[OptionKey::B],
                       s.per_option[OptionKey::C], s.per_option[OptionKey::D]);
  }
  return out;
}

std::string histogram_csv(const SeparationStats& stats, double bin_width) {
  std::string out = "lower,upper,count,consistent,conflicting\n";
  for (const auto& b : stats.histogram) {
    std::string upper = b.overflow ? "inf" : fmt::format("{}", b.lower + bin_width);
    out += fmt::format("{},{},{},{},{}\n", b.lower, upper, b.count, b.consistent, b.conflicting);
  }
  return out;
}

std::string render_separation(const SeparationStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("n/a"); };
  return fmt::format("median all {:.4f}\nmedian consistent {}\nmedian conflicting {}\n", s.median_all,
                     opt(s.median_consistent), opt(s.median_conflicting));
}

namespace {

struct ExtraRow {
  std::string name;
  double acc = 0.0;
  double racc = 0.0;
};

ExtraRow extra_row(const json& j) {
  if (!j.is_object() || !j.contains("acc") || !j.contains("racc")) {
    throw ParseError("strategy output lacks acc/racc", j.dump());
  }
  std::string name = j.contains("strategy") ? j.at("strategy").get<std::string>() : std::string("dcd");
  return {name, j.at("acc").get<double>(), j.at("racc").get<double>()};
}

}  // namespace

std::string render_combined(const ConflictReport& report, std::span<const json> extras, const std::string& label) {
  std::string out = render_conflict_summary(report, label);
  for (const auto& e : extras) {
    auto row = extra_row(e);
    out += fmt::format("{:<24}{} / {}\n", row.name, pct(row.acc), pct(row.racc));
  }
  out += fmt::format("items {} (recognized {}, skipped {})\n", report.n_total, report.n_recognized,
                     report.skipped.size());
  return out;
}

std::string combined_csv(const ConflictReport& report, std::span<const json> extras, const std::string& label) {
  std::string out = "label,method,acc,racc,flip_rate,conflict_rate_lb\n";
  out += fmt::format("{},textual,{},{},{},{}\n", label, pct(report.acc_textual), pct(report.racc_textual),
                     pct(report.flip_rate), pct(report.conflict_rate_lb));
  out += fmt::format("{},visual,{},{},,\n", label, pct(report.acc_visual), pct(report.racc_visual));
  for (const auto& e : extras) {
    auto row = extra_row(e);
    out += fmt::format("{},{},{},{},,\n", label, row.name, pct(row.acc), pct(row.racc));
  }
  return out;
}

std::string render_report_json(const json& j) {
  if (!j.is_object()) throw ParseError("report is not a JSON object", j.dump());
  if (j.contains("flip_rate")) return render_conflict_summary(j.get<ConflictReport>());
  if (j.contains("strategy") && j.contains("baseline_acc")) return render_strategy(j.get<StrategyReport>());
  if (j.contains("acc_textual") && j.contains("acc")) return render_dcd(j.get<DcdReport>());
  if (j.contains("strategy") && j.contains("acc")) {
    return fmt::format("{:<24}{:>8}{:>8}\n", "", "Acc", "R.Acc") +
           fmt::format("{:<24}{:>8}{:>8}\n", j.at("strategy").get<std::string>(), pct(j.at("acc").get<double>()),
                       pct(j.at("racc").get<double>()));
  }
  if (j.contains("median_all")) {
    SeparationStats s;
    s.median_all = j.at("median_all").get<double>();
    if (j.contains("median_consistent") && !j.at("median_consistent").is_null()) {
      s.median_consistent = j.at("median_consistent").get<double>();
    }
    if (j.contains("median_conflicting") && !j.at("median_conflicting").is_null()) {
      s.median_conflicting = j.at("median_conflicting").get<double>();
    }
    return render_separation(s);
  }
  throw ParseError("unrecognized report shape", j.dump());
}

}  // namespace kc

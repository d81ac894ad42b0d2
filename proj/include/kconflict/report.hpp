#pragma once

#include <span>
#include <string>

#include "kconflict/confidence.hpp"
#include "kconflict/contrastive.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/dcd.hpp"
#include "kconflict/mitigate.hpp"

namespace kc {

// Percentages with two decimals, e.g. 0.7565 -> "75.65".
std::string pct(double fraction);

// Textual row "Acc / R.Acc / FR / CR" and visual row "Acc / R.Acc", in percent.
std::string render_conflict_summary(const ConflictReport& report, const std::string& label = {});
std::string conflict_summary_csv(const ConflictReport& report, const std::string& label = {});

// One row per record: answers, correctness and the flip flag.
std::string records_csv(const ConflictReport& report);

std::string render_confidence(const ConfidenceAnalysis& a, const ConflictReport& baseline);
std::string render_dcd(const DcdReport& r);
std::string render_strategy(const StrategyReport& r);

std::string scores_csv(std::span<const SampleRecord> records, std::span<const ScoredSample> scores);
std::string histogram_csv(const SeparationStats& stats, double bin_width);
std::string render_separation(const SeparationStats& stats);

// Conflict summary followed by one Acc / R.Acc row per strategy output
// (DCD, mitigation or confidence JSON).
std::string render_combined(const ConflictReport& report, std::span<const json> extras,
                            const std::string& label = {});
std::string combined_csv(const ConflictReport& report, std::span<const json> extras,
                         const std::string& label = {});

// Renders any report file the CLI writes, chosen by its shape.
std::string render_report_json(const json& j);

}  // namespace kc

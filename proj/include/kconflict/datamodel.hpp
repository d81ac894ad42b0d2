#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Option labels
// ---------------------------------------------------------------------------

enum class OptionKey : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::size_t kNumOptions = 4;
inline constexpr std::array<OptionKey, kNumOptions> kAllOptions = {
    OptionKey::A, OptionKey::B, OptionKey::C, OptionKey::D};

constexpr std::size_t ordinal(OptionKey k) noexcept { return static_cast<std::size_t>(k); }
constexpr char to_char(OptionKey k) noexcept { return static_cast<char>('A' + ordinal(k)); }
std::string to_string(OptionKey k);
std::optional<OptionKey> parse_option_key(std::string_view s);
OptionKey option_from_ordinal(std::size_t i);

// Fixed-size map OptionKey -> T.
template <class T>
struct PerOption {
  std::array<T, kNumOptions> values{};

  T& operator[](OptionKey k) noexcept { return values[ordinal(k)]; }
  const T& operator[](OptionKey k) const noexcept { return values[ordinal(k)]; }
  auto begin() noexcept { return values.begin(); }
  auto end() noexcept { return values.end(); }
  auto begin() const noexcept { return values.begin(); }
  auto end() const noexcept { return values.end(); }
  bool operator==(const PerOption&) const = default;
};

// Index of the largest value; ties go to the lowest ordinal.
OptionKey argmax(const PerOption<double>& v) noexcept;

enum class Modality : std::uint8_t { textual, visual };
std::string to_string(Modality m);
Modality parse_modality(std::string_view s);

enum class SourceDataset : std::uint8_t { ViQuAE, InfoSeek, custom };
std::string to_string(SourceDataset s);
SourceDataset parse_source_dataset(std::string_view s);

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

// Lowercase, trim, collapse internal whitespace. Used for option distinctness.
std::string normalize_text(std::string_view s);

// normalize_text plus punctuation -> space and leading article removal
// ("the", "a", "an"). Used for entity matching.
std::string normalize_entity(std::string_view s);

// ---------------------------------------------------------------------------
// Items
// ---------------------------------------------------------------------------

struct McqaItem {
  std::string id;
  std::string question;
  std::string entity_name;
  std::string image_ref;
  PerOption<std::string> options;
  OptionKey gold = OptionKey::A;
  SourceDataset source_dataset = SourceDataset::custom;
  // Original free-form gold answer. When present, options[gold] must equal it.
  std::optional<std::string> gold_answer;
  std::vector<std::string> aliases;

  bool operator==(const McqaItem&) const = default;
};

enum class Violation : std::uint8_t {
  empty_id,
  empty_question,
  empty_entity,
  empty_image_ref,
  empty_option,
  duplicate_options,
  gold_not_verbatim,
  entity_in_question,
};
std::string to_string(Violation v);

// Every invariant violation of `item`; empty means valid.
std::vector<Violation> validate_item(const McqaItem& item);

// ---------------------------------------------------------------------------
// Option distributions
// ---------------------------------------------------------------------------

inline constexpr double kProbFloor = 1e-12;
inline const double kLogProbFloor = std::log(kProbFloor);

// Clamp one log-probability into [log(1e-12), 0]. NaN throws.
double clamp_logp(double logp);

// Log-probabilities of the four option labels' first answer token.
// Always clamped; immutable after construction.
class OptionDistribution {
 public:
  OptionDistribution() = default;
  static OptionDistribution from_logps(const PerOption<double>& logp, Modality source);
  static OptionDistribution from_probs(const PerOption<double>& probs, Modality source);

  const PerOption<double>& logp() const noexcept { return logp_; }
  double logp(OptionKey k) const noexcept { return logp_[k]; }
  Modality source() const noexcept { return source_; }
  OptionKey argmax() const noexcept { return kc::argmax(logp_); }

  bool operator==(const OptionDistribution&) const = default;

 private:
  PerOption<double> logp_{{kLogProbFloor, kLogProbFloor, kLogProbFloor, kLogProbFloor}};
  Modality source_ = Modality::textual;
};

// ---------------------------------------------------------------------------
// Per-sample and aggregate results
// ---------------------------------------------------------------------------

enum class MatchRule : std::uint8_t { none, exact, normalized, alias };
std::string to_string(MatchRule r);
MatchRule parse_match_rule(std::string_view s);

struct SampleRecord {
  std::string item_id;
  bool recognized = false;
  std::string predicted_entity;
  MatchRule match_rule = MatchRule::none;
  OptionKey gold = OptionKey::A;
  OptionKey textual_answer = OptionKey::A;
  OptionKey visual_answer = OptionKey::A;
  OptionDistribution textual_dist;
  OptionDistribution visual_dist;
  bool textual_correct = false;
  bool visual_correct = false;
  bool flipped = false;

  bool operator==(const SampleRecord&) const = default;
};

// Fills the derived flags (correctness, flipped) from answers and gold.
SampleRecord make_record(std::string item_id, OptionKey gold, bool recognized,
                         std::string predicted_entity, MatchRule rule,
                         const OptionDistribution& textual, const OptionDistribution& visual);

struct SkippedItem {
  std::string item_id;
  std::string reason;
  bool operator==(const SkippedItem&) const = default;
};

struct RunMetadata {
  std::string backend;
  std::string config_hash;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  bool operator==(const RunMetadata&) const = default;
};

// CR = FR - (R.Acc_textual - R.Acc_visual). Works in fractions or percentages.
constexpr double conflict_rate_lower_bound(double flip_rate, double racc_textual,
                                           double racc_visual) noexcept {
  return flip_rate - (racc_textual - racc_visual);
}

struct ConflictReport {
  std::size_t n_total = 0;
  std::size_t n_recognized = 0;
  double acc_textual = 0.0;
  double acc_visual = 0.0;
  double racc_textual = 0.0;
  double racc_visual = 0.0;
  double flip_rate = 0.0;
  double delta_acc = 0.0;
  double conflict_rate_lb = 0.0;
  std::vector<SampleRecord> records;
  std::vector<SkippedItem> skipped;
  RunMetadata meta;

  bool operator==(const ConflictReport&) const = default;
};

// Builds the aggregate metrics from completed records. Records are sorted
// by item id. Accuracy is over all records; R.Acc and FR over recognized ones.
ConflictReport aggregate_report(std::vector<SampleRecord> records,
                                std::vector<SkippedItem> skipped = {});

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void to_json(json& j, OptionKey k);
void from_json(const json& j, OptionKey& k);
void to_json(json& j, const McqaItem& item);
void from_json(const json& j, McqaItem& item);
void to_json(json& j, const OptionDistribution& d);
void from_json(const json& j, OptionDistribution& d);
void to_json(json& j, const SampleRecord& r);
void from_json(const json& j, SampleRecord& r);
void to_json(json& j, const SkippedItem& s);
void from_json(const json& j, SkippedItem& s);
void to_json(json& j, const RunMetadata& m);
void from_json(const json& j, RunMetadata& m);
// delta_acc and conflict_rate_lb are derived fields: from_json recomputes them.
void to_json(json& j, const ConflictReport& r);
void from_json(const json& j, ConflictReport& r);

std::vector<McqaItem> read_items_jsonl(const std::filesystem::path& path);
void write_items_jsonl(const std::filesystem::path& path, const std::vector<McqaItem>& items);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

// Stable hex digest (SHA-256).
std::string sha256_hex(std::string_view data);

}  // namespace kc

#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <random>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kconflict/backend.hpp"
#include "kconflict/datamodel.hpp"
#include "kconflict/errors.hpp"

namespace kc {

// Free-form QA item before distractor synthesis.
struct RawQaItem {
  std::string id;
  std::string question;
  std::string gold_answer;
  std::string entity_name;
  std::string image_ref;
  SourceDataset source_dataset = SourceDataset::custom;
  std::vector<std::string> aliases;
};

void to_json(json& j, const RawQaItem& r);
void from_json(const json& j, RawQaItem& r);
std::vector<RawQaItem> read_raw_jsonl(const std::filesystem::path& path);

// The distractor instruction followed by the question and gold answer.
std::string distractor_prompt(const RawQaItem& raw);

// Parses a {"A":..,"B":..,"C":..,"D":..} reply. Surrounding chatter is
// tolerated; a missing or non-string key throws ParseError with the raw text.
PerOption<std::string> parse_distractor_reply(const std::string& reply);

struct SynthesisOptions {
  int max_attempts = 3;
  bool stochastic = false;
};

struct SynthesisResult {
  McqaItem item;
  int attempts = 0;
  // Gold matched only after normalization; options[gold] was reset to the
  // verbatim gold answer.
  bool normalized_gold_match = false;
};

// Throws ParseError when the final attempt was unparseable, GenerationFailed
// when every parseable reply failed verification.
SynthesisResult synthesize_options(const RawQaItem& raw, Backend& generator, std::uint64_t seed,
                                   const SynthesisOptions& opts = {});

struct BuildOutcome {
  std::vector<McqaItem> items;
  std::vector<SkippedItem> skipped;
  std::size_t normalized_matches = 0;
};

// Synthesizes every raw item; failures are skipped and logged. Output order
// follows input order.
BuildOutcome build_dataset(const std::vector<RawQaItem>& raws, Backend& generator, std::uint64_t seed,
                           std::size_t parallel, const SynthesisOptions& opts = {});

// Uniform sample without replacement; deterministic for a given seed.
// Throws SizeError if n exceeds the input size.
template <class T>
std::vector<T> downsample(const std::vector<T>& items, std::size_t n, std::uint64_t seed) {
  if (n > items.size()) {
    throw SizeError("cannot sample " + std::to_string(n) + " of " + std::to_string(items.size()) + " items");
  }
  std::vector<T> out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  std::sample(items.begin(), items.end(), std::back_inserter(out), n, rng);
  return out;
}

struct DatasetStats {
  std::size_t count = 0;
  std::map<std::string, std::size_t> per_source;
  PerOption<std::size_t> gold_keys{};

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats stats(const std::vector<McqaItem>& items);
void to_json(json& j, const DatasetStats& s);

// True when at least `min_items` items exist and one key holds more than
// `max_share` of the golds.
bool gold_placement_degenerate(const DatasetStats& s, std::size_t min_items = 200, double max_share = 0.9);

}  // namespace kc

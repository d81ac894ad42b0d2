#include "kconflict/dataset_builder.hpp"

#include <exception>
#include <fstream>
#include <optional>

#include <spdlog/spdlog.h>

#include "kconflict/parallel.hpp"
#include "kconflict/prompts.hpp"
#include "kconflict/synthetic.hpp"

namespace kc {

void to_json(json& j, const RawQaItem& r) {
  j = json{{"id", r.id},
           {"question", r.question},
           {"gold_answer", r.gold_answer},
           {"entity_name", r.entity_name},
           {"image_ref", r.image_ref},
           {"source_dataset", to_string(r.source_dataset)}};
  if (!r.aliases.empty()) j["aliases"] = r.aliases;
}

void from_json(const json& j, RawQaItem& r) {
  r.id = j.at("id").get<std::string>();
  r.question = j.at("question").get<std::string>();
  r.gold_answer = j.at("gold_answer").get<std::string>();
  r.entity_name = j.at("entity_name").get<std::string>();
  r.image_ref = j.at("image_ref").get<std::string>();
  r.source_dataset = parse_source_dataset(j.value("source_dataset", std::string("custom")));
  r.aliases = j.value("aliases", std::vector<std::string>{});
  if (normalize_text(r.question).empty() || normalize_text(r.gold_answer).empty()) {
    throw std::invalid_argument("raw item " + r.id + ": question and gold_answer must be nonempty");
  }
}

std::vector<RawQaItem> read_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RawQaItem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_text(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<RawQaItem>());
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return out;
}

std::string distractor_prompt(const RawQaItem& raw) {
  std::string p(prompts::kDistractorInstruction);
  p += "\nQuestion: ";
  p += raw.question;
  p += "\nGold answer: ";
  p += raw.gold_answer;
  return p;
}

PerOption<std::string> parse_distractor_reply(const std::string& reply) {
  auto open = reply.find('{');
  auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("distractor reply contains no JSON object", reply);
  }
  json j;
  try {
    j = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("distractor reply is not valid JSON: ") + e.what(), reply);
  }
  if (!j.is_object()) throw ParseError("distractor reply is not a JSON object", reply);
  PerOption<std::string> options;
  for (auto k : kAllOptions) {
    auto it = j.find(to_string(k));
    if (it == j.end()) throw ParseError("distractor reply is missing key " + to_string(k), reply);
    if (it->is_string()) {
      options[k] = it->get<std::string>();
    } else if (it->is_number() || it->is_boolean()) {
      options[k] = it->dump();
    } else {
      throw ParseError("distractor option " + to_string(k) + " is not a scalar", reply);
    }
  }
  return options;
}

SynthesisResult synthesize_options(const RawQaItem& raw, Backend& generator, std::uint64_t seed,
                                   const SynthesisOptions& opts) {
  if (opts.max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  const auto prompt = distractor_prompt(raw);
  const auto item_seed = derive_seed(seed, raw.id);
  std::optional<ParseError> last_parse;
  std::string last_failure = "no attempt made";

  for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
    GenerateQuery q;
    q.prompt = prompt;
    q.stochastic = opts.stochastic;
    q.seed = item_seed + static_cast<std::uint64_t>(attempt - 1);
    q.trace_id = raw.id;
    auto reply = generate(generator, q);

    PerOption<std::string> options;
    try {
      options = parse_distractor_reply(reply);
    } catch (const ParseError& e) {
      spdlog::debug("{}: attempt {} unparseable: {}", raw.id, attempt, e.what());
      last_parse = e;
      continue;
    }
    last_parse.reset();

    std::optional<OptionKey> gold;
    bool normalized = false;
    for (auto k : kAllOptions) {
      if (options[k] == raw.gold_answer) {
        gold = k;
        break;
      }
    }
    if (!gold) {
      auto target = normalize_text(raw.gold_answer);
      for (auto k : kAllOptions) {
        if (normalize_text(options[k]) == target) {
          gold = k;
          normalized = true;
          options[k] = raw.gold_answer;
          break;
        }
      }
    }
    if (!gold) {
      last_failure = "gold answer not among generated options";
      continue;
    }

    McqaItem item;
    item.id = raw.id;
    item.question = raw.question;
    item.entity_name = raw.entity_name;
    item.image_ref = raw.image_ref;
    item.options = std::move(options);
    item.gold = *gold;
    item.source_dataset = raw.source_dataset;
    item.gold_answer = raw.gold_answer;
    item.aliases = raw.aliases;

    auto violations = validate_item(item);
    if (!violations.empty()) {
      last_failure = "invalid item: " + to_string(violations.front());
      continue;
    }
    if (normalized) spdlog::warn("{}: gold answer matched only after normalization", raw.id);
    return SynthesisResult{std::move(item), attempt, normalized};
  }

  if (last_parse) throw *last_parse;
  throw GenerationFailed(raw.id + ": " + last_failure + " after " + std::to_string(opts.max_attempts) +
                         " attempts");
}

BuildOutcome build_dataset(const std::vector<RawQaItem>& raws, Backend& generator, std::uint64_t seed,
                           std::size_t parallel, const SynthesisOptions& opts) {
  std::vector<std::optional<SynthesisResult>> results(raws.size());
  std::vector<std::string> errors(raws.size());
  parallel_for(raws.size(), parallel, [&](std::size_t i) {
    try {
      results[i] = synthesize_options(raws[i], generator, seed, opts);
    } catch (const CapabilityMissing&) {
      throw;
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  BuildOutcome out;
  for (std::size_t i = 0; i < raws.size(); ++i) {
    if (results[i]) {
      out.normalized_matches += results[i]->normalized_gold_match;
      out.items.push_back(std::move(results[i]->item));
    } else {
      spdlog::warn("skipping {}: {}", raws[i].id, errors[i]);
      out.skipped.push_back({raws[i].id, errors[i]});
    }
  }
  return out;
}

DatasetStats stats(const std::vector<McqaItem>& items) {
  DatasetStats s;
  s.count = items.size();
  for (const auto& item : items) {
    ++s.per_source[to_string(item.source_dataset)];
    ++s.gold_keys[item.gold];
  }
  return s;
}

void to_json(json& j, const DatasetStats& s) {
  json gold = json::object();
  for (auto k : kAllOptions) gold[to_string(k)] = s.gold_keys[k];
  j = json{{"count", s.count}, {"per_source", s.per_source}, {"gold_keys", gold}};
}

bool gold_placement_degenerate(const DatasetStats& s, std::size_t min_items, double max_share) {
  if (s.count < min_items || s.count == 0) return false;
  for (auto k : kAllOptions) {
    if (static_cast<double>(s.gold_keys[k]) > max_share * static_cast<double>(s.count)) return true;
  }
  return false;
}

}  // namespace kc

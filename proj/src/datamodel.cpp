#include "kconflict/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "kconflict/errors.hpp"

namespace kc {

std::string to_string(OptionKey k) { return std::string(1, to_char(k)); }

std::optional<OptionKey> parse_option_key(std::string_view s) {
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'D') return std::nullopt;
  return static_cast<OptionKey>(s[0] - 'A');
}

OptionKey option_from_ordinal(std::size_t i) {
  if (i >= kNumOptions) throw std::invalid_argument("option ordinal out of range");
  return static_cast<OptionKey>(i);
}

OptionKey argmax(const PerOption<double>& v) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumOptions; ++i) {
    if (v.values[i] > v.values[best]) best = i;
  }
  return static_cast<OptionKey>(best);
}

std::string to_string(Modality m) { return m == Modality::textual ? "textual" : "visual"; }

Modality parse_modality(std::string_view s) {
  if (s == "textual") return Modality::textual;
  if (s == "visual") return Modality::visual;
  throw std::invalid_argument("unknown modality: " + std::string(s));
}

std::string to_string(SourceDataset s) {
  switch (s) {
    case SourceDataset::ViQuAE: return "ViQuAE";
    case SourceDataset::InfoSeek: return "InfoSeek";
    case SourceDataset::custom: return "custom";
  }
  return "custom";
}

SourceDataset parse_source_dataset(std::string_view s) {
  if (s == "ViQuAE") return SourceDataset::ViQuAE;
  if (s == "InfoSeek") return SourceDataset::InfoSeek;
  if (s == "custom") return SourceDataset::custom;
  throw std::invalid_argument("unknown source dataset: " + std::string(s));
}

std::string to_string(MatchRule r) {
  switch (r) {
    case MatchRule::none: return "none";
    case MatchRule::exact: return "exact";
    case MatchRule::normalized: return "normalized";
    case MatchRule::alias: return "alias";
  }
  return "none";
}

MatchRule parse_match_rule(std::string_view s) {
  if (s == "none") return MatchRule::none;
  if (s == "exact") return MatchRule::exact;
  if (s == "normalized") return MatchRule::normalized;
  if (s == "alias") return MatchRule::alias;
  throw std::invalid_argument("unknown match rule: " + std::string(s));
}

std::string to_string(Violation v) {
  switch (v) {
    case Violation::empty_id: return "empty-id";
    case Violation::empty_question: return "empty-question";
    case Violation::empty_entity: return "empty-entity";
    case Violation::empty_image_ref: return "empty-image-ref";
    case Violation::empty_option: return "empty-option";
    case Violation::duplicate_options: return "duplicate-options";
    case Violation::gold_not_verbatim: return "gold-not-verbatim";
    case Violation::entity_in_question: return "entity-in-question";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string collapse(std::string_view s, bool punct_to_space) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    auto uc = static_cast<unsigned char>(c);
    bool space = is_space(c) || (punct_to_space && std::ispunct(uc) != 0);
    if (space) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

}  // namespace

std::string normalize_text(std::string_view s) { return collapse(s, false); }

std::string normalize_entity(std::string_view s) {
  std::string out = collapse(s, true);
  for (std::string_view article : {"the ", "a ", "an "}) {
    if (out.starts_with(article) && out.size() > article.size()) {
      out.erase(0, article.size());
      break;
    }
  }
  return out;
}

std::vector<Violation> validate_item(const McqaItem& item) {
  std::vector<Violation> out;
  if (item.id.empty()) out.push_back(Violation::empty_id);
  if (normalize_text(item.question).empty()) out.push_back(Violation::empty_question);
  if (normalize_text(item.entity_name).empty()) out.push_back(Violation::empty_entity);
  if (item.image_ref.empty()) out.push_back(Violation::empty_image_ref);

  std::set<std::string> seen;
  bool empty_option = false;
  bool duplicate = false;
  for (const auto& text : item.options) {
    auto norm = normalize_text(text);
    if (norm.empty()) empty_option = true;
    if (!seen.insert(std::move(norm)).second) duplicate = true;
  }
  if (empty_option) out.push_back(Violation::empty_option);
  if (duplicate) out.push_back(Violation::duplicate_options);

  if (item.gold_answer && item.options[item.gold] != *item.gold_answer) {
    out.push_back(Violation::gold_not_verbatim);
  }

  auto entity = normalize_entity(item.entity_name);
  if (!entity.empty()) {
    auto question = " " + normalize_entity(item.question) + " ";
    if (question.find(" " + entity + " ") != std::string::npos) {
      out.push_back(Violation::entity_in_question);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double clamp_logp(double logp) {
  if (std::isnan(logp)) throw std::invalid_argument("log-probability is NaN");
  return std::clamp(logp, kLogProbFloor, 0.0);
}

OptionDistribution OptionDistribution::from_logps(const PerOption<double>& logp, Modality source) {
  OptionDistribution d;
  for (auto k : kAllOptions) d.logp_[k] = clamp_logp(logp[k]);
  d.source_ = source;
  return d;
}

OptionDistribution OptionDistribution::from_probs(const PerOption<double>& probs, Modality source) {
  PerOption<double> logp;
  for (auto k : kAllOptions) {
    double p = probs[k];
    if (std::isnan(p) || p < 0.0) throw std::invalid_argument("probability must be non-negative");
    logp[k] = std::log(std::max(p, kProbFloor));
  }
  return from_logps(logp, source);
}

SampleRecord make_record(std::string item_id, OptionKey gold, bool recognized,
                         std::string predicted_entity, MatchRule rule,
                         const OptionDistribution& textual, const OptionDistribution& visual) {
  SampleRecord r;
  r.item_id = std::move(item_id);
  r.recognized = recognized;
  r.predicted_entity = std::move(predicted_entity);
  r.match_rule = rule;
  r.gold = gold;
  r.textual_dist = textual;
  r.visual_dist = visual;
  r.textual_answer = textual.argmax();
  r.visual_answer = visual.argmax();
  r.textual_correct = r.textual_answer == gold;
  r.visual_correct = r.visual_answer == gold;
  r.flipped = r.textual_answer != r.visual_answer;
  return r;
}

ConflictReport aggregate_report(std::vector<SampleRecord> records, std::vector<SkippedItem> skipped) {
  std::sort(records.begin(), records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.item_id < b.item_id; });
  std::sort(skipped.begin(), skipped.end(),
            [](const SkippedItem& a, const SkippedItem& b) { return a.item_id < b.item_id; });

  std::size_t n = records.size(), n_rec = 0;
  std::size_t t_ok = 0, v_ok = 0, rt_ok = 0, rv_ok = 0, flips = 0;
  for (const auto& r : records) {
    t_ok += r.textual_correct;
    v_ok += r.visual_correct;
    if (!r.recognized) continue;
    ++n_rec;
    rt_ok += r.textual_correct;
    rv_ok += r.visual_correct;
    flips += r.flipped;
  }
  auto frac = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };

  ConflictReport rep;
  rep.n_total = n;
  rep.n_recognized = n_rec;
  rep.acc_textual = frac(t_ok, n);
  rep.acc_visual = frac(v_ok, n);
  rep.racc_textual = frac(rt_ok, n_rec);
  rep.racc_visual = frac(rv_ok, n_rec);
  rep.flip_rate = frac(flips, n_rec);
  rep.delta_acc = rep.racc_textual - rep.racc_visual;
  rep.conflict_rate_lb = conflict_rate_lower_bound(rep.flip_rate, rep.racc_textual, rep.racc_visual);
  rep.records = std::move(records);
  rep.skipped = std::move(skipped);
  return rep;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(json& j, OptionKey k) { j = to_string(k); }

void from_json(const json& j, OptionKey& k) {
  auto parsed = parse_option_key(j.get<std::string>());
  if (!parsed) throw std::invalid_argument("invalid option key: " + j.dump());
  k = *parsed;
}

namespace {

json per_option_json(const PerOption<std::string>& v) {
  json j = json::object();
  for (auto k : kAllOptions) j[to_string(k)] = v[k];
  return j;
}

json per_option_json(const PerOption<double>& v) {
  json j = json::object();
  for (auto k : kAllOptions) j[to_string(k)] = v[k];
  return j;
}

template <class T>
PerOption<T> per_option_from(const json& j) {
  PerOption<T> out;
  for (auto k : kAllOptions) out[k] = j.at(to_string(k)).get<T>();
  return out;
}

}  // namespace

void to_json(json& j, const McqaItem& item) {
  j = json{{"id", item.id},
           {"question", item.question},
           {"entity_name", item.entity_name},
           {"image_ref", item.image_ref},
           {"options", per_option_json(item.options)},
           {"gold", item.gold},
           {"source_dataset", to_string(item.source_dataset)}};
  if (item.gold_answer) j["gold_answer"] = *item.gold_answer;
  if (!item.aliases.empty()) j["aliases"] = item.aliases;
}

void from_json(const json& j, McqaItem& item) {
  item.id = j.at("id").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.entity_name = j.at("entity_name").get<std::string>();
  item.image_ref = j.at("image_ref").get<std::string>();
  item.options = per_option_from<std::string>(j.at("options"));
  item.gold = j.at("gold").get<OptionKey>();
  item.source_dataset = parse_source_dataset(j.value("source_dataset", std::string("custom")));
  item.gold_answer.reset();
  if (j.contains("gold_answer")) item.gold_answer = j.at("gold_answer").get<std::string>();
  item.aliases = j.value("aliases", std::vector<std::string>{});
}

void to_json(json& j, const OptionDistribution& d) {
  j = json{{"modality", to_string(d.source())}, {"logp", per_option_json(d.logp())}};
}

void from_json(const json& j, OptionDistribution& d) {
  d = OptionDistribution::from_logps(per_option_from<double>(j.at("logp")),
                                     parse_modality(j.at("modality").get<std::string>()));
}

void to_json(json& j, const SampleRecord& r) {
  j = json{{"item_id", r.item_id},
           {"recognized", r.recognized},
           {"predicted_entity", r.predicted_entity},
           {"match_rule", to_string(r.match_rule)},
           {"gold", r.gold},
           {"textual_answer", r.textual_answer},
           {"visual_answer", r.visual_answer},
           {"textual_dist", r.textual_dist},
           {"visual_dist", r.visual_dist},
           {"textual_correct", r.textual_correct},
           {"visual_correct", r.visual_correct},
           {"flipped", r.flipped}};
}

void from_json(const json& j, SampleRecord& r) {
  r = make_record(j.at("item_id").get<std::string>(), j.at("gold").get<OptionKey>(),
                  j.at("recognized").get<bool>(), j.at("predicted_entity").get<std::string>(),
                  parse_match_rule(j.at("match_rule").get<std::string>()),
                  j.at("textual_dist").get<OptionDistribution>(),
                  j.at("visual_dist").get<OptionDistribution>());
  if (r.textual_answer != j.at("textual_answer").get<OptionKey>() ||
      r.visual_answer != j.at("visual_answer").get<OptionKey>() ||
      r.flipped != j.at("flipped").get<bool>()) {
    throw std::invalid_argument("record " + r.item_id + ": answers disagree with distributions");
  }
}

void to_json(json& j, const SkippedItem& s) { j = json{{"item_id", s.item_id}, {"reason", s.reason}}; }

void from_json(const json& j, SkippedItem& s) {
  s.item_id = j.at("item_id").get<std::string>();
  s.reason = j.at("reason").get<std::string>();
}

void to_json(json& j, const RunMetadata& m) {
  j = json{{"backend", m.backend},
           {"config_hash", m.config_hash},
           {"dataset_hash", m.dataset_hash},
           {"seed", m.seed}};
}

void from_json(const json& j, RunMetadata& m) {
  m.backend = j.value("backend", std::string());
  m.config_hash = j.value("config_hash", std::string());
  m.dataset_hash = j.value("dataset_hash", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
}

void to_json(json& j, const ConflictReport& r) {
  j = json{{"n_total", r.n_total},
           {"n_recognized", r.n_recognized},
           {"acc_textual", r.acc_textual},
           {"acc_visual", r.acc_visual},
           {"racc_textual", r.racc_textual},
           {"racc_visual", r.racc_visual},
           {"flip_rate", r.flip_rate},
           {"delta_acc", r.delta_acc},
           {"conflict_rate_lb", r.conflict_rate_lb},
           {"records", r.records},
           {"skipped", r.skipped},
           {"meta", r.meta}};
}

void from_json(const json& j, ConflictReport& r) {
  r.n_total = j.at("n_total").get<std::size_t>();
  r.n_recognized = j.at("n_recognized").get<std::size_t>();
  if (r.n_recognized > r.n_total) throw std::invalid_argument("n_recognized exceeds n_total");
  r.acc_textual = j.at("acc_textual").get<double>();
  r.acc_visual = j.at("acc_visual").get<double>();
  r.racc_textual = j.at("racc_textual").get<double>();
  r.racc_visual = j.at("racc_visual").get<double>();
  r.flip_rate = j.at("flip_rate").get<double>();
  if (r.flip_rate < 0.0 || r.flip_rate > 1.0) throw std::invalid_argument("flip_rate outside [0,1]");
  r.delta_acc = r.racc_textual - r.racc_visual;
  r.conflict_rate_lb = conflict_rate_lower_bound(r.flip_rate, r.racc_textual, r.racc_visual);
  r.records = j.value("records", std::vector<SampleRecord>{});
  r.skipped = j.value("skipped", std::vector<SkippedItem>{});
  r.meta = j.value("meta", RunMetadata{});
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("short write to " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  auto text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), text.substr(0, 256));
  }
}

std::vector<McqaItem> read_items_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<McqaItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_text(line).empty()) continue;
    try {
      items.push_back(json::parse(line).get<McqaItem>());
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return items;
}

void write_items_jsonl(const std::filesystem::path& path, const std::vector<McqaItem>& items) {
  std::string out;
  for (const auto& item : items) {
    out += json(item).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream ss;
  ss << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) ss << std::setw(2) << static_cast<int>(digest[i]);
  return ss.str();
}

}  // namespace kc

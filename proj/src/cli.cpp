#include "kconflict/cli.hpp"

#include <algorithm>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "kconflict/config.hpp"
#include "kconflict/dataset_builder.hpp"
#include "kconflict/dcd.hpp"
#include "kconflict/errors.hpp"
#include "kconflict/mitigate.hpp"
#include "kconflict/replay.hpp"
#include "kconflict/report.hpp"

namespace kc {

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string backend;
  std::string record_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
};

struct Context {
  AppConfig cfg;
  std::string config_hash;
};

Context load_context(const GlobalFlags& g) {
  Context ctx;
  if (!g.config_path.empty()) ctx.cfg = load_config(g.config_path);
  apply_env_overrides(ctx.cfg);
  if (!g.backend.empty()) apply_backend_flag(ctx.cfg.backend, g.backend);
  if (g.seed) ctx.cfg.seed = *g.seed;
  if (g.parallel) {
    if (*g.parallel == 0) throw ConfigError("--parallel must be at least 1");
    ctx.cfg.parallel = *g.parallel;
  }
  ctx.config_hash = config_hash(ctx.cfg);
  return ctx;
}

// Owns the configured backend and the optional recorder wrapped around it.
class BackendStack {
 public:
  BackendStack(const BackendSpec& spec, const std::vector<McqaItem>& dataset, const std::string& record_path)
      : base_(make_backend(spec, dataset)) {
    if (!record_path.empty()) recorder_ = std::make_unique<RecordingBackend>(*base_, record_path);
  }

  Backend& get() { return recorder_ ? static_cast<Backend&>(*recorder_) : *base_; }

  void finish() {
    if (recorder_) recorder_->flush();
  }

 private:
  std::unique_ptr<Backend> base_;
  std::unique_ptr<RecordingBackend> recorder_;
};

struct Dataset {
  std::vector<McqaItem> items;
  std::string hash;
};

Dataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("--dataset is required");
  return {read_items_jsonl(path), sha256_hex(read_text_file(path))};
}

ConflictReport load_report(const std::string& path) {
  auto j = read_json_file(path);
  try {
    return j.get<ConflictReport>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": not a conflict report: " + e.what(), j.dump());
  }
}

void write_json(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string sibling_csv(const std::string& path) {
  std::filesystem::path p(path);
  p.replace_extension(".csv");
  return p.string();
}

ConflictReport run_detect(const Context& ctx, const Dataset& ds, Backend& backend) {
  auto report = detect(ds.items, backend, detect_config(ctx.cfg));
  report.meta.config_hash = ctx.config_hash;
  report.meta.dataset_hash = ds.hash;
  report.meta.seed = ctx.cfg.seed;
  return report;
}

json with_meta(json j, const RunMetadata& meta) {
  j["meta"] = meta;
  return j;
}

// Synthetic generators answer distractor prompts from a world whose options
// are placeholders around the gold answer.
std::vector<McqaItem> placeholder_items(const std::vector<RawQaItem>& raws, std::uint64_t seed) {
  std::vector<McqaItem> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) {
    McqaItem item;
    item.id = raw.id;
    item.question = raw.question;
    item.entity_name = raw.entity_name;
    item.image_ref = raw.image_ref;
    item.source_dataset = raw.source_dataset;
    item.gold = option_from_ordinal(derive_seed(seed, raw.id) % 4);
    int n = 1;
    for (auto k : kAllOptions) {
      item.options[k] = k == item.gold ? raw.gold_answer : raw.gold_answer + " (alternative " + std::to_string(n++) + ")";
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modality knowledge conflict toolkit", "kconflict"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option("--backend", g.backend, "replay:PATH | synthetic[:SEED] | http:URL");
  app.add_option("--record", g.record_path, "Record every backend exchange to this replay file");
  app.add_option("--seed", g.seed, "Base seed for all randomness");
  app.add_option("--parallel", g.parallel, "Maximum concurrent backend requests");

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "Synthesize four-option items from raw QA pairs");
  std::string build_in, build_out, build_stats;
  std::optional<std::size_t> build_n;
  build->add_option("--input", build_in, "Raw QA JSONL")->required();
  build->add_option("--output", build_out, "MCQA dataset JSONL")->required();
  build->add_option("--n", build_n, "Downsample the raw items to this many before synthesis");
  build->add_option("--stats", build_stats, "Write dataset statistics JSON");

  // detect
  auto* det = app.add_subcommand("detect", "Paired textual/visual querying and conflict metrics");
  std::string det_dataset, det_out, det_csv;
  det->add_option("--dataset", det_dataset)->required();
  det->add_option("--out", det_out, "Report JSON")->required();
  det->add_option("--csv", det_csv, "Per-sample CSV (default: next to the report)");

  // analyze-confidence
  auto* conf = app.add_subcommand("analyze-confidence", "Confidence-based answer selection");
  std::string conf_dataset, conf_report, conf_out, conf_strategy = "max";
  conf->add_option("--dataset", conf_dataset);
  conf->add_option("--report", conf_report, "Prior detect report");
  conf->add_option("--strategy", conf_strategy)
      ->check(CLI::IsMember({"max", "shift", "minvar-prompt", "minvar-stochastic"}));
  conf->add_option("--out", conf_out)->required();

  // contrast
  auto* con = app.add_subcommand("contrast", "Contrastive metric scores and histogram");
  std::string con_dataset, con_report, con_out, con_hist, con_stats;
  con->add_option("--dataset", con_dataset);
  con->add_option("--report", con_report, "Prior detect report");
  con->add_option("--out", con_out, "Scores CSV")->required();
  con->add_option("--hist", con_hist, "Histogram CSV");
  con->add_option("--stats", con_stats, "Separation statistics JSON");

  // elicit
  auto* eli = app.add_subcommand("elicit", "Contrastive free-form elicitation of visual memory");
  std::string eli_dataset, eli_item, eli_out;
  std::optional<std::size_t> eli_max;
  eli->add_option("--dataset", eli_dataset)->required();
  eli->add_option("--item-id", eli_item)->required();
  eli->add_option("--max-tokens", eli_max);
  eli->add_option("--out", eli_out, "Result JSON");

  // dcd
  auto* dcd = app.add_subcommand("dcd", "Dynamic contrastive decoding");
  std::string dcd_report, dcd_dataset, dcd_out;
  dcd->add_option("--report", dcd_report, "Reuse the distributions of a prior detect report");
  dcd->add_option("--dataset", dcd_dataset, "Query the backend afresh");
  dcd->add_option("--out", dcd_out)->required();

  // mitigate
  auto* mit = app.add_subcommand("mitigate", "Prompt-based re-querying of the visual answer");
  std::string mit_report, mit_dataset, mit_out, mit_strategy;
  mit->add_option("--report", mit_report)->required();
  mit->add_option("--dataset", mit_dataset)->required();
  mit->add_option("--strategy", mit_strategy)->required()->check(CLI::IsMember({"reminder", "answer-conflict"}));
  mit->add_option("--out", mit_out)->required();

  // report
  auto* rep = app.add_subcommand("report", "Combined summary table");
  std::string rep_report, rep_csv, rep_label;
  std::vector<std::string> rep_extra;
  rep->add_option("--report", rep_report, "Detect report JSON")->required();
  rep->add_option("--extra", rep_extra, "DCD, mitigation or confidence output JSON");
  rep->add_option("--label", rep_label);
  rep->add_option("--csv", rep_csv, "Write the table as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (e.get_exit_code() != 0) err << app.help();
    return 2;
  }

  try {
    Context ctx = load_context(g);
    const std::string& rec = g.record_path;

    if (build->parsed()) {
      auto raws = read_raw_jsonl(build_in);
      if (build_n) raws = downsample(raws, *build_n, ctx.cfg.seed);
      const BackendSpec& spec = ctx.cfg.generator ? *ctx.cfg.generator : ctx.cfg.backend;
      BackendStack backend(spec, placeholder_items(raws, ctx.cfg.seed), rec);
      SynthesisOptions opts;
      opts.max_attempts = ctx.cfg.synthesis_attempts;
      auto outcome = build_dataset(raws, backend.get(), ctx.cfg.seed, ctx.cfg.parallel, opts);
      backend.finish();
      write_items_jsonl(build_out, outcome.items);
      auto s = stats(outcome.items);
      if (gold_placement_degenerate(s)) spdlog::warn("gold answers concentrate on one option key");
      if (!build_stats.empty()) {
        json j = s;
        j["skipped"] = outcome.skipped;
        j["normalized_matches"] = outcome.normalized_matches;
        write_json(build_stats, j);
      }
      out << "wrote " << outcome.items.size() << " items (" << outcome.skipped.size() << " skipped)\n";
      return 0;
    }

    if (det->parsed()) {
      auto ds = load_dataset(det_dataset);
      BackendStack backend(ctx.cfg.backend, ds.items, rec);
      auto report = run_detect(ctx, ds, backend.get());
      backend.finish();
      write_json(det_out, report);
      write_text_file(det_csv.empty() ? sibling_csv(det_out) : det_csv, records_csv(report));
      out << render_conflict_summary(report);
      return 0;
    }

    if (conf->parsed()) {
      auto strategy = parse_confidence_strategy(conf_strategy);
      bool needs_backend = strategy == ConfidenceStrategy::minvar_prompt ||
                           strategy == ConfidenceStrategy::minvar_stochastic || conf_report.empty();
      Dataset ds;
      if (!conf_dataset.empty()) ds = load_dataset(conf_dataset);
      if (needs_backend && ds.items.empty()) throw ConfigError("--dataset is required for this strategy");
      std::optional<BackendStack> backend;
      std::optional<BackendStack> generator;
      if (needs_backend) backend.emplace(ctx.cfg.backend, ds.items, rec);
      if (needs_backend && ctx.cfg.generator) generator.emplace(*ctx.cfg.generator, ds.items, std::string());
      auto report = conf_report.empty() ? run_detect(ctx, ds, backend->get()) : load_report(conf_report);
      auto analysis = analyze_confidence(report, ds.items, backend ? &backend->get() : nullptr, strategy,
                                         min_variance_config(ctx.cfg), ctx.cfg.max_skip_fraction,
                                         generator ? &generator->get() : nullptr);
      if (backend) backend->finish();
      write_json(conf_out, with_meta(analysis, report.meta));
      out << render_confidence(analysis, report);
      return 0;
    }

    if (con->parsed()) {
      ConflictReport report;
      if (!con_report.empty()) {
        report = load_report(con_report);
      } else {
        auto ds = load_dataset(con_dataset);
        BackendStack backend(ctx.cfg.backend, ds.items, rec);
        report = run_detect(ctx, ds, backend.get());
        backend.finish();
      }
      std::vector<ScoredSample> scores;
      scores.reserve(report.records.size());
      for (const auto& r : report.records) scores.push_back({score_record(r, ctx.cfg.eval_token), r.flipped});
      write_text_file(con_out, scores_csv(report.records, scores));
      auto sep = separation_stats(scores, ctx.cfg.bin_width, ctx.cfg.hist_max);
      if (!con_hist.empty()) write_text_file(con_hist, histogram_csv(sep, ctx.cfg.bin_width));
      if (!con_stats.empty()) write_json(con_stats, with_meta(sep, report.meta));
      out << render_separation(sep);
      return 0;
    }

    if (eli->parsed()) {
      auto ds = load_dataset(eli_dataset);
      auto it = std::find_if(ds.items.begin(), ds.items.end(), [&](const McqaItem& i) { return i.id == eli_item; });
      if (it == ds.items.end()) throw ConfigError("item not in dataset: " + eli_item);
      BackendStack backend(ctx.cfg.backend, ds.items, rec);
      auto ecfg = ctx.cfg.elicit;
      if (eli_max) ecfg.max_tokens = *eli_max;
      auto result = elicit_visual_memory(*it, backend.get(), ecfg);
      backend.finish();
      if (result.degenerate) spdlog::warn("elicitation for {} is degenerate: every step was a tie", eli_item);
      if (!eli_out.empty()) write_json(eli_out, result);
      out << result.text << "\n";
      return 0;
    }

    if (dcd->parsed()) {
      if (dcd_report.empty() == dcd_dataset.empty()) throw ConfigError("dcd needs exactly one of --report, --dataset");
      ConflictReport report;
      if (!dcd_report.empty()) {
        report = load_report(dcd_report);
      } else {
        auto ds = load_dataset(dcd_dataset);
        BackendStack backend(ctx.cfg.backend, ds.items, rec);
        report = run_detect(ctx, ds, backend.get());
        backend.finish();
      }
      auto result = dcd_run(report);
      write_json(dcd_out, result);
      out << render_dcd(result);
      return 0;
    }

    if (mit->parsed()) {
      auto report = load_report(mit_report);
      auto ds = load_dataset(mit_dataset);
      BackendStack backend(ctx.cfg.backend, ds.items, rec);
      MitigateConfig mcfg;
      mcfg.answer = detect_config(ctx.cfg).answer;
      mcfg.requery_all = ctx.cfg.requery_all;
      mcfg.parallel = ctx.cfg.parallel;
      mcfg.max_skip_fraction = ctx.cfg.max_skip_fraction;
      auto result =
          evaluate_strategy(report, ds.items, backend.get(), parse_mitigation_strategy(mit_strategy), mcfg);
      backend.finish();
      write_json(mit_out, result);
      out << render_strategy(result);
      return 0;
    }

    if (rep->parsed()) {
      auto report = load_report(rep_report);
      std::vector<json> extras;
      for (const auto& path : rep_extra) extras.push_back(read_json_file(path));
      if (!rep_csv.empty()) write_text_file(rep_csv, combined_csv(report, extras, rep_label));
      out << render_combined(report, extras, rep_label);
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace kc

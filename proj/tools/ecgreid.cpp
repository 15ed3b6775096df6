// Command-line front end: the full audit plus one subcommand per stage.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecgreid/cohort.hpp"
#include "ecgreid/error.hpp"
#include "ecgreid/evaluate.hpp"
#include "ecgreid/explain.hpp"
#include "ecgreid/features.hpp"
#include "ecgreid/pipeline.hpp"
#include "ecgreid/record.hpp"
#include "ecgreid/synth.hpp"
#include "ecgreid/text.hpp"

namespace fs = std::filesystem;
using namespace ecgreid;

namespace {

struct InputFlags {
  std::string manifest;
  std::string synthetic;
};

struct FeatureFlags {
  std::optional<double> window_s;
  std::optional<double> hp_cutoff;
  std::optional<int> hp_order;
  std::optional<int> powerline;
  bool all_pairs = false;
};

void add_input_flags(CLI::App* cmd, InputFlags& in) {
  auto* m = cmd->add_option("--manifest", in.manifest, "JSON manifest of signal/metadata pairs");
  auto* s = cmd->add_option("--synthetic", in.synthetic, "synthetic population config (JSON)");
  m->excludes(s);
}

void add_feature_flags(CLI::App* cmd, FeatureFlags& f) {
  cmd->add_option("--window-s", f.window_s, "analysis window length in seconds (default 10)");
  cmd->add_option("--hp-cutoff", f.hp_cutoff, "highpass cutoff in Hz (default 0.5)");
  cmd->add_option("--hp-order", f.hp_order, "highpass Butterworth order (default 5)");
  cmd->add_option("--powerline", f.powerline, "mains frequency to notch")->check(CLI::IsMember({50, 60}));
  cmd->add_flag("--all-pairs", f.all_pairs, "emit every pairwise interval (14 features)");
}

void apply(const InputFlags& in, RunConfig& c) {
  if (!in.manifest.empty()) {
    c.manifest_path = in.manifest;
    c.synthetic.reset();
  }
  if (!in.synthetic.empty()) {
    c.synthetic = parse_synthetic_config(text::read_file(in.synthetic));
    c.manifest_path.reset();
  }
}

void apply(const FeatureFlags& f, FeatureOptions& o) {
  if (f.window_s) o.window_s = *f.window_s;
  if (f.hp_cutoff) o.filter.highpass_cutoff_hz = *f.hp_cutoff;
  if (f.hp_order) o.filter.highpass_order = *f.hp_order;
  if (f.powerline) o.filter.powerline_freq_hz = *f.powerline;
  if (f.all_pairs) o.all_pairs = true;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto part : text::split(s, ','))
    if (!text::trim(part).empty()) out.emplace_back(text::trim(part));
  return out;
}

FeatureTable load_table(const std::string& path) {
  return parse_feature_csv(text::read_file(path), path);
}

SplitPlan load_plan(const std::string& path, const FeatureTable& table) {
  return parse_plan_json(text::read_file(path), table, path);
}

TrainedModel load_model(const std::string& path) {
  return parse_model_json(text::read_file(path), path);
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG re-identification risk audit"};
  app.require_subcommand(1);

  // ---- audit
  auto* audit = app.add_subcommand("audit", "run every stage into one output directory");
  InputFlags audit_in;
  FeatureFlags audit_feat;
  std::string audit_config, audit_out, audit_tasks, audit_models, audit_scale;
  std::optional<std::uint64_t> audit_seed;
  bool audit_no_tune = false;
  int audit_threads = 0;
  audit->add_option("--config", audit_config, "run config JSON (flags override it)");
  add_input_flags(audit, audit_in);
  add_feature_flags(audit, audit_feat);
  audit->add_option("--tasks", audit_tasks, "comma list of gender,age_group,participant_id");
  audit->add_option("--models", audit_models, "comma list of logistic,tree,forest");
  audit->add_option("--seed", audit_seed, "root seed (default 42)");
  audit->add_option("--shap-scale", audit_scale, "probability or logit");
  audit->add_flag("--no-tune", audit_no_tune, "fit the default config instead of grid search");
  audit->add_option("--threads", audit_threads, "forest training threads (0 = all cores)");
  audit->add_option("--out", audit_out, "output directory")->required();

  // ---- synth
  auto* synth = app.add_subcommand("synth", "write a synthetic population as CSV/JSON records");
  std::string synth_config, synth_out;
  std::optional<int> synth_n;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "synthetic population config (JSON)");
  synth->add_option("--n", synth_n, "number of participants");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // ---- features
  auto* feat = app.add_subcommand("features", "clean, delineate and window records");
  InputFlags feat_in;
  FeatureFlags feat_flags;
  std::string feat_annotations, feat_out;
  add_input_flags(feat, feat_in);
  add_feature_flags(feat, feat_flags);
  feat->add_option("--annotations", feat_annotations,
                   "directory of exported annotations to reuse instead of detecting");
  feat->add_option("--out", feat_out, "output directory")->required();

  // ---- split
  auto* split = app.add_subcommand("split", "assign feature windows to train/test");
  std::string split_features, split_task, split_out;
  std::uint64_t split_seed = 42;
  split->add_option("--features", split_features, "feature CSV")->required();
  split->add_option("--task", split_task, "gender, age_group or participant_id")->required();
  split->add_option("--seed", split_seed, "root seed (default 42)");
  split->add_option("--out", split_out, "plan JSON")->required();

  // ---- train
  auto* train = app.add_subcommand("train", "tune and fit one model on a split plan");
  std::string train_features, train_plan, train_model_kind, train_out;
  std::uint64_t train_seed = 42;
  bool train_no_tune = false;
  int train_threads = 0;
  train->add_option("--features", train_features, "feature CSV")->required();
  train->add_option("--plan", train_plan, "split plan JSON")->required();
  train->add_option("--model", train_model_kind, "logistic, tree or forest")->required();
  train->add_option("--seed", train_seed, "root seed (default 42)");
  train->add_flag("--no-tune", train_no_tune, "fit the default config instead of grid search");
  train->add_option("--threads", train_threads, "forest training threads (0 = all cores)");
  train->add_option("--out", train_out, "model JSON")->required();

  // ---- evaluate
  auto* eval = app.add_subcommand("evaluate", "score a model on the plan's test side");
  std::string eval_features, eval_plan, eval_model, eval_out, eval_csv;
  eval->add_option("--features", eval_features, "feature CSV")->required();
  eval->add_option("--plan", eval_plan, "split plan JSON")->required();
  eval->add_option("--model", eval_model, "model JSON")->required();
  eval->add_option("--out", eval_out, "report JSON")->required();
  eval->add_option("--csv", eval_csv, "also write a one-row CSV");

  // ---- explain
  auto* expl = app.add_subcommand("explain", "exact SHAP summary over the test side");
  std::string expl_features, expl_plan, expl_model, expl_out, expl_class, expl_scale = "probability";
  std::uint64_t expl_seed = 42;
  std::size_t expl_points = 500, expl_background = 128;
  expl->add_option("--features", expl_features, "feature CSV")->required();
  expl->add_option("--plan", expl_plan, "split plan JSON")->required();
  expl->add_option("--model", expl_model, "model JSON")->required();
  expl->add_option("--seed", expl_seed, "root seed (default 42)");
  expl->add_option("--class", expl_class, "explain this class instead of the predicted one");
  expl->add_option("--scale", expl_scale, "probability or logit");
  expl->add_option("--max-points", expl_points, "test rows to explain at most");
  expl->add_option("--background", expl_background, "background rows");
  expl->add_option("--out", expl_out, "output prefix (.json, .csv, .svg are appended)")->required();

  // ---- report
  auto* rep = app.add_subcommand("report", "merge evaluation reports into one table");
  std::vector<std::string> rep_reports, rep_shap;
  std::string rep_out;
  rep->add_option("--reports", rep_reports, "report JSON files")->required();
  rep->add_option("--shap", rep_shap, "SHAP summary JSON files");
  rep->add_option("--out", rep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*audit) {
      RunConfig config;
      if (!audit_config.empty()) config = parse_run_config(text::read_file(audit_config), audit_config);
      apply(audit_in, config);
      apply(audit_feat, config.features);
      if (!audit_tasks.empty()) {
        config.tasks.clear();
        for (const auto& t : split_list(audit_tasks)) config.tasks.push_back(parse_task(t));
      }
      if (!audit_models.empty()) {
        config.models.clear();
        for (const auto& m : split_list(audit_models)) config.models.push_back(parse_model_kind(m));
      }
      if (audit_seed) config.seed = *audit_seed;
      if (audit_no_tune) config.tune = false;
      if (!audit_scale.empty()) config.shap_scale = parse_shap_scale(audit_scale);
      run_audit(config, audit_out, std::cerr, audit_threads);
      std::cerr << "audit complete: " << audit_out << "\n";
    } else if (*synth) {
      SyntheticPopulationConfig c;
      if (!synth_config.empty()) c = parse_synthetic_config(text::read_file(synth_config));
      if (synth_n) c.n_participants = *synth_n;
      if (synth_seed) c.seed = *synth_seed;
      validate(c);
      const auto pop = generate_population(c);
      fs::create_directories(fs::path(synth_out) / "records");
      std::vector<ManifestEntry> entries;
      for (const auto& rec : pop.records) {
        const auto stem = fs::path("records") / rec.participant_id;
        write_record(rec, (fs::path(synth_out) / stem).string() + ".csv",
                     (fs::path(synth_out) / stem).string() + ".json");
        entries.push_back({stem.string() + ".csv", stem.string() + ".json", {}});
      }
      text::write_file((fs::path(synth_out) / "manifest.json").string(), format_manifest(entries));
      text::write_file((fs::path(synth_out) / "synthetic.json").string(), format_synthetic_config(c));
      std::cerr << "wrote " << pop.records.size() << " records to " << synth_out << "\n";
    } else if (*feat) {
      RunConfig config;
      apply(feat_in, config);
      if (!config.manifest_path && !config.synthetic)
        throw ConfigError("features needs --manifest or --synthetic");
      apply(feat_flags, config.features);
      const auto records = load_records(config);
      const auto ex = extract_features(
          records, config.features,
          feat_annotations.empty() ? std::nullopt : std::optional<std::string>(feat_annotations));
      const fs::path out(feat_out);
      fs::create_directories(out / "annotations");
      text::write_file((out / "features.csv").string(), format_feature_csv(ex.table));
      text::write_file((out / "drops.csv").string(), format_drop_log(ex));
      for (std::size_t k = 0; k < ex.records.size(); ++k)
        text::write_file((out / "annotations" / ex.records[k].annotation_file).string(),
                         format_annotations_csv(ex.beats[k]));
      std::cerr << ex.table.rows.size() << " windows from " << records.size() << " records\n";
    } else if (*split) {
      const auto table = load_table(split_features);
      const auto task = parse_task(split_task);
      const auto plan = make_split(table, task, stage_seed(split_seed, split_stage(task)));
      for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";
      ensure_parent(split_out);
      text::write_file(split_out, format_plan_json(plan, table));
    } else if (*train) {
      const auto table = load_table(train_features);
      const auto plan = load_plan(train_plan, table);
      const auto result = train_model(table, plan, parse_model_kind(train_model_kind), train_seed,
                                      !train_no_tune, train_threads);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      ensure_parent(train_out);
      text::write_file(train_out, format_model_json(result.model));
    } else if (*eval) {
      const auto table = load_table(eval_features);
      const auto plan = load_plan(eval_plan, table);
      auto report = evaluate(load_model(eval_model), table, plan);
      reference_compare(report);
      ensure_parent(eval_out);
      text::write_file(eval_out, format_report_json(report));
      if (!eval_csv.empty()) text::write_file(eval_csv, report_csv_header() + format_report_csv_row(report));
      std::cout << format_report_csv_row(report);
    } else if (*expl) {
      const auto table = load_table(expl_features);
      const auto plan = load_plan(expl_plan, table);
      const auto model = load_model(expl_model);
      ShapSummaryConfig sc;
      if (!expl_class.empty()) {
        sc.policy = ClassPolicy::Fixed;
        sc.fixed_class = expl_class;
      }
      sc.scale = parse_shap_scale(expl_scale);
      sc.max_points = expl_points;
      sc.background_size = expl_background;
      sc.seed = stage_seed(expl_seed, explain_stage(plan.task, model.kind));
      const auto s = shap_summary(model, table, plan, sc);
      ensure_parent(expl_out);
      text::write_file(expl_out + ".json", format_summary_json(s));
      text::write_file(expl_out + ".csv", format_beeswarm_csv(s));
      text::write_file(expl_out + ".svg", render_summary_svg(s));
    } else if (*rep) {
      std::vector<EvalReport> reports;
      for (const auto& p : rep_reports) reports.push_back(parse_report_json(text::read_file(p), p));
      std::vector<ShapSummary> shap;
      for (const auto& p : rep_shap) shap.push_back(parse_summary_json(text::read_file(p), p));
      fs::create_directories(rep_out);
      text::write_file((fs::path(rep_out) / "summary.csv").string(), format_summary_csv(reports, shap));
      const auto md = format_summary_markdown(reports, shap);
      text::write_file((fs::path(rep_out) / "summary.md").string(), md);
      std::cout << md;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

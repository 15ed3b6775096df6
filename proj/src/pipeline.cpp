#include "ecgreid/pipeline.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ecgreid/delineate.hpp"
#include "ecgreid/error.hpp"
#include "ecgreid/evaluate.hpp"
#include "ecgreid/rng.hpp"
#include "ecgreid/text.hpp"

namespace fs = std::filesystem;

namespace ecgreid {

using nlohmann::json;

void validate(const RunConfig& c) {
  if (c.manifest_path.has_value() == c.synthetic.has_value())
    throw ConfigError("exactly one of a manifest or a synthetic config is required");
  if (c.synthetic) validate(*c.synthetic);
  if (!(c.features.window_s > 0.0)) throw ConfigError("window length must be positive");
  if (c.tasks.empty()) throw ConfigError("no tasks selected");
  if (c.models.empty()) throw ConfigError("no model kinds selected");
  if (c.shap_background == 0) throw ConfigError("SHAP background must hold at least one row");
  if (c.shap_max_points == 0) throw ConfigError("SHAP point budget must be positive");
  if (c.shap_scale == ShapScale::Logit)
    for (const auto k : c.models)
      if (k != ModelKind::Logistic)
        throw ConfigError("the logit SHAP scale needs --models logistic only");
}

std::string format_run_config(const RunConfig& c) {
  json input;
  if (c.manifest_path) input["manifest"] = *c.manifest_path;
  if (c.synthetic) input["synthetic"] = json::parse(format_synthetic_config(*c.synthetic));
  json tasks = json::array(), models = json::array();
  for (const auto t : c.tasks) tasks.push_back(std::string(to_string(t)));
  for (const auto m : c.models) models.push_back(std::string(to_string(m)));
  const auto& f = c.features.filter;
  json j = {{"input", input},
            {"filter",
             {{"highpass_cutoff_hz", f.highpass_cutoff_hz},
              {"highpass_order", f.highpass_order},
              {"powerline_freq_hz", f.powerline_freq_hz},
              {"notch_quality", f.notch_quality}}},
            {"window_s", c.features.window_s},
            {"all_pairs", c.features.all_pairs},
            {"tasks", tasks},
            {"models", models},
            {"seed", c.seed},
            {"tune", c.tune},
            {"shap",
             {{"scale", std::string(to_string(c.shap_scale))},
              {"max_points", c.shap_max_points},
              {"background_size", c.shap_background}}}};
  return j.dump(2) + "\n";
}

RunConfig parse_run_config(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
  RunConfig c;
  try {
    const auto& input = j.at("input");
    if (input.contains("manifest")) c.manifest_path = input["manifest"].get<std::string>();
    if (input.contains("synthetic")) c.synthetic = parse_synthetic_config(input["synthetic"].dump());
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      auto& spec = c.features.filter;
      spec.highpass_cutoff_hz = f.value("highpass_cutoff_hz", spec.highpass_cutoff_hz);
      spec.highpass_order = f.value("highpass_order", spec.highpass_order);
      spec.powerline_freq_hz = f.value("powerline_freq_hz", spec.powerline_freq_hz);
      spec.notch_quality = f.value("notch_quality", spec.notch_quality);
    }
    c.features.window_s = j.value("window_s", c.features.window_s);
    c.features.all_pairs = j.value("all_pairs", c.features.all_pairs);
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j["tasks"]) c.tasks.push_back(parse_task(t.get<std::string>()));
    }
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j["models"]) c.models.push_back(parse_model_kind(m.get<std::string>()));
    }
    c.seed = j.value("seed", c.seed);
    c.tune = j.value("tune", c.tune);
    if (j.contains("shap")) {
      const auto& s = j["shap"];
      if (s.contains("scale")) c.shap_scale = parse_shap_scale(s["scale"].get<std::string>());
      c.shap_max_points = s.value("max_points", c.shap_max_points);
      c.shap_background = s.value("background_size", c.shap_background);
    }
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  validate(c);
  return c;
}

std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  return child_seed(root, stage);
}

std::string split_stage(Task task) { return "split/" + std::string(to_string(task)); }

std::string model_stage(Task task, ModelKind kind) {
  return "model/" + std::string(to_string(task)) + "/" + std::string(to_string(kind));
}

std::string tune_stage(Task task, ModelKind kind) {
  return "tune/" + std::string(to_string(task)) + "/" + std::string(to_string(kind));
}

std::string explain_stage(Task task, ModelKind kind) {
  return "explain/" + std::string(to_string(task)) + "/" + std::string(to_string(kind));
}

std::vector<EcgRecord> load_records(const RunConfig& config) {
  if (config.synthetic) return generate_population(*config.synthetic).records;
  if (!config.manifest_path) throw ConfigError("no input configured");
  std::vector<EcgRecord> records;
  for (const auto& e : read_manifest(*config.manifest_path))
    records.push_back(read_record(e.signal_path, e.metadata_path, e.options));
  if (records.empty()) throw InputError("manifest lists no records: " + *config.manifest_path);
  return records;
}

std::string annotation_file_name(std::size_t record_index, const std::string& participant_id) {
  std::string safe;
  for (const char c : participant_id)
    safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%03zu_", record_index);
  return prefix + safe + ".csv";
}

Extraction extract_features(const std::vector<EcgRecord>& records, const FeatureOptions& options,
                            const std::optional<std::string>& annotations_dir) {
  Extraction out;
  out.table.names = feature_names(options.all_pairs);
  std::map<std::string, int> next_window;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    const auto cleaned = clean(rec, options.filter);
    const double fsr = cleaned.sampling_rate_hz;

    RecordSummary summary;
    summary.participant_id = rec.participant_id;
    summary.annotation_file = annotation_file_name(k, rec.participant_id);

    std::vector<BeatAnnotation> beats;
    if (annotations_dir) {
      const auto path = (fs::path(*annotations_dir) / summary.annotation_file).string();
      beats = parse_annotations_csv(text::read_file(path), cleaned.samples, fsr, path);
    } else {
      const auto peaks = detect_r_peaks(cleaned.samples, fsr);
      beats = delineate_beats(cleaned.samples, fsr, peaks);
    }
    summary.beats = beats.size();

    const ParticipantLabels labels{rec.participant_id, rec.gender, rec.age};
    auto windowed = windowed_features(beats, fsr, cleaned.samples.size(), options.window_s, labels,
                                      options.all_pairs);
    summary.windows = static_cast<int>(std::floor(
        static_cast<double>(cleaned.samples.size()) / (options.window_s * fsr) + 1e-9));
    summary.kept = static_cast<int>(windowed.rows.size());
    summary.drops = windowed.drops;

    int& offset = next_window[rec.participant_id];
    for (auto& row : windowed.rows) {
      row.window_index += offset;
      out.table.rows.push_back(std::move(row));
    }
    offset += summary.windows;

    out.records.push_back(std::move(summary));
    out.beats.push_back(std::move(beats));
  }
  return out;
}

std::string format_drop_log(const Extraction& e) {
  std::string s = "participant_id,record,beats,windows,kept,dropped_too_few_beats,dropped_undefined_feature\n";
  DropCounts total;
  std::size_t beats = 0;
  int windows = 0, kept = 0;
  for (std::size_t k = 0; k < e.records.size(); ++k) {
    const auto& r = e.records[k];
    s += r.participant_id + "," + std::to_string(k) + "," + std::to_string(r.beats) + "," +
         std::to_string(r.windows) + "," + std::to_string(r.kept) + "," +
         std::to_string(r.drops.too_few_beats) + "," + std::to_string(r.drops.undefined_feature) + "\n";
    total += r.drops;
    beats += r.beats;
    windows += r.windows;
    kept += r.kept;
  }
  s += "TOTAL,," + std::to_string(beats) + "," + std::to_string(windows) + "," + std::to_string(kept) + "," +
       std::to_string(total.too_few_beats) + "," + std::to_string(total.undefined_feature) + "\n";
  return s;
}

TuneResult train_model(const FeatureTable& table, const SplitPlan& plan, ModelKind kind,
                       std::uint64_t root_seed, bool tune_grid, int n_threads) {
  const auto model_seed = stage_seed(root_seed, model_stage(plan.task, kind));
  auto grid = default_grid(kind, model_seed);
  for (auto& c : grid)
    if (auto* f = std::get_if<ForestConfig>(&c)) f->n_threads = n_threads;
  if (tune_grid) return tune(table, plan, grid, stage_seed(root_seed, tune_stage(plan.task, kind)));

  ModelConfig config;
  switch (kind) {
    case ModelKind::Logistic: config = LogisticConfig{.seed = model_seed}; break;
    case ModelKind::Tree: config = TreeConfig{.seed = model_seed}; break;
    case ModelKind::Forest: config = ForestConfig{.seed = model_seed, .n_threads = n_threads}; break;
  }
  TuneResult r;
  r.best = config;
  r.model = fit(make_dataset(table, plan.train, plan.task, plan.label_map), table.names,
                plan.label_map, config);
  return r;
}

namespace {

const ShapSummary* find_shap(const std::vector<ShapSummary>& shap, Task t, ModelKind k) {
  for (const auto& s : shap)
    if (s.task == t && s.kind == k) return &s;
  return nullptr;
}

std::string top_features(const ShapSummary* s, std::size_t n) {
  if (!s) return "";
  std::string out;
  for (std::size_t r = 0; r < std::min(n, s->ranking.size()); ++r)
    out += (r ? ";" : "") + s->feature_names[s->ranking[r]];
  return out;
}

// Index of the report with the highest macro-F1 within each task.
std::map<Task, std::size_t> best_per_task(const std::vector<EvalReport>& reports) {
  std::map<Task, std::size_t> best;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto it = best.find(reports[i].task);
    if (it == best.end() || reports[i].f1_macro > reports[it->second].f1_macro)
      best[reports[i].task] = i;
  }
  return best;
}

}  // namespace

std::string format_summary_csv(const std::vector<EvalReport>& reports,
                               const std::vector<ShapSummary>& shap) {
  using text::format_double;
  const auto best = best_per_task(reports);
  std::string s =
      "task,model,best,n_test,accuracy,precision_macro,recall_macro,f1_macro,roc_auc,"
      "ref_accuracy,ref_precision,ref_f1,delta_accuracy,delta_precision,delta_f1,top_features\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    auto r = reports[i];
    if (!r.reference) reference_compare(r);
    const auto& c = *r.reference;
    s += std::string(to_string(r.task)) + "," + std::string(to_string(r.kind)) + "," +
         (best.at(r.task) == i ? "1" : "0") + "," + std::to_string(r.n_test) + "," +
         format_double(r.accuracy) + "," + format_double(r.precision_macro) + "," +
         format_double(r.recall_macro) + "," + format_double(r.f1_macro) + "," +
         (r.roc_auc ? format_double(*r.roc_auc) : "") + "," + format_double(c.reference.accuracy) +
         "," + format_double(c.reference.precision) + "," + format_double(c.reference.f1) + "," +
         format_double(c.delta_accuracy) + "," + format_double(c.delta_precision) + "," +
         format_double(c.delta_f1) + "," + top_features(find_shap(shap, r.task, r.kind), 3) + "\n";
  }
  return s;
}

std::string format_summary_markdown(const std::vector<EvalReport>& reports,
                                    const std::vector<ShapSummary>& shap) {
  const auto best = best_per_task(reports);
  auto f3 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  auto signed3 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.3f", v);
    return std::string(buf);
  };
  std::ostringstream o;
  o << "| task | model | acc | prec | rec | F1 | AUC | ref acc/prec/F1 | delta acc/prec/F1 | top SHAP |\n";
  o << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    auto r = reports[i];
    if (!r.reference) reference_compare(r);
    const auto& c = *r.reference;
    o << "| " << to_string(r.task) << " | " << to_string(r.kind) << (best.at(r.task) == i ? " *" : "")
      << " | " << f3(r.accuracy) << " | " << f3(r.precision_macro) << " | " << f3(r.recall_macro)
      << " | " << f3(r.f1_macro) << " | " << (r.roc_auc ? f3(*r.roc_auc) : "n/a") << " | "
      << f3(c.reference.accuracy) << "/" << f3(c.reference.precision) << "/" << f3(c.reference.f1)
      << " | " << signed3(c.delta_accuracy) << "/" << signed3(c.delta_precision) << "/"
      << signed3(c.delta_f1) << " | " << top_features(find_shap(shap, r.task, r.kind), 3) << " |\n";
  }
  o << "\n* best macro-F1 within the task. Multiclass AUC is one-vs-rest macro.\n";
  return o.str();
}

int exit_code_for(const std::exception& e) {
  return dynamic_cast<const InputError*>(&e) ? 2 : 3;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, std::string_view content) {
    const auto path = dir_ / name;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    text::write_file(path.string(), content);
    files_.emplace_back(name, fnv1a64(content));
  }

  const std::vector<std::pair<std::string, std::uint64_t>>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::uint64_t>> files_;
};

std::string artifact_stem(Task t, ModelKind k) {
  return std::string(to_string(t)) + "_" + std::string(to_string(k));
}

}  // namespace

void run_audit(const RunConfig& config, const std::string& out_dir, std::ostream& log, int n_threads) {
  validate(config);
  fs::create_directories(out_dir);
  fs::remove(fs::path(out_dir) / "FAILED");
  ArtifactWriter out{fs::path(out_dir)};
  json seeds = json::object();
  seeds["root"] = config.seed;

  try {
    const auto config_text = format_run_config(config);
    out.write("config.json", config_text);
    if (config.manifest_path) out.write("input_manifest.json", text::read_file(*config.manifest_path));

    log << "loading records\n";
    const auto records = load_records(config);
    log << "extracting features from " << records.size() << " records\n";
    const auto extraction = extract_features(records, config.features);
    out.write("features.csv", format_feature_csv(extraction.table));
    out.write("drops.csv", format_drop_log(extraction));
    for (std::size_t k = 0; k < extraction.records.size(); ++k)
      out.write("annotations/" + extraction.records[k].annotation_file,
                format_annotations_csv(extraction.beats[k]));
    log << "feature table: " << extraction.table.rows.size() << " windows\n";

    std::vector<EvalReport> reports;
    std::vector<ShapSummary> summaries;
    for (const auto task : config.tasks) {
      const auto split_seed = stage_seed(config.seed, split_stage(task));
      seeds[split_stage(task)] = split_seed;
      const auto plan = make_split(extraction.table, task, split_seed);
      out.write("split_" + std::string(to_string(task)) + ".json",
                format_plan_json(plan, extraction.table));
      for (const auto& w : plan.warnings) log << "warning: " << to_string(task) << ": " << w << "\n";

      for (const auto kind : config.models) {
        const auto stem = artifact_stem(task, kind);
        log << "training " << stem << "\n";
        seeds[model_stage(task, kind)] = stage_seed(config.seed, model_stage(task, kind));
        seeds[tune_stage(task, kind)] = stage_seed(config.seed, tune_stage(task, kind));
        seeds[explain_stage(task, kind)] = stage_seed(config.seed, explain_stage(task, kind));

        const auto trained = train_model(extraction.table, plan, kind, config.seed, config.tune, n_threads);
        out.write("model_" + stem + ".json", format_model_json(trained.model));
        if (config.tune) {
          json t = {{"cv_f1", trained.cv_f1},
                    {"best_index", trained.best_index},
                    {"warnings", trained.warnings}};
          out.write("tuning_" + stem + ".json", t.dump(2) + "\n");
        }

        auto report = evaluate(trained.model, extraction.table, plan);
        reference_compare(report);
        out.write("eval_" + stem + ".json", format_report_json(report));
        log << "  accuracy " << report.accuracy << ", macro-F1 " << report.f1_macro << "\n";

        ShapSummaryConfig sc;
        sc.scale = config.shap_scale;
        sc.max_points = config.shap_max_points;
        sc.background_size = config.shap_background;
        sc.seed = stage_seed(config.seed, explain_stage(task, kind));
        const auto summary = shap_summary(trained.model, extraction.table, plan, sc);
        out.write("shap_" + stem + ".json", format_summary_json(summary));
        out.write("shap_" + stem + ".csv", format_beeswarm_csv(summary));
        out.write("shap_" + stem + ".svg", render_summary_svg(summary));

        reports.push_back(std::move(report));
        summaries.push_back(summary);
      }
    }

    std::string rows = report_csv_header();
    for (const auto& r : reports) rows += format_report_csv_row(r);
    out.write("evaluation.csv", rows);
    out.write("summary.csv", format_summary_csv(reports, summaries));
    out.write("summary.md", format_summary_markdown(reports, summaries));

    json files = json::array();
    for (const auto& [name, hash] : out.files()) files.push_back({{"file", name}, {"fnv1a64", hex64(hash)}});
    json manifest = {{"config_hash", hex64(fnv1a64(config_text))},
                     {"seeds", seeds},
                     {"files", files},
                     {"created_utc", utc_timestamp()}};
    text::write_file((out.dir() / "MANIFEST").string(), manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    text::write_file((out.dir() / "FAILED").string(), std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace ecgreid

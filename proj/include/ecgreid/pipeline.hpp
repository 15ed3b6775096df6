#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgreid/cohort.hpp"
#include "ecgreid/evaluate.hpp"
#include "ecgreid/explain.hpp"
#include "ecgreid/features.hpp"
#include "ecgreid/filter.hpp"
#include "ecgreid/models.hpp"
#include "ecgreid/synth.hpp"

namespace ecgreid {

struct FeatureOptions {
  FilterSpec filter;
  double window_s = 10.0;
  bool all_pairs = false;
};

/// Everything that determines a run's numeric artifacts. The output directory
/// and thread count are deliberately not part of it.
struct RunConfig {
  std::optional<std::string> manifest_path;
  std::optional<SyntheticPopulationConfig> synthetic;
  FeatureOptions features;
  std::vector<Task> tasks{Task::Gender, Task::AgeGroup, Task::ParticipantId};
  std::vector<ModelKind> models{ModelKind::Logistic, ModelKind::Tree, ModelKind::Forest};
  std::uint64_t seed = 42;
  bool tune = true;
  ShapScale shap_scale = ShapScale::Probability;
  std::size_t shap_max_points = 500;
  std::size_t shap_background = 128;
};

/// Throws ConfigError for an invalid combination (no input, both inputs, ...).
void validate(const RunConfig& config);
std::string format_run_config(const RunConfig& config);
RunConfig parse_run_config(std::string_view json_text, const std::string& source = "config");

/// Seed of a named stage under the root seed, e.g. "split/gender" or
/// "model/gender/forest".
std::uint64_t stage_seed(std::uint64_t root, std::string_view stage);
std::string split_stage(Task task);
std::string model_stage(Task task, ModelKind kind);
std::string tune_stage(Task task, ModelKind kind);
std::string explain_stage(Task task, ModelKind kind);

/// Records from the synthetic generator or the manifest.
std::vector<EcgRecord> load_records(const RunConfig& config);

struct RecordSummary {
  std::string participant_id;
  std::size_t beats = 0;
  int windows = 0;
  int kept = 0;
  DropCounts drops;
  std::string annotation_file;
};

struct Extraction {
  FeatureTable table;
  std::vector<RecordSummary> records;
  std::vector<std::vector<BeatAnnotation>> beats;  // per record
};

/// File name used for a record's exported annotations.
std::string annotation_file_name(std::size_t record_index, const std::string& participant_id);

/// Clean, delineate and window every record. With `annotations_dir` the
/// fiducial indices are read from previously exported annotation files instead
/// of being detected. Window indices continue across records of one participant.
Extraction extract_features(const std::vector<EcgRecord>& records, const FeatureOptions& options,
                            const std::optional<std::string>& annotations_dir = std::nullopt);

std::string format_drop_log(const Extraction& extraction);

/// Tunes (or fits the simplest grid point) for one model kind on a plan.
TuneResult train_model(const FeatureTable& table, const SplitPlan& plan, ModelKind kind,
                       std::uint64_t root_seed, bool tune_grid, int n_threads = 0);

/// Merges evaluation reports (and optional SHAP summaries) into a table.
std::string format_summary_csv(const std::vector<EvalReport>& reports,
                               const std::vector<ShapSummary>& shap);
std::string format_summary_markdown(const std::vector<EvalReport>& reports,
                                    const std::vector<ShapSummary>& shap);

/// 0 success, 2 input error, 3 any other stage failure.
int exit_code_for(const std::exception& e);

/// Runs every stage into `out_dir`. On failure a FAILED file holding the error
/// is written next to whatever artifacts were already produced, and the error
/// is rethrown.
void run_audit(const RunConfig& config, const std::string& out_dir, std::ostream& log,
               int n_threads = 0);

}  // namespace ecgreid

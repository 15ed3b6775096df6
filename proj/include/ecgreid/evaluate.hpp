#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgreid/cohort.hpp"
#include "ecgreid/metrics.hpp"
#include "ecgreid/models.hpp"

namespace ecgreid {

/// Published accuracy / macro precision / macro F1 for a task.
struct ReferenceValues {
  double accuracy = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

ReferenceValues reference_values(Task task);

struct ReferenceComparison {
  ReferenceValues reference;
  double delta_accuracy = 0.0;
  double delta_precision = 0.0;
  double delta_f1 = 0.0;
};

struct EvalReport {
  Task task = Task::Gender;
  ModelKind kind = ModelKind::Logistic;
  std::vector<std::string> class_labels;
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  /// Binary: positive class is class_labels[1]. Otherwise one-vs-rest macro
  /// over classes with both positives and negatives in the test set.
  std::optional<double> roc_auc;
  std::string auc_method;
  ConfusionMatrix confusion;
  long long n_test = 0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> warnings;
  std::optional<ReferenceComparison> reference;
};

/// Metrics from true class indices, predictions and class-probability rows.
EvalReport evaluate_predictions(Task task, ModelKind kind, std::vector<std::string> class_labels,
                                std::span<const int> truth, std::span<const int> predicted,
                                const std::vector<std::vector<double>>& proba);

/// Scores `model` on the plan's test rows. A test label the model never saw is
/// a SchemaError, as is an empty test side.
EvalReport evaluate(const TrainedModel& model, const FeatureTable& table, const SplitPlan& plan);

/// Attaches the published values and signed deltas (ours minus published).
void reference_compare(EvalReport& report);

std::string format_report_json(const EvalReport& report);
EvalReport parse_report_json(std::string_view json_text, const std::string& source = "report");

std::string report_csv_header();
std::string format_report_csv_row(const EvalReport& report);

}  // namespace ecgreid

#pragma once

#include <optional>
#include <span>
#include <vector>

namespace ecgreid {

/// Row = true class, column = predicted class.
using ConfusionMatrix = std::vector<std::vector<long long>>;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::size_t n_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

/// Per-class precision/recall/F1. A class never predicted gets precision 0.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

struct MacroMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Classes that took part in the macro averages (support > 0).
  std::vector<std::size_t> averaged_classes;
};

/// Accuracy = trace / total; macro averages over classes with support > 0.
MacroMetrics macro_metrics(const ConfusionMatrix& cm);

/// Area under the exact step ROC of `scores` for binary `positive` labels,
/// integrated with the trapezoidal rule, so tied scores count one half.
/// nullopt when either class is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const bool> positive);

}  // namespace ecgreid

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecgreid/cohort.hpp"
#include "ecgreid/models.hpp"

namespace ecgreid {

inline constexpr std::size_t kMaxShapFeatures = 16;

/// Probability of the explained class, or (logistic only) its linear score.
enum class ShapScale { Probability, Logit };

std::string_view to_string(ShapScale s);
ShapScale parse_shap_scale(std::string_view s);

/// Row-major background rows, each with the model's feature count.
using Background = std::vector<std::vector<double>>;

/// Model output f evaluated on one composed feature vector.
using ValueFunction = std::function<double(std::span<const double>)>;

/// v(S) for every coalition mask S over M features under the interventional
/// value function: mean over background rows b of f(x on S, b elsewhere).
std::vector<double> coalition_values(const ValueFunction& f, std::span<const double> x,
                                     const Background& background);

/// Shapley values from a full table of coalition values (size 2^M).
std::vector<double> shapley_from_coalitions(std::span<const double> v, std::size_t m);

struct ShapExplanation {
  std::vector<double> phi;
  double phi0 = 0.0;  // v(empty set): mean output over the background
  double fx = 0.0;    // model output at x on the chosen scale
  std::size_t explained_class = 0;
  std::vector<double> x;
  std::size_t background_size = 0;
};

/// Exact Shapley values of `model` at `x` for class `cls`. Trees and forests
/// use path enumeration to fill the coalition table; logistic models are
/// evaluated directly. Refuses more than 16 features.
ShapExplanation shap_exact(const TrainedModel& model, std::span<const double> x,
                           const Background& background, std::size_t cls,
                           ShapScale scale = ShapScale::Probability);

enum class ClassPolicy { Predicted, Fixed };

struct ShapSummaryConfig {
  ClassPolicy policy = ClassPolicy::Predicted;
  std::string fixed_class;  // label, used with ClassPolicy::Fixed
  ShapScale scale = ShapScale::Probability;
  std::size_t max_points = 500;
  std::size_t background_size = 128;
  std::uint64_t seed = 0;
};

struct BeeswarmPoint {
  std::size_t feature = 0;
  std::size_t row = 0;  // feature-table row
  double value = 0.0;
  double phi = 0.0;
};

struct ShapSummary {
  Task task = Task::Gender;
  ModelKind kind = ModelKind::Logistic;
  ShapScale scale = ShapScale::Probability;
  ClassPolicy policy = ClassPolicy::Predicted;
  std::string fixed_class;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::vector<double> mean_abs_phi;
  /// Feature indices by descending mean |phi|; ties keep column order.
  std::vector<std::size_t> ranking;
  std::vector<std::size_t> explained_rows;
  std::vector<std::pair<std::string, int>> explained_windows;  // (participant, window)
  std::size_t background_size = 0;
  double mean_phi0 = 0.0;
  std::vector<BeeswarmPoint> points;
};

/// Seeded subsample of up to `n` training rows.
Background sample_background(const FeatureTable& table, std::span<const std::size_t> train,
                             std::size_t n, std::uint64_t seed);

/// Explains every test row of `plan` (a seeded subsample when there are more
/// than max_points). Throws SchemaError on an empty test side.
ShapSummary shap_summary(const TrainedModel& model, const FeatureTable& table, const SplitPlan& plan,
                         const ShapSummaryConfig& config);

/// JSON without the beeswarm points; parse restores the rest except explained_rows.
std::string format_summary_json(const ShapSummary& s);
ShapSummary parse_summary_json(std::string_view json_text, const std::string& source = "shap");

/// feature,rank,value,phi with rank 1 = most important.
std::string format_beeswarm_csv(const ShapSummary& s);

struct BeeswarmRow {
  std::string feature;
  int rank = 0;
  double value = 0.0;
  double phi = 0.0;

  bool operator==(const BeeswarmRow&) const = default;
};
std::vector<BeeswarmRow> parse_beeswarm_csv(std::string_view csv, const std::string& source = "beeswarm");

std::string render_summary_svg(const ShapSummary& s);

}  // namespace ecgreid

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ecgreid/cohort.hpp"
#include "ecgreid/features.hpp"

namespace ecgreid {

enum class ModelKind { Logistic, Tree, Forest };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

/// Dense row-major design matrix with class indices.
struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * n_features, n_features};
  }
};

/// Rows `indices` of `table`, labelled for `task` against `label_map`.
/// Throws SchemaError for a label that is not in the map.
Dataset make_dataset(const FeatureTable& table, std::span<const std::size_t> indices, Task task,
                     const std::vector<std::string>& label_map);

/// Inverse-frequency weights n / (K_present * n_c); classes with no rows get 0.
std::vector<double> inverse_frequency_weights(const Dataset& data);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const Dataset& data);
  static Standardization identity(std::size_t n_features);
  void apply(std::span<const double> x, std::span<double> out) const;
};

struct LogisticConfig {
  double l2_lambda = 1e-3;
  int max_iter = 500;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  bool class_weighted = true;
};

struct TreeConfig {
  int max_depth = 8;
  int min_leaf = 5;
  /// Features tried per node; 0 or >= n_features means all of them.
  int mtry = 0;
  std::uint64_t seed = 0;
  bool class_weighted = true;
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 16;
  int min_leaf = 1;
  int mtry = 3;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  bool class_weighted = true;
  /// 0 = hardware concurrency. Results do not depend on it.
  int n_threads = 0;
};

using ModelConfig = std::variant<LogisticConfig, TreeConfig, ForestConfig>;

ModelKind kind_of(const ModelConfig& config);

struct LogisticParams {
  /// classes x features, in standardized units.
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

/// feature < 0 marks a leaf. Rows with x[feature] <= threshold go left.
/// Children always have larger indices than their parent.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> counts;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct TreeParams {
  std::vector<TreeNode> nodes;

  bool operator==(const TreeParams&) const = default;
  /// Index of the leaf reached by `x`.
  int leaf_for(std::span<const double> x) const;
};

struct ForestParams {
  std::vector<TreeParams> trees;
  std::vector<std::uint64_t> tree_seeds;
};

struct TrainedModel {
  ModelKind kind = ModelKind::Logistic;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;
  /// Logistic models standardize; trees split on raw units (identity here).
  Standardization standardization;
  ModelConfig config;
  std::variant<LogisticParams, TreeParams, ForestParams> params;
};

/// Weighted multinomial cross-entropy (mean over rows) plus (l2/2)||W||^2 over
/// standardized inputs. Parameters are laid out as K*M weights then K intercepts.
class LogisticObjective {
 public:
  LogisticObjective(const Dataset& standardized, std::vector<double> sample_weights,
                    double l2_lambda);

  std::size_t dimension() const { return k_ * (m_ + 1); }
  double value_and_gradient(std::span<const double> theta, std::span<double> grad) const;

 private:
  const Dataset& data_;
  std::vector<double> weights_;
  double weight_sum_;
  double lambda_;
  std::size_t k_, m_;
};

/// Throws DegenerateError when fewer than two classes occur in `data`.
TrainedModel fit_logistic(const Dataset& data, std::vector<std::string> feature_names,
                          std::vector<std::string> class_labels, const LogisticConfig& config);

/// Greedy CART on Gini impurity. Ties go to the lowest feature index, then the lowest threshold.
TrainedModel fit_tree(const Dataset& data, std::vector<std::string> feature_names,
                      std::vector<std::string> class_labels, const TreeConfig& config);

/// Bootstrap-aggregated CART trees with per-node feature subsampling. Tree t uses
/// seed child_seed(config.seed, t), so the trees do not depend on the schedule.
TrainedModel fit_forest(const Dataset& data, std::vector<std::string> feature_names,
                        std::vector<std::string> class_labels, const ForestConfig& config);

TrainedModel fit(const Dataset& data, std::vector<std::string> feature_names,
                 std::vector<std::string> class_labels, const ModelConfig& config);

/// Throws SchemaError unless `names` match the model's features exactly.
void check_features(const TrainedModel& model, const std::vector<std::string>& names);

std::vector<double> predict_proba(const TrainedModel& model, std::span<const double> x);
/// Argmax of predict_proba, first index on ties.
int predict(const TrainedModel& model, std::span<const double> x);
/// Linear predictor of one class (logistic models only).
double logistic_score(const TrainedModel& model, std::span<const double> x, std::size_t cls);
/// Normalised class distribution of one tree at `x`.
std::vector<double> tree_proba(const TreeParams& tree, std::span<const double> x);

std::string format_model_json(const TrainedModel& model);
TrainedModel parse_model_json(std::string_view json_text, const std::string& source = "model");

// ---- tuning ---------------------------------------------------------------

/// Default grids: logistic l2 in {1e-1, 1e-3, 0}; tree depth in {4, 8, 16};
/// forest trees in {50, 100} x depth in {8, 16}. Ordered simplest first.
std::vector<ModelConfig> default_grid(ModelKind kind, std::uint64_t seed);

struct TuneResult {
  ModelConfig best;
  std::vector<double> cv_f1;  // aligned with the grid
  std::size_t best_index = 0;
  TrainedModel model;         // refit on the whole train side
  std::vector<std::string> warnings;
};

/// 3-fold cross-validation on the plan's train side, scored by macro-F1.
/// Gender/age folds group whole participants; participant-ID folds are
/// contiguous blocks of each participant's windows. Ties go to the simpler
/// config (fewer trees, shallower, larger l2), whatever the grid order.
TuneResult tune(const FeatureTable& table, const SplitPlan& plan, const std::vector<ModelConfig>& grid,
                std::uint64_t seed);

}  // namespace ecgreid

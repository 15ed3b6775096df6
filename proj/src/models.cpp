#include "ecgreid/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/metrics.hpp"
#include "ecgreid/rng.hpp"

namespace ecgreid {

using nlohmann::json;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Tree: return "tree";
    case ModelKind::Forest: return "forest";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "tree") return ModelKind::Tree;
  if (s == "forest") return ModelKind::Forest;
  throw ConfigError("unknown model kind \"" + std::string(s) + "\"");
}

ModelKind kind_of(const ModelConfig& c) {
  return static_cast<ModelKind>(c.index());
}

Dataset make_dataset(const FeatureTable& table, std::span<const std::size_t> indices, Task task,
                     const std::vector<std::string>& label_map) {
  Dataset d;
  d.n_features = table.names.size();
  d.n_classes = label_map.size();
  std::map<std::string, int> class_index;
  for (std::size_t c = 0; c < label_map.size(); ++c) class_index[label_map[c]] = static_cast<int>(c);
  d.x.reserve(indices.size() * d.n_features);
  for (const auto r : indices) {
    const auto& row = table.rows.at(r);
    if (row.values.size() != d.n_features) throw SchemaError("feature row width mismatch");
    const auto label = task_label(row, task);
    const auto it = class_index.find(label);
    if (it == class_index.end()) throw SchemaError("label \"" + label + "\" not in the class map");
    d.x.insert(d.x.end(), row.values.begin(), row.values.end());
    d.y.push_back(it->second);
  }
  return d;
}

std::vector<double> inverse_frequency_weights(const Dataset& data) {
  std::vector<double> count(data.n_classes, 0.0);
  for (const int y : data.y) count[static_cast<std::size_t>(y)] += 1.0;
  const auto present = static_cast<double>(std::count_if(count.begin(), count.end(),
                                                         [](double c) { return c > 0.0; }));
  std::vector<double> w(data.n_classes, 0.0);
  for (std::size_t c = 0; c < w.size(); ++c)
    if (count[c] > 0.0) w[c] = static_cast<double>(data.rows()) / (present * count[c]);
  return w;
}

Standardization Standardization::fit(const Dataset& data) {
  const std::size_t m = data.n_features;
  const auto n = static_cast<double>(data.rows());
  Standardization s{std::vector<double>(m, 0.0), std::vector<double>(m, 1.0)};
  if (data.rows() == 0) return s;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += data.row(i)[j];
  for (auto& v : s.mean) v /= n;
  std::vector<double> var(m, 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = data.row(i)[j] - s.mean[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < m; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Standardization Standardization::identity(std::size_t n_features) {
  return {std::vector<double>(n_features, 0.0), std::vector<double>(n_features, 1.0)};
}

void Standardization::apply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
}

// ---- logistic regression --------------------------------------------------

LogisticObjective::LogisticObjective(const Dataset& standardized, std::vector<double> sample_weights,
                                     double l2_lambda)
    : data_(standardized),
      weights_(std::move(sample_weights)),
      weight_sum_(std::accumulate(weights_.begin(), weights_.end(), 0.0)),
      lambda_(l2_lambda),
      k_(standardized.n_classes),
      m_(standardized.n_features) {}

double LogisticObjective::value_and_gradient(std::span<const double> theta,
                                             std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double* w = theta.data();
  const double* b = theta.data() + k_ * m_;
  std::vector<double> z(k_);
  double loss = 0.0;
  for (std::size_t i = 0; i < data_.rows(); ++i) {
    const auto x = data_.row(i);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_; ++k) {
      double s = b[k];
      for (std::size_t j = 0; j < m_; ++j) s += w[k * m_ + j] * x[j];
      z[k] = s;
      zmax = std::max(zmax, s);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < k_; ++k) denom += std::exp(z[k] - zmax);
    const double log_denom = zmax + std::log(denom);
    const auto yi = static_cast<std::size_t>(data_.y[i]);
    const double si = weights_[i] / weight_sum_;
    loss += si * (log_denom - z[yi]);
    for (std::size_t k = 0; k < k_; ++k) {
      const double dz = si * (std::exp(z[k] - log_denom) - (k == yi ? 1.0 : 0.0));
      for (std::size_t j = 0; j < m_; ++j) grad[k * m_ + j] += dz * x[j];
      grad[k_ * m_ + k] += dz;
    }
  }
  for (std::size_t p = 0; p < k_ * m_; ++p) {
    loss += 0.5 * lambda_ * theta[p] * theta[p];
    grad[p] += lambda_ * theta[p];
  }
  return loss;
}

namespace {

struct LbfgsOutcome {
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Limited-memory BFGS with Armijo backtracking; falls back to steepest descent
// whenever the quasi-Newton direction is not a descent direction.
LbfgsOutcome minimize_lbfgs(const LogisticObjective& f, std::vector<double>& theta, int max_iter,
                            double tol) {
  constexpr std::size_t kHistory = 10;
  const std::size_t n = theta.size();
  std::vector<double> g(n), g_new(n), d(n), trial(n);
  double fx = f.value_and_gradient(theta, g);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsOutcome out;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    out.gradient_norm = inf_norm(g);
    if (out.gradient_norm < tol) {
      out.converged = true;
      return out;
    }
    // Two-loop recursion.
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t h = s_hist.size(); h-- > 0;) {
      alpha[h] = rho_hist[h] * dot(s_hist[h], d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[h] * y_hist[h][i];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (auto& v : d) v *= gamma;
    }
    for (std::size_t h = 0; h < s_hist.size(); ++h) {
      const double beta = rho_hist[h] * dot(y_hist[h], d);
      for (std::size_t i = 0; i < n; ++i) d[i] += s_hist[h][i] * (alpha[h] - beta);
    }
    for (auto& v : d) v = -v;
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = dot(g, d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(inf_norm(g), 1e-12)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] + step * d[i];
      f_new = f.value_and_gradient(trial, g_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return out;  // no further decrease representable

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial[i] - theta[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta = trial;
    g = g_new;
    fx = f_new;
  }
  out.gradient_norm = inf_norm(g);
  out.converged = out.gradient_norm < tol;
  return out;
}

Dataset standardized_copy(const Dataset& data, const Standardization& s) {
  Dataset out = data;
  for (std::size_t i = 0; i < data.rows(); ++i)
    s.apply(data.row(i), std::span<double>(out.x.data() + i * data.n_features, data.n_features));
  return out;
}

void require_two_classes(const Dataset& data) {
  std::vector<bool> seen(data.n_classes, false);
  for (const int y : data.y) seen[static_cast<std::size_t>(y)] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw DegenerateError("training data contains fewer than two classes");
}

void require_rows(const Dataset& data) {
  if (data.rows() == 0) throw DegenerateError("empty training set");
  if (data.n_classes == 0) throw DegenerateError("no class labels");
}

}  // namespace

TrainedModel fit_logistic(const Dataset& data, std::vector<std::string> feature_names,
                          std::vector<std::string> class_labels, const LogisticConfig& config) {
  require_rows(data);
  require_two_classes(data);
  if (config.l2_lambda < 0.0) throw ConfigError("l2_lambda must be non-negative");

  TrainedModel model;
  model.kind = ModelKind::Logistic;
  model.feature_names = std::move(feature_names);
  model.class_labels = std::move(class_labels);
  model.standardization = Standardization::fit(data);
  model.config = config;

  const Dataset z = standardized_copy(data, model.standardization);
  std::vector<double> sample_w(data.rows(), 1.0);
  if (config.class_weighted) {
    const auto cw = inverse_frequency_weights(data);
    for (std::size_t i = 0; i < data.rows(); ++i) sample_w[i] = cw[static_cast<std::size_t>(data.y[i])];
  }
  const LogisticObjective objective(z, std::move(sample_w), config.l2_lambda);
  std::vector<double> theta(objective.dimension(), 0.0);
  const auto outcome = minimize_lbfgs(objective, theta, config.max_iter, config.tol);

  LogisticParams p;
  const std::size_t k = data.n_classes, m = data.n_features;
  p.weights.assign(k, std::vector<double>(m));
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < m; ++j) p.weights[c][j] = theta[c * m + j];
  p.intercepts.assign(theta.begin() + static_cast<std::ptrdiff_t>(k * m), theta.end());
  p.iterations = outcome.iterations;
  p.converged = outcome.converged;
  p.gradient_norm = outcome.gradient_norm;
  model.params = std::move(p);
  return model;
}

// ---- CART -----------------------------------------------------------------

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, std::vector<double> sample_weight_of_class, int max_depth,
              int min_leaf, int mtry, Rng& rng)
      : data_(data),
        class_w_(std::move(sample_weight_of_class)),
        max_depth_(max_depth),
        min_leaf_(static_cast<std::size_t>(std::max(1, min_leaf))),
        mtry_(mtry <= 0 ? data.n_features
                        : std::min<std::size_t>(static_cast<std::size_t>(mtry), data.n_features)),
        rng_(rng) {}

  TreeParams build(std::vector<std::size_t> samples) {
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  std::vector<double> class_counts(const std::vector<std::size_t>& samples) const {
    std::vector<double> c(data_.n_classes, 0.0);
    for (const auto i : samples) {
      const auto y = static_cast<std::size_t>(data_.y[i]);
      c[y] += class_w_[y];
    }
    return c;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> f(data_.n_features);
    std::iota(f.begin(), f.end(), 0);
    if (mtry_ >= f.size()) return f;
    for (std::size_t i = 0; i < mtry_; ++i) {
      const auto j = i + static_cast<std::size_t>(rng_.below(f.size() - i));
      std::swap(f[i], f[j]);
    }
    f.resize(mtry_);
    std::sort(f.begin(), f.end());
    return f;
  }

  int grow(std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{});
    const auto counts = class_counts(samples);
    tree_.nodes[id].counts = counts;

    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto nonzero = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; });
    if (depth >= max_depth_ || nonzero <= 1 || samples.size() < 2 * min_leaf_) return id;

    double parent_sq = 0.0;
    for (const double c : counts) parent_sq += c * c;
    const double parent_score = parent_sq / total;

    double best_score = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = samples;
    std::vector<double> left(data_.n_classes), right(data_.n_classes);

    for (const std::size_t f : candidate_features()) {
      auto value = [&](std::size_t i) { return data_.x[i * data_.n_features + f]; };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
      std::fill(left.begin(), left.end(), 0.0);
      right = counts;
      double wl = 0.0, wr = total, sq_l = 0.0, sq_r = parent_sq;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const auto y = static_cast<std::size_t>(data_.y[order[pos]]);
        const double w = class_w_[y];
        sq_l += (left[y] + w) * (left[y] + w) - left[y] * left[y];
        sq_r += (right[y] - w) * (right[y] - w) - right[y] * right[y];
        left[y] += w;
        right[y] -= w;
        wl += w;
        wr -= w;
        const std::size_t n_left = pos + 1;
        if (n_left < min_leaf_ || order.size() - n_left < min_leaf_) continue;
        const double lo = value(order[pos]), hi = value(order[pos + 1]);
        if (!(lo < hi)) continue;
        // Weighted Gini decrease up to a constant: sum c^2/W over the children.
        const double score = sq_l / wl + sq_r / wr;
        if (best_feature < 0 || score > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0 || !(best_score - parent_score > 1e-12 * std::max(1.0, parent_score)))
      return id;

    std::vector<std::size_t> l, r;
    for (const auto i : samples)
      (data_.x[i * data_.n_features + static_cast<std::size_t>(best_feature)] <= best_threshold ? l : r)
          .push_back(i);
    samples.clear();
    samples.shrink_to_fit();

    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const int left_id = grow(l, depth + 1);
    tree_.nodes[id].left = left_id;
    const int right_id = grow(r, depth + 1);
    tree_.nodes[id].right = right_id;
    return id;
  }

  const Dataset& data_;
  std::vector<double> class_w_;
  int max_depth_;
  std::size_t min_leaf_;
  std::size_t mtry_;
  Rng& rng_;
  TreeParams tree_;
};

std::vector<double> tree_class_weights(const Dataset& data, bool weighted) {
  return weighted ? inverse_frequency_weights(data) : std::vector<double>(data.n_classes, 1.0);
}

void check_tree_config(int max_depth, int min_leaf) {
  if (max_depth < 0) throw ConfigError("max_depth must be non-negative");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
}

}  // namespace

int TreeParams::leaf_for(std::span<const double> x) const {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(node)];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return node;
}

TrainedModel fit_tree(const Dataset& data, std::vector<std::string> feature_names,
                      std::vector<std::string> class_labels, const TreeConfig& config) {
  require_rows(data);
  check_tree_config(config.max_depth, config.min_leaf);
  TrainedModel model;
  model.kind = ModelKind::Tree;
  model.feature_names = std::move(feature_names);
  model.class_labels = std::move(class_labels);
  model.standardization = Standardization::identity(data.n_features);
  model.config = config;

  Rng rng(config.seed);
  TreeBuilder builder(data, tree_class_weights(data, config.class_weighted), config.max_depth,
                      config.min_leaf, config.mtry, rng);
  std::vector<std::size_t> all(data.rows());
  std::iota(all.begin(), all.end(), 0);
  model.params = builder.build(std::move(all));
  return model;
}

TrainedModel fit_forest(const Dataset& data, std::vector<std::string> feature_names,
                        std::vector<std::string> class_labels, const ForestConfig& config) {
  require_rows(data);
  check_tree_config(config.max_depth, config.min_leaf);
  if (config.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  TrainedModel model;
  model.kind = ModelKind::Forest;
  model.feature_names = std::move(feature_names);
  model.class_labels = std::move(class_labels);
  model.standardization = Standardization::identity(data.n_features);
  model.config = config;

  const auto n_trees = static_cast<std::size_t>(config.n_trees);
  ForestParams forest;
  forest.trees.resize(n_trees);
  forest.tree_seeds.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) forest.tree_seeds[t] = child_seed(config.seed, t);
  const auto class_w = tree_class_weights(data, config.class_weighted);

  auto grow_tree = [&](std::size_t t) {
    Rng rng(forest.tree_seeds[t]);
    std::vector<std::size_t> samples(data.rows());
    if (config.bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(rng.below(data.rows()));
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(data, class_w, config.max_depth, config.min_leaf, config.mtry, rng);
    forest.trees[t] = builder.build(std::move(samples));
  };

  std::size_t threads = config.n_threads > 0 ? static_cast<std::size_t>(config.n_threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < n_trees; ++t) grow_tree(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < n_trees;) grow_tree(t);
      });
    for (auto& th : pool) th.join();
  }
  model.params = std::move(forest);
  return model;
}

TrainedModel fit(const Dataset& data, std::vector<std::string> feature_names,
                 std::vector<std::string> class_labels, const ModelConfig& config) {
  return std::visit(
      [&](const auto& c) -> TrainedModel {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, LogisticConfig>)
          return fit_logistic(data, std::move(feature_names), std::move(class_labels), c);
        else if constexpr (std::is_same_v<C, TreeConfig>)
          return fit_tree(data, std::move(feature_names), std::move(class_labels), c);
        else
          return fit_forest(data, std::move(feature_names), std::move(class_labels), c);
      },
      config);
}

// ---- prediction -----------------------------------------------------------

void check_features(const TrainedModel& model, const std::vector<std::string>& names) {
  if (names != model.feature_names) {
    std::string want, got;
    for (const auto& n : model.feature_names) want += (want.empty() ? "" : ",") + n;
    for (const auto& n : names) got += (got.empty() ? "" : ",") + n;
    throw SchemaError("feature mismatch: model expects [" + want + "], got [" + got + "]");
  }
}

std::vector<double> tree_proba(const TreeParams& tree, std::span<const double> x) {
  const auto& counts = tree.nodes[static_cast<std::size_t>(tree.leaf_for(x))].counts;
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> p(counts.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = counts[c] / total;
  return p;
}

double logistic_score(const TrainedModel& model, std::span<const double> x, std::size_t cls) {
  const auto& p = std::get<LogisticParams>(model.params);
  double s = p.intercepts.at(cls);
  for (std::size_t j = 0; j < x.size(); ++j)
    s += p.weights[cls][j] * (x[j] - model.standardization.mean[j]) / model.standardization.scale[j];
  return s;
}

std::vector<double> predict_proba(const TrainedModel& model, std::span<const double> x) {
  if (x.size() != model.feature_names.size())
    throw SchemaError("expected " + std::to_string(model.feature_names.size()) + " features, got " +
                      std::to_string(x.size()));
  const std::size_t k = model.class_labels.size();
  switch (model.kind) {
    case ModelKind::Logistic: {
      std::vector<double> z(k);
      for (std::size_t c = 0; c < k; ++c) z[c] = logistic_score(model, x, c);
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (auto& v : z) sum += (v = std::exp(v - zmax));
      for (auto& v : z) v /= sum;
      return z;
    }
    case ModelKind::Tree:
      return tree_proba(std::get<TreeParams>(model.params), x);
    case ModelKind::Forest: {
      const auto& f = std::get<ForestParams>(model.params);
      std::vector<double> p(k, 0.0);
      for (const auto& t : f.trees) {
        const auto tp = tree_proba(t, x);
        for (std::size_t c = 0; c < k; ++c) p[c] += tp[c];
      }
      for (auto& v : p) v /= static_cast<double>(f.trees.size());
      return p;
    }
  }
  return {};
}

int predict(const TrainedModel& model, std::span<const double> x) {
  const auto p = predict_proba(model, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

// ---- JSON -----------------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& config) {
  return std::visit(
      [](const auto& c) -> json {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, LogisticConfig>)
          return {{"l2_lambda", c.l2_lambda}, {"max_iter", c.max_iter}, {"tol", c.tol},
                  {"seed", c.seed}, {"class_weighted", c.class_weighted}};
        else if constexpr (std::is_same_v<C, TreeConfig>)
          return {{"max_depth", c.max_depth}, {"min_leaf", c.min_leaf}, {"mtry", c.mtry},
                  {"seed", c.seed}, {"class_weighted", c.class_weighted}};
        else
          return {{"n_trees", c.n_trees}, {"max_depth", c.max_depth}, {"min_leaf", c.min_leaf},
                  {"mtry", c.mtry}, {"bootstrap", c.bootstrap}, {"seed", c.seed},
                  {"class_weighted", c.class_weighted}};
      },
      config);
}

ModelConfig config_from_json(ModelKind kind, const json& j) {
  switch (kind) {
    case ModelKind::Logistic:
      return LogisticConfig{j.at("l2_lambda").get<double>(), j.at("max_iter").get<int>(),
                            j.at("tol").get<double>(), j.at("seed").get<std::uint64_t>(),
                            j.at("class_weighted").get<bool>()};
    case ModelKind::Tree:
      return TreeConfig{j.at("max_depth").get<int>(), j.at("min_leaf").get<int>(),
                        j.at("mtry").get<int>(), j.at("seed").get<std::uint64_t>(),
                        j.at("class_weighted").get<bool>()};
    case ModelKind::Forest: {
      ForestConfig c;
      c.n_trees = j.at("n_trees").get<int>();
      c.max_depth = j.at("max_depth").get<int>();
      c.min_leaf = j.at("min_leaf").get<int>();
      c.mtry = j.at("mtry").get<int>();
      c.bootstrap = j.at("bootstrap").get<bool>();
      c.seed = j.at("seed").get<std::uint64_t>();
      c.class_weighted = j.at("class_weighted").get<bool>();
      return c;
    }
  }
  throw SchemaError("unknown model kind");
}

json tree_to_json(const TreeParams& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes)
    nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                     {"right", n.right}, {"counts", n.counts}});
  return nodes;
}

TreeParams tree_from_json(const json& j, std::size_t n_features, std::size_t n_classes) {
  TreeParams t;
  for (const auto& n : j) {
    TreeNode node{n.at("feature").get<int>(), n.at("threshold").get<double>(),
                  n.at("left").get<int>(), n.at("right").get<int>(),
                  n.at("counts").get<std::vector<double>>()};
    t.nodes.push_back(std::move(node));
  }
  if (t.nodes.empty()) throw SchemaError("tree without nodes");
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (n.counts.size() != n_classes) throw SchemaError("tree node class-count width mismatch");
    if (n.is_leaf()) {
      if (std::accumulate(n.counts.begin(), n.counts.end(), 0.0) <= 0.0)
        throw SchemaError("leaf with no weight");
      continue;
    }
    const auto ok_child = [&](int c) {
      return c > static_cast<int>(i) && c < static_cast<int>(t.nodes.size());
    };
    if (static_cast<std::size_t>(n.feature) >= n_features || !ok_child(n.left) || !ok_child(n.right))
      throw SchemaError("malformed tree node " + std::to_string(i));
  }
  return t;
}

}  // namespace

std::string format_model_json(const TrainedModel& model) {
  json j;
  j["kind"] = std::string(to_string(model.kind));
  j["feature_names"] = model.feature_names;
  j["class_labels"] = model.class_labels;
  j["standardization"] = {{"mean", model.standardization.mean},
                          {"scale", model.standardization.scale}};
  j["config"] = config_to_json(model.config);
  switch (model.kind) {
    case ModelKind::Logistic: {
      const auto& p = std::get<LogisticParams>(model.params);
      j["params"] = {{"weights", p.weights},       {"intercepts", p.intercepts},
                     {"iterations", p.iterations}, {"converged", p.converged},
                     {"gradient_norm", p.gradient_norm}};
      break;
    }
    case ModelKind::Tree:
      j["params"] = {{"nodes", tree_to_json(std::get<TreeParams>(model.params))}};
      break;
    case ModelKind::Forest: {
      const auto& f = std::get<ForestParams>(model.params);
      json trees = json::array();
      for (const auto& t : f.trees) trees.push_back(tree_to_json(t));
      j["params"] = {{"trees", trees}, {"tree_seeds", f.tree_seeds}};
      break;
    }
  }
  return j.dump(1) + "\n";
}

TrainedModel parse_model_json(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
  try {
    TrainedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.scale = j.at("standardization").at("scale").get<std::vector<double>>();
    m.config = config_from_json(m.kind, j.at("config"));
    const std::size_t nf = m.feature_names.size(), nc = m.class_labels.size();
    if (m.standardization.mean.size() != nf || m.standardization.scale.size() != nf)
      throw SchemaError(source + ": standardization width mismatch");
    const auto& p = j.at("params");
    switch (m.kind) {
      case ModelKind::Logistic: {
        LogisticParams lp;
        lp.weights = p.at("weights").get<std::vector<std::vector<double>>>();
        lp.intercepts = p.at("intercepts").get<std::vector<double>>();
        lp.iterations = p.at("iterations").get<int>();
        lp.converged = p.at("converged").get<bool>();
        lp.gradient_norm = p.at("gradient_norm").get<double>();
        if (lp.weights.size() != nc || lp.intercepts.size() != nc)
          throw SchemaError(source + ": logistic class count mismatch");
        for (const auto& w : lp.weights)
          if (w.size() != nf) throw SchemaError(source + ": logistic weight width mismatch");
        m.params = std::move(lp);
        break;
      }
      case ModelKind::Tree:
        m.params = tree_from_json(p.at("nodes"), nf, nc);
        break;
      case ModelKind::Forest: {
        ForestParams f;
        for (const auto& t : p.at("trees")) f.trees.push_back(tree_from_json(t, nf, nc));
        f.tree_seeds = p.at("tree_seeds").get<std::vector<std::uint64_t>>();
        if (f.trees.empty() || f.tree_seeds.size() != f.trees.size())
          throw SchemaError(source + ": forest tree/seed mismatch");
        m.params = std::move(f);
        break;
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

// ---- tuning ---------------------------------------------------------------

std::vector<ModelConfig> default_grid(ModelKind kind, std::uint64_t seed) {
  std::vector<ModelConfig> grid;
  switch (kind) {
    case ModelKind::Logistic:
      for (const double l : {1e-1, 1e-3, 0.0}) {
        LogisticConfig c;
        c.l2_lambda = l;
        c.seed = seed;
        grid.emplace_back(c);
      }
      break;
    case ModelKind::Tree:
      for (const int d : {4, 8, 16}) {
        TreeConfig c;
        c.max_depth = d;
        c.seed = seed;
        grid.emplace_back(c);
      }
      break;
    case ModelKind::Forest:
      for (const int n : {50, 100})
        for (const int d : {8, 16}) {
          ForestConfig c;
          c.n_trees = n;
          c.max_depth = d;
          c.seed = seed;
          grid.emplace_back(c);
        }
      break;
  }
  return grid;
}

namespace {

// Lower is simpler: fewer trees, then shallower, then stronger regularisation.
std::tuple<int, int, double> simplicity_key(const ModelConfig& config) {
  return std::visit(
      [](const auto& c) -> std::tuple<int, int, double> {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, LogisticConfig>)
          return {0, 0, -c.l2_lambda};
        else if constexpr (std::is_same_v<C, TreeConfig>)
          return {1, c.max_depth, 0.0};
        else
          return {c.n_trees, c.max_depth, 0.0};
      },
      config);
}

}  // namespace

TuneResult tune(const FeatureTable& table, const SplitPlan& plan, const std::vector<ModelConfig>& grid,
                std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("tuning grid is empty");
  for (const auto& c : grid)
    if (kind_of(c) != kind_of(grid.front())) throw ConfigError("tuning grid mixes model kinds");
  if (plan.train.empty()) throw DegenerateError("empty training side");

  TuneResult result;
  constexpr int kFolds = 3;
  std::vector<int> fold(plan.train.size(), 0);

  std::map<std::string, std::vector<std::size_t>> by_participant;  // positions in plan.train
  for (std::size_t i = 0; i < plan.train.size(); ++i)
    by_participant[table.rows[plan.train[i]].participant_id].push_back(i);
  Rng rng(seed);

  if (plan.task == Task::ParticipantId) {
    for (auto& [id, pos] : by_participant) {
      std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
        return table.rows[plan.train[a]].window_index < table.rows[plan.train[b]].window_index;
      });
      for (std::size_t k = 0; k < pos.size(); ++k)
        fold[pos[k]] = static_cast<int>(k * kFolds / pos.size());
    }
  } else if (static_cast<int>(by_participant.size()) >= kFolds) {
    std::vector<std::string> ids;
    for (const auto& [id, pos] : by_participant) ids.push_back(id);
    rng.shuffle(ids);
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (const auto p : by_participant[ids[k]]) fold[p] = static_cast<int>(k % kFolds);
  } else {
    result.warnings.push_back("fewer than 3 training participants; using record-level folds");
    std::vector<std::size_t> order(plan.train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t k = 0; k < order.size(); ++k) fold[order[k]] = static_cast<int>(k % kFolds);
  }

  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return simplicity_key(grid[a]) < simplicity_key(grid[b]);
  });

  result.cv_f1.assign(grid.size(), 0.0);
  for (const std::size_t g : order) {
    double sum = 0.0;
    for (int f = 0; f < kFolds; ++f) {
      std::vector<std::size_t> tr, va;
      for (std::size_t i = 0; i < plan.train.size(); ++i)
        (fold[i] == f ? va : tr).push_back(plan.train[i]);
      if (tr.empty() || va.empty()) continue;
      const auto train_data = make_dataset(table, tr, plan.task, plan.label_map);
      const auto val_data = make_dataset(table, va, plan.task, plan.label_map);
      try {
        const auto model = fit(train_data, table.names, plan.label_map, grid[g]);
        std::vector<int> pred(val_data.rows());
        for (std::size_t i = 0; i < val_data.rows(); ++i) pred[i] = predict(model, val_data.row(i));
        sum += macro_metrics(confusion_matrix(val_data.y, pred, val_data.n_classes)).f1;
      } catch (const DegenerateError& e) {
        result.warnings.push_back("fold " + std::to_string(f) + " scored 0: " + e.what());
      }
    }
    result.cv_f1[g] = sum / kFolds;
  }

  result.best_index = order.front();
  for (const std::size_t g : order)
    if (result.cv_f1[g] > result.cv_f1[result.best_index] + 1e-12) result.best_index = g;
  result.best = grid[result.best_index];

  const auto train_data = make_dataset(table, plan.train, plan.task, plan.label_map);
  result.model = fit(train_data, table.names, plan.label_map, result.best);
  return result;
}

}  // namespace ecgreid

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgreid/error.hpp"
#include "ecgreid/models.hpp"
#include "ecgreid/rng.hpp"
#include "support.hpp"

using namespace ecgreid;
using testing_support::random_table;

namespace {

// Gaussian blobs, class c centred at 4*c on feature c % m.
Dataset blobs(Rng& rng, std::size_t n_per_class, std::size_t classes, std::size_t m, double spread = 0.5) {
  Dataset d;
  d.n_features = m;
  d.n_classes = classes;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t j = 0; j < m; ++j) d.x.push_back(spread * rng.normal() + (j == c % m ? 4.0 * (c + 1) : 0.0));
      d.y.push_back(static_cast<int>(c));
    }
  return d;
}

std::vector<std::string> names(std::size_t m) {
  std::vector<std::string> n;
  for (std::size_t j = 0; j < m; ++j) n.push_back("x" + std::to_string(j));
  return n;
}

std::vector<std::string> labels(std::size_t k) {
  std::vector<std::string> l;
  for (std::size_t c = 0; c < k; ++c) l.push_back("c" + std::to_string(c));
  return l;
}

double accuracy(const TrainedModel& model, const Dataset& d) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.rows(); ++i) hit += predict(model, d.row(i)) == d.y[i];
  return static_cast<double>(hit) / static_cast<double>(d.rows());
}

double gini(const std::vector<double>& c) {
  const double t = std::accumulate(c.begin(), c.end(), 0.0);
  double g = 1.0;
  for (const double v : c) g -= (v / t) * (v / t);
  return g;
}

// Exhaustive search for the best unweighted single split, lowest feature then
// lowest threshold on ties.
struct Split {
  int feature = -1;
  double threshold = 0;
};

Split brute_best_split(const Dataset& d) {
  Split best;
  double best_imp = 1e300;
  for (std::size_t f = 0; f < d.n_features; ++f) {
    std::vector<double> v;
    for (std::size_t i = 0; i < d.rows(); ++i) v.push_back(d.row(i)[f]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double thr = v[k] + (v[k + 1] - v[k]) / 2;
      std::vector<double> l(d.n_classes), r(d.n_classes);
      for (std::size_t i = 0; i < d.rows(); ++i) (d.row(i)[f] <= thr ? l : r)[d.y[i]] += 1;
      const double nl = std::accumulate(l.begin(), l.end(), 0.0), nr = std::accumulate(r.begin(), r.end(), 0.0);
      const double imp = (nl * gini(l) + nr * gini(r)) / (nl + nr);
      if (imp < best_imp - 1e-12) {
        best_imp = imp;
        best = {static_cast<int>(f), thr};
      }
    }
  }
  return best;
}

TrainedModel hand_tree(std::vector<TreeNode> nodes, std::size_t m) {
  TrainedModel model;
  model.kind = ModelKind::Tree;
  model.feature_names = names(m);
  model.class_labels = labels(nodes[0].counts.size());
  model.standardization = Standardization::identity(m);
  model.config = TreeConfig{};
  model.params = TreeParams{std::move(nodes)};
  return model;
}

}  // namespace

TEST(ModelKinds, Names) {
  for (const auto k : {ModelKind::Logistic, ModelKind::Tree, ModelKind::Forest})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("svm"), ConfigError);
  EXPECT_EQ(kind_of(ForestConfig{}), ModelKind::Forest);
}

TEST(Dataset, BuildAndWeights) {
  Rng rng(1);
  const auto t = random_table(rng, 4, 3, 2);
  const std::vector<std::size_t> idx{0, 4, 11};
  std::vector<std::string> ids{"p1000", "p1001", "p1002", "p1003"};
  const auto d = make_dataset(t, idx, Task::ParticipantId, ids);
  ASSERT_EQ(d.rows(), 3u);
  EXPECT_EQ(d.y, (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(d.row(2)[1], t.rows[11].values[1]);
  EXPECT_THROW(make_dataset(t, idx, Task::ParticipantId, {"p1000"}), SchemaError);

  Dataset w;
  w.n_features = 1;
  w.n_classes = 3;
  w.y = {0, 0, 0, 1};
  w.x = {0, 0, 0, 0};
  // n / (K_present * n_c) with K_present = 2.
  EXPECT_EQ(inverse_frequency_weights(w), (std::vector<double>{4.0 / 6.0, 2.0, 0.0}));
}

TEST(Standardization, PopulationMoments) {
  Dataset d;
  d.n_features = 2;
  d.n_classes = 1;
  d.x = {1, 5, 3, 5, 5, 5};
  d.y = {0, 0, 0};
  const auto s = Standardization::fit(d);
  EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(s.scale[0], std::sqrt(8.0 / 3.0));
  EXPECT_EQ(s.scale[1], 1.0);
  std::vector<double> out(2);
  s.apply(std::vector<double>{3, 7}, out);
  EXPECT_EQ(out, (std::vector<double>{0, 2}));
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto d = blobs(rng, 15, 3, 4, 2.0);
  std::vector<double> sw(d.rows());
  for (auto& w : sw) w = 0.5 + rng.uniform();
  for (const double lambda : {0.0, 0.3}) {
    LogisticObjective obj(d, sw, lambda);
    std::vector<double> theta(obj.dimension()), grad(obj.dimension()), tmp(obj.dimension());
    for (auto& v : theta) v = 0.3 * rng.normal();
    obj.value_and_gradient(theta, grad);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double h = 1e-6;
      auto p = theta, m = theta;
      p[k] += h;
      m[k] -= h;
      const double fd = (obj.value_and_gradient(p, tmp) - obj.value_and_gradient(m, tmp)) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[k]), 1e-5 * std::max(1.0, std::abs(grad[k]))) << k;
    }
  }
}

TEST(Logistic, SeparableBlobs) {
  Rng rng(3);
  const auto train = blobs(rng, 40, 3, 5);
  const auto test = blobs(rng, 20, 3, 5);
  const auto model = fit_logistic(train, names(5), labels(3), {});
  EXPECT_EQ(accuracy(model, train), 1.0);
  EXPECT_EQ(accuracy(model, test), 1.0);
  const auto& p = std::get<LogisticParams>(model.params);
  EXPECT_TRUE(p.converged);
  const auto proba = predict_proba(model, test.row(0));
  EXPECT_NEAR(std::accumulate(proba.begin(), proba.end(), 0.0), 1.0, 1e-12);
}

TEST(Logistic, DuplicatedRowsGiveTheSameFunction) {
  Rng rng(4);
  const auto d = blobs(rng, 20, 2, 3, 3.0);
  Dataset dd = d;
  dd.x.insert(dd.x.end(), d.x.begin(), d.x.end());
  dd.y.insert(dd.y.end(), d.y.begin(), d.y.end());
  LogisticConfig c;
  c.l2_lambda = 0.1;
  c.tol = 1e-10;
  const auto a = fit_logistic(d, names(3), labels(2), c);
  const auto b = fit_logistic(dd, names(3), labels(2), c);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto pa = predict_proba(a, d.row(i)), pb = predict_proba(b, d.row(i));
    EXPECT_NEAR(pa[1], pb[1], 1e-8);
  }
}

TEST(Logistic, AffineFeatureTransformInvariance) {
  Rng rng(5);
  const auto d = blobs(rng, 25, 3, 3, 2.0);
  Dataset t = d;
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) t.x[i * 3 + j] = 7.0 * t.x[i * 3 + j] - 3.0 + static_cast<double>(j);
  LogisticConfig c;
  c.tol = 1e-10;
  const auto a = fit_logistic(d, names(3), labels(3), c);
  const auto b = fit_logistic(t, names(3), labels(3), c);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto pa = predict_proba(a, d.row(i)), pb = predict_proba(b, t.row(i));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(pa[k], pb[k], 1e-7);
  }
}

TEST(Logistic, ZeroParametersPredictUniform) {
  TrainedModel m;
  m.kind = ModelKind::Logistic;
  m.feature_names = names(2);
  m.class_labels = labels(4);
  m.standardization = Standardization::identity(2);
  m.config = LogisticConfig{};
  LogisticParams p;
  p.weights.assign(4, std::vector<double>(2, 0.0));
  p.intercepts.assign(4, 0.0);
  m.params = p;
  EXPECT_EQ(predict_proba(m, std::vector<double>{3, -9}), std::vector<double>(4, 0.25));
  EXPECT_EQ(predict(m, std::vector<double>{3, -9}), 0);
  EXPECT_EQ(logistic_score(m, std::vector<double>{1, 1}, 2), 0.0);
}

TEST(Tree, RootSplitMatchesBruteForce) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    Dataset d;
    d.n_features = 1 + rng.below(3);
    d.n_classes = 2 + rng.below(2);
    const std::size_t n = 6 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d.n_features; ++j) d.x.push_back(static_cast<double>(rng.below(8)));
      d.y.push_back(static_cast<int>(rng.below(d.n_classes)));
    }
    if (std::adjacent_find(d.y.begin(), d.y.end(), std::not_equal_to<>()) == d.y.end()) continue;
    TreeConfig c;
    c.max_depth = 1;
    c.min_leaf = 1;
    c.class_weighted = false;
    const auto model = fit_tree(d, names(d.n_features), labels(d.n_classes), c);
    const auto& root = std::get<TreeParams>(model.params).nodes[0];
    const auto want = brute_best_split(d);
    EXPECT_EQ(root.feature, want.feature) << trial;
    if (want.feature >= 0) {
      EXPECT_EQ(root.threshold, want.threshold) << trial;
    }
  }
}

TEST(Tree, PureDataIsASingleLeaf) {
  Dataset d;
  d.n_features = 2;
  d.n_classes = 2;
  d.x = {1, 2, 3, 4, 5, 6};
  d.y = {1, 1, 1};
  const auto m = fit_tree(d, names(2), labels(2), {});
  const auto& t = std::get<TreeParams>(m.params);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_TRUE(t.nodes[0].is_leaf());
  EXPECT_EQ(predict(m, std::vector<double>{0, 0}), 1);
}

TEST(Tree, LeafCountsNormalise) {
  const auto m = hand_tree({TreeNode{-1, 0, -1, -1, {3, 1}}}, 1);
  EXPECT_EQ(predict_proba(m, std::vector<double>{0}), (std::vector<double>{0.75, 0.25}));
  EXPECT_EQ(predict(m, std::vector<double>{0}), 0);
  const auto tie = hand_tree({TreeNode{-1, 0, -1, -1, {2, 2}}}, 1);
  EXPECT_EQ(predict(tie, std::vector<double>{0}), 0);
  const auto split = hand_tree({TreeNode{0, 0.5, 1, 2, {1, 1}}, TreeNode{-1, 0, -1, -1, {1, 0}},
                                TreeNode{-1, 0, -1, -1, {0, 4}}},
                               1);
  EXPECT_EQ(predict(split, std::vector<double>{0.5}), 0);
  EXPECT_EQ(predict(split, std::vector<double>{0.6}), 1);
}

TEST(Tree, DeterministicAndStructurallyValid) {
  Rng rng(7);
  const auto d = blobs(rng, 30, 4, 4, 2.0);
  TreeConfig c;
  c.mtry = 2;
  c.seed = 9;
  const auto a = fit_tree(d, names(4), labels(4), c);
  const auto b = fit_tree(d, names(4), labels(4), c);
  EXPECT_EQ(std::get<TreeParams>(a.params), std::get<TreeParams>(b.params));
  const auto& nodes = std::get<TreeParams>(a.params).nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    EXPECT_GT(nodes[i].left, static_cast<int>(i));
    EXPECT_GT(nodes[i].right, static_cast<int>(i));
  }
  EXPECT_EQ(accuracy(a, d), accuracy(b, d));
}

TEST(Tree, AffineTransformKeepsTrainingPredictions) {
  Rng rng(8);
  const auto d = blobs(rng, 30, 3, 3, 2.0);
  Dataset t = d;
  for (auto& v : t.x) v = 4.0 * v + 11.0;
  const auto a = fit_tree(d, names(3), labels(3), {});
  const auto b = fit_tree(t, names(3), labels(3), {});
  for (std::size_t i = 0; i < d.rows(); ++i)
    EXPECT_EQ(predict_proba(a, d.row(i)), predict_proba(b, t.row(i)));
}

TEST(Forest, SingleFullTreeEqualsCart) {
  Rng rng(9);
  const auto d = blobs(rng, 25, 3, 4, 2.5);
  ForestConfig f;
  f.n_trees = 1;
  f.mtry = 4;
  f.bootstrap = false;
  f.max_depth = 6;
  f.min_leaf = 2;
  TreeConfig t;
  t.max_depth = 6;
  t.min_leaf = 2;
  const auto forest = fit_forest(d, names(4), labels(3), f);
  const auto tree = fit_tree(d, names(4), labels(3), t);
  EXPECT_EQ(std::get<ForestParams>(forest.params).trees[0], std::get<TreeParams>(tree.params));
}

TEST(Forest, ProbabilityIsMeanOfTrees) {
  Rng rng(10);
  const auto d = blobs(rng, 20, 3, 4, 3.0);
  ForestConfig f;
  f.n_trees = 7;
  f.seed = 3;
  const auto m = fit_forest(d, names(4), labels(3), f);
  const auto& p = std::get<ForestParams>(m.params);
  ASSERT_EQ(p.trees.size(), 7u);
  for (std::size_t t = 0; t < 7; ++t) EXPECT_EQ(p.tree_seeds[t], child_seed(3, t));
  for (std::size_t i = 0; i < d.rows(); i += 5) {
    std::vector<double> mean(3, 0.0);
    for (const auto& tree : p.trees) {
      const auto q = tree_proba(tree, d.row(i));
      for (std::size_t k = 0; k < 3; ++k) mean[k] += q[k] / 7.0;
    }
    const auto got = predict_proba(m, d.row(i));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], mean[k], 1e-12);
  }
}

TEST(Forest, AccurateOnBlobs) {
  Rng rng(11);
  const auto train = blobs(rng, 40, 5, 6, 1.5);
  const auto test = blobs(rng, 20, 5, 6, 1.5);
  ForestConfig f;
  f.n_trees = 50;
  EXPECT_GE(accuracy(fit_forest(train, names(6), labels(5), f), test), 0.95);
}

TEST(Forest, ThreadCountDoesNotChangeTheModel) {
  Rng rng(12);
  const auto d = blobs(rng, 20, 3, 5, 2.0);
  ForestConfig f;
  f.n_trees = 12;
  f.n_threads = 1;
  const auto a = fit_forest(d, names(5), labels(3), f);
  f.n_threads = 4;
  const auto b = fit_forest(d, names(5), labels(3), f);
  EXPECT_EQ(std::get<ForestParams>(a.params).trees, std::get<ForestParams>(b.params).trees);
}

TEST(Fit, SingleClassIsDegenerate) {
  Dataset d;
  d.n_features = 1;
  d.n_classes = 2;
  d.x = {1, 2, 3};
  d.y = {0, 0, 0};
  EXPECT_THROW(fit_logistic(d, names(1), labels(2), {}), DegenerateError);
  TreeConfig bad;
  bad.min_leaf = 0;
  d.y = {0, 1, 0};
  EXPECT_THROW(fit_tree(d, names(1), labels(2), bad), ConfigError);
}

TEST(Fit, FeatureNamesChecked) {
  Rng rng(13);
  const auto d = blobs(rng, 5, 2, 2);
  const auto m = fit(d, names(2), labels(2), TreeConfig{});
  EXPECT_NO_THROW(check_features(m, names(2)));
  EXPECT_THROW(check_features(m, {"x1", "x0"}), SchemaError);
  EXPECT_THROW(check_features(m, names(3)), SchemaError);
}

TEST(ModelJson, RoundTripIsBitIdentical) {
  Rng rng(14);
  const auto d = blobs(rng, 15, 3, 3, 2.0);
  ForestConfig f;
  f.n_trees = 5;
  for (const ModelConfig& c : std::vector<ModelConfig>{LogisticConfig{}, TreeConfig{}, f}) {
    const auto m = fit(d, names(3), labels(3), c);
    const auto json = format_model_json(m);
    const auto back = parse_model_json(json);
    EXPECT_EQ(format_model_json(back), json);
    EXPECT_EQ(back.kind, m.kind);
    for (std::size_t i = 0; i < d.rows(); ++i) EXPECT_EQ(predict_proba(back, d.row(i)), predict_proba(m, d.row(i)));
  }
  EXPECT_THROW(parse_model_json("{"), ParseError);
  auto bad = format_model_json(fit(d, names(3), labels(3), TreeConfig{}));
  bad.replace(bad.find("\"kind\""), 6, "\"kynd\"");
  EXPECT_ANY_THROW(parse_model_json(bad));
}

TEST(Tune, GridsAndSelection) {
  EXPECT_EQ(default_grid(ModelKind::Logistic, 0).size(), 3u);
  EXPECT_EQ(default_grid(ModelKind::Tree, 0).size(), 3u);
  EXPECT_EQ(default_grid(ModelKind::Forest, 0).size(), 4u);

  Rng rng(15);
  auto t = random_table(rng, 10, 6, 4);
  // Make gender learnable from f0.
  for (auto& r : t.rows) r.values[0] += r.gender == Gender::F ? 3.0 : -3.0;
  const auto plan = make_split(t, Task::Gender, 1);

  std::vector<ModelConfig> grid;
  for (const int depth : {16, 1, 4}) {
    TreeConfig c;
    c.max_depth = depth;
    grid.emplace_back(c);
  }
  const auto r = tune(t, plan, grid, 5);
  ASSERT_EQ(r.cv_f1.size(), 3u);
  const double best = *std::max_element(r.cv_f1.begin(), r.cv_f1.end());
  EXPECT_NEAR(r.cv_f1[r.best_index], best, 1e-12);
  // Among configs within tolerance of the best, the shallowest wins.
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (r.cv_f1[g] >= best - 1e-12) {
      EXPECT_LE(std::get<TreeConfig>(grid[r.best_index]).max_depth, std::get<TreeConfig>(grid[g]).max_depth);
    }
  const auto again = tune(t, plan, grid, 5);
  EXPECT_EQ(again.cv_f1, r.cv_f1);
  EXPECT_EQ(again.best_index, r.best_index);
  EXPECT_EQ(std::get<TreeParams>(again.model.params), std::get<TreeParams>(r.model.params));

  const auto single = tune(t, plan, {grid[2]}, 5);
  EXPECT_EQ(single.best_index, 0u);
  EXPECT_EQ(std::get<TreeConfig>(single.best).max_depth, 4);
  const auto refit = fit(make_dataset(t, plan.train, Task::Gender, plan.label_map), t.names, plan.label_map,
                         grid[2]);
  EXPECT_EQ(std::get<TreeParams>(single.model.params), std::get<TreeParams>(refit.params));

  EXPECT_THROW(tune(t, plan, {}, 5), ConfigError);
  EXPECT_THROW(tune(t, plan, {grid[0], LogisticConfig{}}, 5), ConfigError);
}

TEST(Tune, ParticipantFoldsAreContiguousBlocks) {
  Rng rng(16);
  const auto t = random_table(rng, 6, 10, 3);
  const auto plan = make_split(t, Task::ParticipantId, 1);
  LogisticConfig c;
  const auto r = tune(t, plan, {c}, 2);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_GE(r.cv_f1[0], 0.0);
  EXPECT_LE(r.cv_f1[0], 1.0);
}

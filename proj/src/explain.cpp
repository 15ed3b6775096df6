#include "ecgreid/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/rng.hpp"
#include "ecgreid/text.hpp"

namespace ecgreid {

using nlohmann::json;

std::string_view to_string(ShapScale s) {
  return s == ShapScale::Probability ? "probability" : "logit";
}

ShapScale parse_shap_scale(std::string_view s) {
  if (s == "probability") return ShapScale::Probability;
  if (s == "logit") return ShapScale::Logit;
  throw ConfigError("unknown SHAP scale \"" + std::string(s) + "\"");
}

namespace {

void check_width(std::size_t m) {
  if (m > kMaxShapFeatures)
    throw ConfigError("exact Shapley enumeration supports at most " +
                      std::to_string(kMaxShapFeatures) + " features, got " + std::to_string(m) +
                      "; select a feature subset first");
}

}  // namespace

std::vector<double> coalition_values(const ValueFunction& f, std::span<const double> x,
                                     const Background& background) {
  const std::size_t m = x.size();
  check_width(m);
  if (background.empty()) throw ConfigError("empty SHAP background");
  const std::size_t n_masks = std::size_t{1} << m;
  std::vector<double> v(n_masks, 0.0);
  std::vector<double> z(m);
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (const auto& b : background) {
      for (std::size_t j = 0; j < m; ++j) z[j] = (mask >> j) & 1 ? x[j] : b[j];
      sum += f(z);
    }
    v[mask] = sum / static_cast<double>(background.size());
  }
  return v;
}

std::vector<double> shapley_from_coalitions(std::span<const double> v, std::size_t m) {
  check_width(m);
  if (v.size() != (std::size_t{1} << m)) throw ConfigError("coalition table has the wrong size");
  // w[s] = s! (m - s - 1)! / m!; factorials up to 16! are exact in a double.
  std::vector<double> fact(m + 1, 1.0);
  for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> w(m);
  for (std::size_t s = 0; s < m; ++s) w[s] = fact[s] * fact[m - s - 1] / fact[m];

  std::vector<double> phi(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < v.size(); ++mask) {
      if (mask & bit) continue;
      phi[i] += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
    }
  }
  return phi;
}

namespace {

// Coalition constraints of one root-to-leaf path: features that must be in S
// (low bits) and features that must stay out of S (high bits).
using PathKey = std::uint64_t;

void collect_paths(const TreeParams& tree, int node, std::span<const double> x,
                   std::span<const double> b, std::size_t cls, std::uint32_t in_s,
                   std::uint32_t out_s, std::map<PathKey, double>& acc) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    const double total = std::accumulate(n.counts.begin(), n.counts.end(), 0.0);
    acc[(static_cast<PathKey>(out_s) << 32) | in_s] += n.counts[cls] / total;
    return;
  }
  const auto j = static_cast<std::size_t>(n.feature);
  const std::uint32_t bit = 1u << j;
  const int x_child = x[j] <= n.threshold ? n.left : n.right;
  const int b_child = b[j] <= n.threshold ? n.left : n.right;
  if (x_child == b_child || (in_s & bit)) {
    collect_paths(tree, x_child, x, b, cls, in_s, out_s, acc);
  } else if (out_s & bit) {
    collect_paths(tree, b_child, x, b, cls, in_s, out_s, acc);
  } else {
    collect_paths(tree, x_child, x, b, cls, in_s | bit, out_s, acc);
    collect_paths(tree, b_child, x, b, cls, in_s, out_s | bit, acc);
  }
}

std::vector<double> tree_coalition_values(std::span<const TreeParams> trees, std::span<const double> x,
                                          const Background& background, std::size_t cls) {
  const std::size_t m = x.size();
  std::map<PathKey, double> acc;
  for (const auto& tree : trees)
    for (const auto& b : background) collect_paths(tree, 0, x, b, cls, 0, 0, acc);

  const std::size_t full = (std::size_t{1} << m) - 1;
  std::vector<double> v(full + 1, 0.0);
  for (const auto& [key, value] : acc) {
    const auto in_s = static_cast<std::size_t>(key & 0xffffffffu);
    const auto out_s = static_cast<std::size_t>(key >> 32);
    const std::size_t free = full & ~(in_s | out_s);
    // Every subset of the unconstrained features, including the empty one.
    for (std::size_t sub = free;; sub = (sub - 1) & free) {
      v[in_s | sub] += value;
      if (sub == 0) break;
    }
  }
  const double n = static_cast<double>(trees.size() * background.size());
  for (auto& val : v) val /= n;
  return v;
}

}  // namespace

ShapExplanation shap_exact(const TrainedModel& model, std::span<const double> x,
                           const Background& background, std::size_t cls, ShapScale scale) {
  const std::size_t m = model.feature_names.size();
  check_width(m);
  if (x.size() != m) throw SchemaError("explained row has the wrong feature count");
  if (cls >= model.class_labels.size()) throw SchemaError("explained class out of range");
  if (background.empty()) throw ConfigError("empty SHAP background");
  for (const auto& b : background)
    if (b.size() != m) throw SchemaError("background row has the wrong feature count");
  if (scale == ShapScale::Logit && model.kind != ModelKind::Logistic)
    throw ConfigError("the logit scale is only defined for logistic models");

  std::vector<double> v;
  double fx = 0.0;
  switch (model.kind) {
    case ModelKind::Logistic:
      if (scale == ShapScale::Logit) {
        const ValueFunction f = [&](std::span<const double> z) { return logistic_score(model, z, cls); };
        v = coalition_values(f, x, background);
        fx = f(x);
      } else {
        const ValueFunction f = [&](std::span<const double> z) { return predict_proba(model, z)[cls]; };
        v = coalition_values(f, x, background);
        fx = f(x);
      }
      break;
    case ModelKind::Tree: {
      const auto& tree = std::get<TreeParams>(model.params);
      v = tree_coalition_values(std::span<const TreeParams>(&tree, 1), x, background, cls);
      fx = predict_proba(model, x)[cls];
      break;
    }
    case ModelKind::Forest:
      v = tree_coalition_values(std::get<ForestParams>(model.params).trees, x, background, cls);
      fx = predict_proba(model, x)[cls];
      break;
  }

  ShapExplanation e;
  e.phi = shapley_from_coalitions(v, m);
  e.phi0 = v.front();
  e.fx = fx;
  e.explained_class = cls;
  e.x.assign(x.begin(), x.end());
  e.background_size = background.size();
  return e;
}

Background sample_background(const FeatureTable& table, std::span<const std::size_t> train,
                             std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> rows(train.begin(), train.end());
  std::sort(rows.begin(), rows.end());
  if (rows.size() > n) {
    Rng rng(seed);
    rng.shuffle(rows);
    rows.resize(n);
    std::sort(rows.begin(), rows.end());
  }
  Background bg;
  for (const auto r : rows) bg.push_back(table.rows.at(r).values);
  return bg;
}

ShapSummary shap_summary(const TrainedModel& model, const FeatureTable& table, const SplitPlan& plan,
                         const ShapSummaryConfig& config) {
  check_features(model, table.names);
  if (plan.test.empty()) throw SchemaError("nothing to explain: the test side is empty");
  if (plan.train.empty()) throw SchemaError("no training rows for the SHAP background");

  std::size_t fixed = 0;
  if (config.policy == ClassPolicy::Fixed) {
    const auto it = std::find(model.class_labels.begin(), model.class_labels.end(), config.fixed_class);
    if (it == model.class_labels.end())
      throw SchemaError("class \"" + config.fixed_class + "\" is not among the model's classes");
    fixed = static_cast<std::size_t>(it - model.class_labels.begin());
  }

  std::vector<std::size_t> rows(plan.test.begin(), plan.test.end());
  std::sort(rows.begin(), rows.end());
  if (rows.size() > config.max_points) {
    Rng rng(child_seed(config.seed, "points"));
    rng.shuffle(rows);
    rows.resize(config.max_points);
    std::sort(rows.begin(), rows.end());
  }
  const auto background =
      sample_background(table, plan.train, config.background_size, child_seed(config.seed, "background"));

  const std::size_t m = table.names.size();
  ShapSummary s;
  s.task = plan.task;
  s.kind = model.kind;
  s.scale = config.scale;
  s.policy = config.policy;
  s.fixed_class = config.policy == ClassPolicy::Fixed ? config.fixed_class : "";
  s.seed = config.seed;
  s.feature_names = table.names;
  s.mean_abs_phi.assign(m, 0.0);
  s.explained_rows = rows;
  s.background_size = background.size();

  for (const auto r : rows) {
    const auto& x = table.rows[r].values;
    s.explained_windows.emplace_back(table.rows[r].participant_id, table.rows[r].window_index);
    const std::size_t cls =
        config.policy == ClassPolicy::Fixed ? fixed : static_cast<std::size_t>(predict(model, x));
    const auto e = shap_exact(model, x, background, cls, config.scale);
    s.mean_phi0 += e.phi0;
    for (std::size_t j = 0; j < m; ++j) {
      s.mean_abs_phi[j] += std::abs(e.phi[j]);
      s.points.push_back({j, r, x[j], e.phi[j]});
    }
  }
  const auto n = static_cast<double>(rows.size());
  for (auto& v : s.mean_abs_phi) v /= n;
  s.mean_phi0 /= n;

  s.ranking.resize(m);
  std::iota(s.ranking.begin(), s.ranking.end(), 0);
  std::stable_sort(s.ranking.begin(), s.ranking.end(), [&](std::size_t a, std::size_t b) {
    return s.mean_abs_phi[a] > s.mean_abs_phi[b];
  });
  return s;
}

std::string format_summary_json(const ShapSummary& s) {
  json features = json::array();
  for (std::size_t r = 0; r < s.ranking.size(); ++r) {
    const auto j = s.ranking[r];
    features.push_back({{"feature", s.feature_names[j]},
                        {"rank", r + 1},
                        {"mean_abs_phi", s.mean_abs_phi[j]}});
  }
  json windows = json::array();
  for (const auto& [id, w] : s.explained_windows)
    windows.push_back({{"participant_id", id}, {"window_index", w}});
  json j = {{"task", std::string(to_string(s.task))},
            {"model", std::string(to_string(s.kind))},
            {"scale", std::string(to_string(s.scale))},
            {"class_policy", s.policy == ClassPolicy::Predicted ? "predicted" : "fixed"},
            {"fixed_class", s.fixed_class},
            {"value_function", "interventional"},
            {"seed", s.seed},
            {"background_size", s.background_size},
            {"n_explained", s.explained_windows.size()},
            {"mean_phi0", s.mean_phi0},
            {"feature_names", s.feature_names},
            {"ranking", features},
            {"explained", windows}};
  return j.dump(2) + "\n";
}

ShapSummary parse_summary_json(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
  try {
    ShapSummary s;
    s.task = parse_task(j.at("task").get<std::string>());
    s.kind = parse_model_kind(j.at("model").get<std::string>());
    s.scale = parse_shap_scale(j.at("scale").get<std::string>());
    const auto policy = j.at("class_policy").get<std::string>();
    if (policy != "predicted" && policy != "fixed") throw SchemaError(source + ": bad class_policy");
    s.policy = policy == "fixed" ? ClassPolicy::Fixed : ClassPolicy::Predicted;
    s.fixed_class = j.at("fixed_class").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.background_size = j.at("background_size").get<std::size_t>();
    s.mean_phi0 = j.at("mean_phi0").get<double>();
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.mean_abs_phi.assign(s.feature_names.size(), 0.0);
    for (const auto& f : j.at("ranking")) {
      const auto name = f.at("feature").get<std::string>();
      const auto it = std::find(s.feature_names.begin(), s.feature_names.end(), name);
      if (it == s.feature_names.end()) throw SchemaError(source + ": unknown feature " + name);
      const auto idx = static_cast<std::size_t>(it - s.feature_names.begin());
      s.ranking.push_back(idx);
      s.mean_abs_phi[idx] = f.at("mean_abs_phi").get<double>();
    }
    if (s.ranking.size() != s.feature_names.size()) throw SchemaError(source + ": incomplete ranking");
    for (const auto& w : j.at("explained"))
      s.explained_windows.emplace_back(w.at("participant_id").get<std::string>(),
                                       w.at("window_index").get<int>());
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

std::string format_beeswarm_csv(const ShapSummary& s) {
  std::vector<std::size_t> rank_of(s.ranking.size());
  for (std::size_t r = 0; r < s.ranking.size(); ++r) rank_of[s.ranking[r]] = r + 1;
  std::string out = "feature,rank,value,phi\n";
  for (const auto f : s.ranking)
    for (const auto& p : s.points) {
      if (p.feature != f) continue;
      out += s.feature_names[f] + "," + std::to_string(rank_of[f]) + "," +
             text::format_double(p.value) + "," + text::format_double(p.phi) + "\n";
    }
  return out;
}

std::vector<BeeswarmRow> parse_beeswarm_csv(std::string_view csv, const std::string& source) {
  std::vector<BeeswarmRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    auto end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    const auto line = text::trim(csv.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "feature,rank,value,phi") throw ParseError(source, 1, "unexpected header");
      continue;
    }
    const auto f = text::split(line, ',');
    BeeswarmRow r;
    long long rank = 0;
    if (f.size() != 4 || !text::parse_int(f[1], rank) || !text::parse_double(f[2], r.value) ||
        !text::parse_double(f[3], r.phi))
      throw ParseError(source, line_no, "expected feature,rank,value,phi");
    r.feature = std::string(f[0]);
    r.rank = static_cast<int>(rank);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

std::string svg_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// Blue (low feature value) to red (high), as used by beeswarm plots.
std::string value_color(double t) {
  const auto lerp = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", lerp(0x1e, 0xff), lerp(0x88, 0x00), lerp(0xe5, 0x52));
  return buf;
}

}  // namespace

std::string render_summary_svg(const ShapSummary& s) {
  constexpr double kLeft = 130, kRight = 30, kTop = 40, kRow = 34, kPlotW = 520;
  const double height = kTop + kRow * static_cast<double>(s.ranking.size()) + 60;
  const double width = kLeft + kPlotW + kRight;

  double span = 0.0;
  for (const auto& p : s.points) span = std::max(span, std::abs(p.phi));
  if (span == 0.0) span = 1.0;
  const auto px = [&](double phi) { return kLeft + kPlotW * (0.5 + 0.5 * phi / span); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"14\">SHAP summary: "
    << to_string(s.task) << " / " << to_string(s.kind) << " (" << to_string(s.scale)
    << " scale)</text>\n";
  const double axis_y = kTop + kRow * static_cast<double>(s.ranking.size());
  o << "<line x1=\"" << px(0) << "\" y1=\"" << kTop << "\" x2=\"" << px(0) << "\" y2=\"" << axis_y
    << "\" stroke=\"#999\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << axis_y << "\" x2=\"" << kLeft + kPlotW << "\" y2=\""
    << axis_y << "\" stroke=\"black\"/>\n";
  for (const double t : {-1.0, -0.5, 0.0, 0.5, 1.0})
    o << "<text x=\"" << px(t * span) << "\" y=\"" << axis_y + 16 << "\" text-anchor=\"middle\">"
      << fixed(t * span, 3) << "</text>\n";
  o << "<text x=\"" << px(0) << "\" y=\"" << axis_y + 36
    << "\" text-anchor=\"middle\">SHAP value (impact on model output)</text>\n";

  for (std::size_t r = 0; r < s.ranking.size(); ++r) {
    const auto f = s.ranking[r];
    const double cy = kTop + kRow * (static_cast<double>(r) + 0.5);
    o << "<text x=\"" << kLeft - 8 << "\" y=\"" << cy + 4 << "\" text-anchor=\"end\">"
      << svg_escape(s.feature_names[f]) << "</text>\n";

    std::vector<const BeeswarmPoint*> pts;
    for (const auto& p : s.points)
      if (p.feature == f) pts.push_back(&p);
    // Colour by the rank of the feature value among the explained rows.
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pts[a]->value < pts[b]->value; });
    std::vector<double> shade(pts.size(), 0.5);
    for (std::size_t k = 0; k < order.size(); ++k)
      if (order.size() > 1) shade[order[k]] = static_cast<double>(k) / static_cast<double>(order.size() - 1);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const double jitter = (static_cast<double>(splitmix64(k + 131 * f) % 1000) / 1000.0 - 0.5) * (kRow * 0.6);
      o << "<circle cx=\"" << fixed(px(pts[k]->phi), 2) << "\" cy=\"" << fixed(cy + jitter, 2)
        << "\" r=\"2.5\" fill=\"" << value_color(shade[k]) << "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  const double ly = height - 14;
  o << "<text x=\"" << kLeft << "\" y=\"" << ly << "\">feature value:</text>\n";
  o << "<circle cx=\"" << kLeft + 100 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << value_color(0)
    << "\"/><text x=\"" << kLeft + 108 << "\" y=\"" << ly << "\">low</text>\n";
  o << "<circle cx=\"" << kLeft + 150 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << value_color(1)
    << "\"/><text x=\"" << kLeft + 158 << "\" y=\"" << ly << "\">high</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ecgreid

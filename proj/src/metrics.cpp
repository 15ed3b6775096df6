#include "ecgreid/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "ecgreid/error.hpp"

namespace ecgreid {

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::size_t n_classes) {
  if (truth.size() != predicted.size()) throw SchemaError("truth/prediction length mismatch");
  ConfusionMatrix cm(n_classes, std::vector<long long>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= n_classes || p >= n_classes) throw SchemaError("class index out of range");
    ++cm[t][p];
  }
  return cm;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.size();
  std::vector<ClassMetrics> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    long long tp = cm[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    auto& m = out[c];
    m.support = tp + fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = 2 * tp + fp + fn > 0
               ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
               : 0.0;
  }
  return out;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  MacroMetrics m;
  long long total = 0, trace = 0;
  for (std::size_t r = 0; r < cm.size(); ++r) {
    trace += cm[r][r];
    total += std::accumulate(cm[r].begin(), cm[r].end(), 0LL);
  }
  if (total == 0) return m;
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  const auto per = per_class_metrics(cm);
  for (std::size_t c = 0; c < per.size(); ++c) {
    if (per[c].support == 0) continue;
    m.averaged_classes.push_back(c);
    m.precision += per[c].precision;
    m.recall += per[c].recall;
    m.f1 += per[c].f1;
  }
  const auto n = static_cast<double>(m.averaged_classes.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw SchemaError("score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  long long n_pos = 0;
  for (const bool p : positive) n_pos += p;
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Walk thresholds from high to low; each tie group is one diagonal ROC step.
  double area = 0.0;
  long long tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    long long dtp = 0, dfp = 0;
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? dtp : dfp) += 1;
      ++j;
    }
    area += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dtp));
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace ecgreid

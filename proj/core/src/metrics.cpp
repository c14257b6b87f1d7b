#include "vaeem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace vaeem {

std::vector<int> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("hungarian: cost matrix must be square");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian: cost must be finite");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

ConfusionMatrix ConfusionMatrix::build(std::span<const int> pred, std::span<const int> truth, int pred_classes,
                                       int true_classes) {
  if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
  ConfusionMatrix m{Eigen::MatrixXi::Zero(pred_classes, true_classes)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= pred_classes || truth[i] < 0 || truth[i] >= true_classes)
      throw std::invalid_argument("label out of range at index " + std::to_string(i));
    ++m.counts(pred[i], truth[i]);
  }
  return m;
}

std::vector<int> best_label_mapping(std::span<const int> pred, std::span<const int> truth, int k) {
  const ConfusionMatrix cm = ConfusionMatrix::build(pred, truth, k, k);
  return hungarian(-cm.counts.cast<double>());
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, int k) {
  if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
  if (pred.empty()) throw std::invalid_argument("clustering accuracy needs at least one sample");
  const ConfusionMatrix cm = ConfusionMatrix::build(pred, truth, k, k);
  const std::vector<int> match = hungarian(-cm.counts.cast<double>());
  long matched = 0;
  for (int c = 0; c < k; ++c) matched += cm.counts(c, match[c]);
  return static_cast<double>(matched) / static_cast<double>(pred.size());
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw std::invalid_argument("clustering accuracy needs at least one sample");
  const int k = std::max(*std::max_element(pred.begin(), pred.end()), *std::max_element(truth.begin(), truth.end())) + 1;
  return clustering_accuracy(pred, truth, k);
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
  if (pred.empty()) throw std::invalid_argument("nmi needs at least one sample");
  const double n = static_cast<double>(pred.size());
  std::map<int, double> cp, ct;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    cp[pred[i]] += 1.0;
    ct[truth[i]] += 1.0;
    joint[{pred[i], truth[i]}] += 1.0;
  }
  auto entropy = [n](const std::map<int, double>& counts) {
    double h = 0.0;
    for (const auto& [label, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
  };
  double mi = 0.0;
  for (const auto& [key, c] : joint) mi += (c / n) * std::log(c * n / (cp[key.first] * ct[key.second]));
  const double denom = 0.5 * (entropy(cp) + entropy(ct));
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

}  // namespace vaeem

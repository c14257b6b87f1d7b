#pragma once

#include <span>
#include <vector>

#include "vaeem/nn.hpp"

namespace vaeem {

/// Minimum-cost assignment for a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns `assignment[row] = column`.
std::vector<int> hungarian(const Matrix& cost);

/// counts(p, t) = number of samples predicted p with true class t.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;

  static ConfusionMatrix build(std::span<const int> pred, std::span<const int> truth, int pred_classes,
                               int true_classes);
  long total() const { return counts.sum(); }
};

/// Fraction of samples correctly labelled under the best one-to-one mapping
/// of predicted clusters onto true classes. Labels must lie in [0, k).
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, int k);
/// Same, with k taken as the larger label range of the two vectors.
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

/// Best cluster-to-class mapping: `mapping[cluster] = class`.
std::vector<int> best_label_mapping(std::span<const int> pred, std::span<const int> truth, int k);

/// Mutual information normalised by the arithmetic mean of the two entropies
/// (natural log). Returns 0 when both entropies vanish.
double nmi(std::span<const int> pred, std::span<const int> truth);

}  // namespace vaeem

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaeem/nn.hpp"

namespace vaeem {

inline constexpr double kGmmVarianceFloor = 1e-6;

/// Diagonal-covariance Gaussian mixture. Means and variances hold one
/// component per column (d x K).
struct GmmParams {
  Vector weights;
  Matrix means;
  Matrix variances;

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.rows(); }
};

/// log N(x; mean, diag(var)) for every component, as a K-vector (unweighted).
Vector gmm_component_log_densities(const GmmParams& params, const Vector& x);
/// log sum_k w_k N(x; mu_k, diag(var_k)), via log-sum-exp.
double gmm_log_density(const GmmParams& params, const Vector& x);

/// Exact posterior responsibilities, N x K.
Matrix gmm_e_step(const GmmParams& params, const Matrix& data);

struct GmmMStep {
  GmmParams params;
  std::vector<int> degenerate;  // components left at their previous values
};

/// Closed-form maximiser given responsibilities (N x K). Components whose
/// responsibility mass is ~0 keep their values from `previous` when given.
GmmMStep gmm_m_step(const Matrix& data, const Matrix& responsibilities, const GmmParams* previous = nullptr);

struct GmmFit {
  GmmParams params;
  /// Mean per-sample log-likelihood at the initial parameters and after each
  /// EM iteration (iterations + 1 entries).
  std::vector<double> log_likelihood;
  std::vector<std::string> warnings;
};

/// k-means++ seeded means, global variances and uniform weights, then
/// `iterations` exact EM steps.
GmmFit gmm_fit(const Matrix& data, int k, int iterations, std::uint64_t seed);

std::vector<int> gmm_predict(const GmmParams& params, const Matrix& data);

}  // namespace vaeem

#include "vaeem/gmm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vaeem/random.hpp"

namespace vaeem {

namespace {

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double mean_log_likelihood(const GmmParams& params, const Matrix& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.cols(); ++i) total += gmm_log_density(params, data.col(i));
  return total / static_cast<double>(data.cols());
}

}  // namespace

Vector gmm_component_log_densities(const GmmParams& params, const Vector& x) {
  if (x.size() != params.dim()) throw DimensionError("GMM: sample dimension mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Vector out(params.components());
  for (Eigen::Index k = 0; k < params.components(); ++k) {
    const auto var = params.variances.col(k).array();
    const auto diff = x.array() - params.means.col(k).array();
    out(k) = -0.5 * (static_cast<double>(x.size()) * log2pi + var.log().sum() + (diff.square() / var).sum());
  }
  return out;
}

double gmm_log_density(const GmmParams& params, const Vector& x) {
  return log_sum_exp(gmm_component_log_densities(params, x) + params.weights.array().log().matrix());
}

Matrix gmm_e_step(const GmmParams& params, const Matrix& data) {
  Matrix r(data.cols(), params.components());
  const Vector log_w = params.weights.array().log();
  for (Eigen::Index i = 0; i < data.cols(); ++i) {
    const Vector joint = gmm_component_log_densities(params, data.col(i)) + log_w;
    const double norm = log_sum_exp(joint);
    r.row(i) = (joint.array() - norm).exp().transpose();
  }
  return r;
}

GmmMStep gmm_m_step(const Matrix& data, const Matrix& resp, const GmmParams* previous) {
  const Eigen::Index n = data.cols(), d = data.rows(), k = resp.cols();
  if (resp.rows() != n) throw DimensionError("GMM: responsibilities must have one row per sample");
  GmmMStep out;
  out.params.weights = resp.colwise().sum().transpose() / static_cast<double>(n);
  out.params.means.resize(d, k);
  out.params.variances.resize(d, k);
  const Vector mass = resp.colwise().sum().transpose();
  for (Eigen::Index c = 0; c < k; ++c) {
    if (mass(c) <= 1e-12) {
      out.degenerate.push_back(static_cast<int>(c));
      if (previous) {
        out.params.means.col(c) = previous->means.col(c);
        out.params.variances.col(c) = previous->variances.col(c);
      } else {
        out.params.means.col(c).setZero();
        out.params.variances.col(c).setOnes();
      }
      continue;
    }
    const Vector mean = data * resp.col(c) / mass(c);
    const Matrix centered = data.colwise() - mean;
    Vector var = centered.cwiseAbs2() * resp.col(c) / mass(c);
    out.params.means.col(c) = mean;
    out.params.variances.col(c) = var.cwiseMax(kGmmVarianceFloor);
  }
  return out;
}

GmmFit gmm_fit(const Matrix& data, int k, int iterations, std::uint64_t seed) {
  const Eigen::Index n = data.cols(), d = data.rows();
  if (k < 1 || n < k) throw std::invalid_argument("GMM fit needs N >= K >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  Rng rng(seed);

  // k-means++ seeding
  Matrix means(d, k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  means.col(0) = data.col(first(rng));
  Vector dist2 = (data.colwise() - Vector(means.col(0))).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    means.col(c) = data.col(pick);
    dist2 = dist2.cwiseMin((data.colwise() - Vector(means.col(c))).colwise().squaredNorm().transpose());
  }

  const Vector global_mean = data.rowwise().mean();
  const Vector global_var =
      ((data.colwise() - global_mean).cwiseAbs2().rowwise().mean()).cwiseMax(kGmmVarianceFloor);

  GmmFit fit;
  fit.params.weights = Vector::Constant(k, 1.0 / k);
  fit.params.means = means;
  fit.params.variances = global_var.replicate(1, k);
  fit.log_likelihood.push_back(mean_log_likelihood(fit.params, data));
  for (int it = 0; it < iterations; ++it) {
    const Matrix resp = gmm_e_step(fit.params, data);
    GmmMStep m = gmm_m_step(data, resp, &fit.params);
    for (int c : m.degenerate)
      fit.warnings.push_back("iteration " + std::to_string(it + 1) + ": component " + std::to_string(c) +
                             " has no responsibility mass");
    fit.params = std::move(m.params);
    fit.log_likelihood.push_back(mean_log_likelihood(fit.params, data));
  }
  return fit;
}

std::vector<int> gmm_predict(const GmmParams& params, const Matrix& data) {
  const Matrix r = gmm_e_step(params, data);
  std::vector<int> labels(data.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Eigen::Index best = 0;
    r.row(i).maxCoeff(&best);
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace vaeem

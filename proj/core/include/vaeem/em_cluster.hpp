#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vaeem/data.hpp"
#include "vaeem/vae.hpp"

namespace vaeem {

/// A configuration value that is malformed or out of range.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// N x K matrix of cluster responsibilities; each row lies on the simplex.
struct SoftAssignments {
  Matrix u;

  Eigen::Index size() const { return u.rows(); }
  Eigen::Index clusters() const { return u.cols(); }
  bool on_simplex(double tol = 1e-6) const;
  /// Row-wise argmax, ties to the lowest cluster index.
  std::vector<int> hard_labels() const;
  double mean_max_responsibility() const;
};

/// Hyperparameters of the EM clustering loop. Defaults reproduce the MNIST
/// column of the reference configuration; see `synthetic()` for 2-D data.
struct EmConfig {
  int clusters = 10;
  std::vector<int> encoder_dims{784, 500, 20};
  std::vector<int> decoder_dims{20, 500, 784};
  double activation_slope = 0.2;
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  double lr_decay = 0.9;  // multiplicative factor
  int decay_every = 20;   // EM iterations between decays; 0 disables decay
  int batch_size = 256;
  int mc_samples_e = 10;
  int mc_samples_m = 1;
  double reconstruction_weight = 1.0;
  int epochs_per_m_step = 20;
  int em_iterations = 300;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Deterministic test mode: noise frozen per (sample, cluster, draw) for the
  /// whole run, full-batch M-steps on the same noise, dropout off, and an
  /// M-step update is only kept when it does not increase the weighted loss.
  bool frozen_noise = false;

  static EmConfig mnist();
  static EmConfig synthetic();

  VaeArchitecture architecture() const { return {encoder_dims, decoder_dims, activation_slope}; }
  /// Learning rate used during EM iteration `iteration` (1-based).
  double learning_rate_at(int iteration) const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct EmRecord {
  int iteration = 0;
  double objective = 0.0;
  double mean_max_responsibility = 0.0;
  std::optional<double> accuracy;
  double learning_rate = 0.0;
};

struct EmHistory {
  std::vector<EmRecord> records;
  std::vector<std::string> warnings;
};

using WarningSink = std::function<void(std::string_view)>;

/// Rows drawn from a symmetric Dirichlet(1).
SoftAssignments init_assignments(Eigen::Index n, int k, Rng& rng);
/// Variant used by `fit`: column k is driven by its own stream so that
/// permuting slots permutes columns.
SoftAssignments init_assignments(Eigen::Index n, std::span<const std::uint64_t> slot_streams, std::uint64_t seed);

/// Row-wise softmax with max subtraction. `order` fixes the summation order
/// of the columns (identity when empty).
SoftAssignments softmax_rows(const Matrix& scores, std::span<const int> order = {});

/// N x K matrix of ELBO(model_k, x_i). Cluster k draws its noise from
/// `rngs[k]`; dropout is off.
Matrix elbo_matrix(std::span<const VaeModel> models, const Matrix& data, int num_mc, std::span<Rng> rngs,
                   int threads = 1);

SoftAssignments e_step(std::span<const VaeModel> models, const Matrix& data, int num_mc, Rng& rng);

/// -sum u_ik ELBO_ik + sum u_ik log u_ik with 0 log 0 = 0. Columns are
/// accumulated in `order` (identity when empty).
double em_objective(const Matrix& elbos, const SoftAssignments& u, std::span<const int> order = {});
double em_objective(std::span<const VaeModel> models, const Matrix& data, const SoftAssignments& u, int num_mc,
                    Rng& rng);

struct TrainOptions {
  int epochs = 1;
  int batch_size = 256;
  int num_mc = 1;
  double learning_rate = 1e-3;
  bool training = true;  // dropout on
};

struct TrainReport {
  int steps = 0;
  std::vector<std::string> skipped;  // non-finite batches
};

/// Minibatch Adam on -sum_i w_i ELBO(x_i): each epoch shuffles the sample
/// order with `rng` and walks it in batches.
TrainReport train_weighted(VaeModel& model, const Matrix& data, const Vector& weights, const TrainOptions& options,
                           Rng& rng);

/// One M-step over all clusters (independent per cluster).
std::vector<TrainReport> m_step(std::span<VaeModel> models, const Matrix& data, const SoftAssignments& u,
                                const EmConfig& config, double learning_rate, Rng& rng);

std::vector<VaeModel> init_models(const EmConfig& config, std::span<const std::uint64_t> slot_streams);

struct FitOptions {
  /// Per-slot stream identifiers; defaults to 0..K-1.
  std::vector<std::uint64_t> slot_streams;
  const std::vector<int>* labels = nullptr;  // evaluation only
  WarningSink on_warning;
  std::function<void(const EmRecord&)> on_iteration;
};

struct FitResult {
  std::vector<VaeModel> models;
  SoftAssignments assignments;
  EmHistory history;
};

/// Alternates M-step then E-step for `config.em_iterations` iterations,
/// starting from random soft assignments.
FitResult fit(const EmConfig& config, const Matrix& data, const FitOptions& options = {});

struct Assignment {
  int label = 0;
  Vector responsibilities;
};

Assignment assign(std::span<const VaeModel> models, const Vector& x, int num_mc, Rng& rng);
/// Assigns every column of `data`; cluster k uses a substream of `seed`.
SoftAssignments assign_all(std::span<const VaeModel> models, const Matrix& data, int num_mc, std::uint64_t seed,
                           int threads = 1);

/// d x count samples from cluster k's decoder.
Matrix generate(std::span<const VaeModel> models, int k, int count, Rng& rng);

}  // namespace vaeem

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaeem/nn.hpp"
#include "vaeem/random.hpp"

namespace vaeem {

inline constexpr double kLogvarMin = -30.0;
inline constexpr double kLogvarMax = 20.0;

/// Raised when an ELBO evaluates to NaN or infinity. `sample` is the column
/// (sample) index inside the evaluated batch.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, long sample) : std::runtime_error(what), sample_(sample) {}
  long sample() const { return sample_; }

 private:
  long sample_;
};

/// Layer widths of one cluster's VAE. `encoder_dims` runs from the data
/// dimension to the latent dimension (e.g. 784-500-20): every width but the
/// last forms the shared trunk, and the last is the width of each of the two
/// heads. `decoder_dims` runs from the latent dimension back to the data.
struct VaeArchitecture {
  std::vector<int> encoder_dims;
  std::vector<int> decoder_dims;
  double slope = 0.2;

  int data_dim() const { return encoder_dims.front(); }
  int latent_dim() const { return encoder_dims.back(); }
  void validate() const;
};

struct LatentGaussian {
  Vector mean;
  Vector logvar;
};

/// Column-per-sample batch of latent Gaussians.
struct LatentBatch {
  Matrix mean;
  Matrix logvar;
};

double kl_std_normal(const LatentGaussian& latent);
/// Per-column KL(q || N(0, I)).
Vector kl_std_normal(const LatentBatch& latent);

/// z = mean + exp(logvar / 2) .* eps
Vector reparameterize(const LatentGaussian& latent, const Vector& eps);
Matrix reparameterize(const LatentBatch& latent, const Matrix& eps);

/// Gradients for the four parameter groups of a VaeModel.
struct VaeGradients {
  LayerStack trunk;
  LayerStack mean_head;
  LayerStack logvar_head;
  LayerStack decoder;

  bool all_finite() const;
  void scale(double factor);
};

/// Result of a weighted negative-ELBO evaluation on a batch.
struct VaeLossGrad {
  double loss = 0.0;     // -sum_i w_i * ELBO_i
  Vector elbo;           // per-sample ELBO (MC average over the supplied noise)
  VaeGradients grads;    // gradient of `loss`
  bool finite = true;
};

/// One cluster's generative model: Gaussian encoder with mean/log-variance
/// heads on a shared trunk, and a Gaussian decoder with identity covariance.
class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(const VaeArchitecture& arch, double beta, double dropout_rate, Rng& init_rng);
  VaeModel(Mlp trunk, Mlp mean_head, Mlp logvar_head, Mlp decoder, double beta, double dropout_rate = 0.0);

  LatentGaussian encode(const Vector& x) const;
  LatentBatch encode(const Matrix& x) const;
  Vector decode(const Vector& z) const;
  Matrix decode(const Matrix& z) const;

  /// Monte-Carlo ELBO with `num_mc` draws of eps ~ N(0, I); dropout off.
  double elbo_estimate(const Vector& x, int num_mc, Rng& rng) const;
  /// Per-column ELBO for a batch. Draw l uses eps(l) of shape n x batch.
  Vector elbo_batch(const Matrix& x, int num_mc, Rng& rng) const;
  Vector elbo_with_noise(const Matrix& x, std::span<const Matrix> eps) const;

  /// Weighted loss -sum_i w_i ELBO_i and its pathwise gradient for the given
  /// noise. In training mode dropout masks are drawn from `rng`.
  VaeLossGrad loss_grad(const Matrix& x, const Vector& weights, std::span<const Matrix> eps,
                        bool training = false, Rng* rng = nullptr) const;
  /// Same, drawing `num_mc` noise matrices from `rng` first.
  VaeLossGrad loss_grad(const Matrix& x, const Vector& weights, int num_mc, bool training, Rng& rng) const;

  /// Gradient of the ELBO (not the loss) for a single sample.
  VaeGradients elbo_grad(const Vector& x, int num_mc, bool training, Rng& rng) const;

  /// d x count matrix of decoded prior draws.
  Matrix sample(int count, Rng& rng) const;

  /// Adam step on all four groups with the gradient of the loss. Returns
  /// false (and changes nothing) on non-finite gradients.
  bool apply_gradients(const VaeGradients& loss_grads, double lr);

  int data_dim() const { return static_cast<int>(trunk_.in_dim()); }
  int latent_dim() const { return static_cast<int>(mean_head_.out_dim()); }
  double beta() const { return beta_; }
  void set_beta(double beta);
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);

  const Mlp& trunk() const { return trunk_; }
  const Mlp& mean_head() const { return mean_head_; }
  const Mlp& logvar_head() const { return logvar_head_; }
  const Mlp& decoder() const { return decoder_; }
  Mlp& trunk() { return trunk_; }
  Mlp& mean_head() { return mean_head_; }
  Mlp& logvar_head() { return logvar_head_; }
  Mlp& decoder() { return decoder_; }
  const Adam& trunk_optimizer() const { return trunk_opt_; }

 private:
  void validate() const;
  Matrix draw_noise(Eigen::Index cols, Rng& rng) const;

  Mlp trunk_, mean_head_, logvar_head_, decoder_;
  Adam trunk_opt_, mean_opt_, logvar_opt_, decoder_opt_;
  double beta_ = 1.0;
  double dropout_rate_ = 0.0;
};

/// Draws an n x cols matrix of standard normals, column by column.
Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace vaeem

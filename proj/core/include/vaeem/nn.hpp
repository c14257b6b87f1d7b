#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vaeem/random.hpp"

namespace vaeem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double leaky_relu(double x, double slope);
Matrix leaky_relu(const Matrix& x, double slope);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// 1/(1-rate). Throws std::invalid_argument unless 0 <= rate < 1.
Vector dropout_mask(Eigen::Index size, double rate, Rng& rng);
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

/// One affine layer, y = W x + b. W is out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Parameter-shaped storage (gradients, optimizer moments).
using LayerStack = std::vector<DenseLayer>;

LayerStack zeros_like(const LayerStack& layers);
bool all_finite(const LayerStack& layers);
void axpy(double scale, const LayerStack& x, LayerStack& y);  // y += scale * x

/// Activations cached by Mlp::forward for the backward pass. Matrices hold
/// one sample per column.
struct ForwardCache {
  std::vector<Matrix> inputs;           // input fed to each layer
  std::vector<Matrix> pre_activations;  // W x + b for each layer
  std::vector<Matrix> masks;            // dropout mask per layer, empty if unused
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

struct BackwardResult {
  LayerStack param_grads;
  Matrix input_grad;
};

/// Fully connected network with leaky-ReLU between layers.
///
/// Every layer except the last is followed by leaky-ReLU (and, in training
/// mode, inverted dropout). With `activate_output` the last layer is treated
/// as hidden too; the encoder trunk uses this since its output feeds two heads.
class Mlp {
 public:
  Mlp() = default;
  Mlp(LayerStack layers, double slope, bool activate_output = false);

  /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
  static Mlp glorot(std::span<const int> dims, double slope, bool activate_output, Rng& rng);
  static Mlp zeros(std::span<const int> dims, double slope, bool activate_output = false);

  /// `input` is in_dim x batch. Dropout is only drawn when `training` is set
  /// and `dropout_rate` > 0, in which case `rng` must be non-null.
  ForwardResult forward(const Matrix& input, bool training = false, double dropout_rate = 0.0,
                        Rng* rng = nullptr) const;
  /// Inference-only forward pass without a cache.
  Matrix predict(const Matrix& input) const;

  /// Reverse-mode gradients of sum(output .* output_grad).
  BackwardResult backward(const ForwardCache& cache, const Matrix& output_grad) const;

  const LayerStack& layers() const { return layers_; }
  LayerStack& layers() { return layers_; }
  double slope() const { return slope_; }
  bool activate_output() const { return activate_output_; }
  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  Eigen::Index parameter_count() const;

 private:
  bool is_activated(std::size_t layer) const {
    return activate_output_ || layer + 1 < layers_.size();
  }
  void check_input(const Matrix& input) const;

  LayerStack layers_;
  double slope_ = 0.2;
  bool activate_output_ = false;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction for one Mlp.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp& params, AdamOptions options = {});

  /// Applies one update. Returns false and leaves everything untouched if any
  /// gradient is non-finite.
  bool step(Mlp& params, const LayerStack& grads, double lr);

  long steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const LayerStack& first_moment() const { return m_; }
  const LayerStack& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  LayerStack m_;
  LayerStack v_;
  long step_ = 0;
};

}  // namespace vaeem

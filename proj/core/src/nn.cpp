#include "vaeem/nn.hpp"

#include <cmath>

namespace vaeem {

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

Matrix leaky_relu(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  Matrix mask(rows, cols);
  if (rate == 0.0) {
    mask.setOnes();
    return mask;
  }
  const double keep = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = drop(rng) ? 0.0 : keep;
  return mask;
}

Vector dropout_mask(Eigen::Index size, double rate, Rng& rng) {
  return dropout_mask(size, 1, rate, rng).col(0);
}

LayerStack zeros_like(const LayerStack& layers) {
  LayerStack out;
  out.reserve(layers.size());
  for (const auto& l : layers)
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return out;
}

bool all_finite(const LayerStack& layers) {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

void axpy(double scale, const LayerStack& x, LayerStack& y) {
  if (x.size() != y.size()) throw DimensionError("axpy: layer count mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i].weight += scale * x[i].weight;
    y[i].bias += scale * x[i].bias;
  }
}

Mlp::Mlp(LayerStack layers, double slope, bool activate_output)
    : layers_(std::move(layers)), slope_(slope), activate_output_(activate_output) {
  if (layers_.empty()) throw DimensionError("Mlp needs at least one layer");
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky-ReLU slope must be in [0, 1)");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows())
      throw DimensionError("layer " + std::to_string(i) + ": bias size does not match weight rows");
    if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())
      throw DimensionError("layer " + std::to_string(i) + ": input size does not chain");
  }
}

Mlp Mlp::glorot(std::span<const int> dims, double slope, bool activate_output, Rng& rng) {
  if (dims.size() < 2) throw DimensionError("Mlp needs at least two dimensions");
  LayerStack layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i], out = dims[i + 1];
    if (in <= 0 || out <= 0) throw DimensionError("layer dimensions must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(out, in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    layers.push_back({std::move(w), Vector::Zero(out)});
  }
  return Mlp(std::move(layers), slope, activate_output);
}

Mlp Mlp::zeros(std::span<const int> dims, double slope, bool activate_output) {
  if (dims.size() < 2) throw DimensionError("Mlp needs at least two dimensions");
  LayerStack layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    layers.push_back({Matrix::Zero(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])});
  return Mlp(std::move(layers), slope, activate_output);
}

Eigen::Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Eigen::Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::check_input(const Matrix& input) const {
  if (layers_.empty()) throw DimensionError("Mlp has no layers");
  if (input.rows() != in_dim())
    throw DimensionError("Mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                         std::to_string(in_dim()));
}

ForwardResult Mlp::forward(const Matrix& input, bool training, double dropout_rate, Rng* rng) const {
  check_input(input);
  const bool use_dropout = training && dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) throw std::invalid_argument("dropout requires an rng");

  ForwardResult result;
  auto& cache = result.cache;
  cache.inputs.reserve(layers_.size());
  cache.pre_activations.reserve(layers_.size());
  cache.masks.resize(layers_.size());

  Matrix h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Matrix pre = l.weight * h;
    pre.colwise() += l.bias;
    cache.inputs.push_back(std::move(h));
    if (is_activated(i)) {
      h = leaky_relu(pre, slope_);
      if (use_dropout) {
        cache.masks[i] = dropout_mask(h.rows(), h.cols(), dropout_rate, *rng);
        h.array() *= cache.masks[i].array();
      }
    } else {
      h = pre;
    }
    cache.pre_activations.push_back(std::move(pre));
  }
  result.output = std::move(h);
  return result;
}

Matrix Mlp::predict(const Matrix& input) const {
  check_input(input);
  Matrix h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix pre = layers_[i].weight * h;
    pre.colwise() += layers_[i].bias;
    h = is_activated(i) ? leaky_relu(pre, slope_) : std::move(pre);
  }
  return h;
}

BackwardResult Mlp::backward(const ForwardCache& cache, const Matrix& output_grad) const {
  const std::size_t depth = layers_.size();
  if (cache.inputs.size() != depth || cache.pre_activations.size() != depth || cache.masks.size() != depth)
    throw std::invalid_argument("forward cache depth does not match network");
  const Eigen::Index batch = cache.inputs.front().cols();
  if (output_grad.rows() != out_dim() || output_grad.cols() != batch)
    throw DimensionError("output gradient shape does not match cache");

  BackwardResult result;
  result.param_grads.resize(depth);
  Matrix grad = output_grad;
  for (std::size_t idx = depth; idx-- > 0;) {
    const auto& l = layers_[idx];
    const Matrix& pre = cache.pre_activations[idx];
    const Matrix& in = cache.inputs[idx];
    if (pre.rows() != l.out_dim() || in.rows() != l.in_dim() || pre.cols() != batch)
      throw std::invalid_argument("stale forward cache at layer " + std::to_string(idx));
    if (is_activated(idx)) {
      if (cache.masks[idx].size() != 0) grad.array() *= cache.masks[idx].array();
      const double s = slope_;
      grad.array() *= pre.unaryExpr([s](double v) { return v >= 0.0 ? 1.0 : s; }).array();
    }
    result.param_grads[idx].weight = grad * in.transpose();
    result.param_grads[idx].bias = grad.rowwise().sum();
    grad = l.weight.transpose() * grad;
  }
  result.input_grad = std::move(grad);
  return result;
}

Adam::Adam(const Mlp& params, AdamOptions options)
    : options_(options), m_(zeros_like(params.layers())), v_(zeros_like(params.layers())) {}

bool Adam::step(Mlp& params, const LayerStack& grads, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  auto& layers = params.layers();
  if (grads.size() != layers.size() || m_.size() != layers.size())
    throw DimensionError("Adam: gradient/state shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (grads[i].weight.rows() != layers[i].weight.rows() || grads[i].weight.cols() != layers[i].weight.cols() ||
        grads[i].bias.size() != layers[i].bias.size())
      throw DimensionError("Adam: gradient shape mismatch at layer " + std::to_string(i));
  if (!all_finite(grads)) return false;

  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2, eps = options_.epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads[i].weight, m_[i].weight, v_[i].weight);
    update(layers[i].bias, grads[i].bias, m_[i].bias, v_[i].bias);
  }
  return true;
}

}  // namespace vaeem

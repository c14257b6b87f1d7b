#include "vaeem/vae.hpp"

#include <cmath>

namespace vaeem {

namespace {

Matrix clamp_logvar(const Matrix& raw) { return raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax); }

LayerStack negated(const LayerStack& s) {
  LayerStack out = zeros_like(s);
  axpy(-1.0, s, out);
  return out;
}

}  // namespace

void VaeArchitecture::validate() const {
  if (encoder_dims.size() < 2) throw DimensionError("encoder needs at least input and latent widths");
  if (decoder_dims.size() < 2) throw DimensionError("decoder needs at least latent and output widths");
  if (decoder_dims.front() != encoder_dims.back())
    throw DimensionError("decoder input width must equal the latent dimension");
  if (decoder_dims.back() != encoder_dims.front())
    throw DimensionError("decoder output width must equal the data dimension");
  for (int w : encoder_dims)
    if (w <= 0) throw DimensionError("encoder widths must be positive");
  for (int w : decoder_dims)
    if (w <= 0) throw DimensionError("decoder widths must be positive");
}

double kl_std_normal(const LatentGaussian& latent) {
  const auto& mu = latent.mean.array();
  const auto& lv = latent.logvar.array();
  return 0.5 * (-1.0 - lv + lv.exp() + mu.square()).sum();
}

Vector kl_std_normal(const LatentBatch& latent) {
  const auto& mu = latent.mean.array();
  const auto& lv = latent.logvar.array();
  return 0.5 * (-1.0 - lv + lv.exp() + mu.square()).matrix().colwise().sum().transpose();
}

Vector reparameterize(const LatentGaussian& latent, const Vector& eps) {
  if (eps.size() != latent.mean.size()) throw DimensionError("eps length must equal the latent dimension");
  return latent.mean.array() + (0.5 * latent.logvar.array()).exp() * eps.array();
}

Matrix reparameterize(const LatentBatch& latent, const Matrix& eps) {
  if (eps.rows() != latent.mean.rows() || eps.cols() != latent.mean.cols())
    throw DimensionError("eps shape must match the latent batch");
  return latent.mean.array() + (0.5 * latent.logvar.array()).exp() * eps.array();
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = normal(rng);
  return out;
}

bool VaeGradients::all_finite() const {
  return vaeem::all_finite(trunk) && vaeem::all_finite(mean_head) && vaeem::all_finite(logvar_head) &&
         vaeem::all_finite(decoder);
}

void VaeGradients::scale(double factor) {
  for (auto* s : {&trunk, &mean_head, &logvar_head, &decoder})
    for (auto& l : *s) {
      l.weight *= factor;
      l.bias *= factor;
    }
}

VaeModel::VaeModel(const VaeArchitecture& arch, double beta, double dropout_rate, Rng& init_rng) {
  arch.validate();
  std::vector<int> trunk_dims(arch.encoder_dims.begin(), arch.encoder_dims.end() - 1);
  const int hidden = trunk_dims.back();
  const std::vector<int> head_dims{hidden, arch.latent_dim()};
  if (trunk_dims.size() < 2) throw DimensionError("encoder needs at least one hidden width");
  trunk_ = Mlp::glorot(trunk_dims, arch.slope, true, init_rng);
  mean_head_ = Mlp::glorot(head_dims, arch.slope, false, init_rng);
  logvar_head_ = Mlp::glorot(head_dims, arch.slope, false, init_rng);
  decoder_ = Mlp::glorot(arch.decoder_dims, arch.slope, false, init_rng);
  beta_ = beta;
  dropout_rate_ = dropout_rate;
  validate();
  trunk_opt_ = Adam(trunk_);
  mean_opt_ = Adam(mean_head_);
  logvar_opt_ = Adam(logvar_head_);
  decoder_opt_ = Adam(decoder_);
}

VaeModel::VaeModel(Mlp trunk, Mlp mean_head, Mlp logvar_head, Mlp decoder, double beta, double dropout_rate)
    : trunk_(std::move(trunk)),
      mean_head_(std::move(mean_head)),
      logvar_head_(std::move(logvar_head)),
      decoder_(std::move(decoder)),
      beta_(beta),
      dropout_rate_(dropout_rate) {
  validate();
  trunk_opt_ = Adam(trunk_);
  mean_opt_ = Adam(mean_head_);
  logvar_opt_ = Adam(logvar_head_);
  decoder_opt_ = Adam(decoder_);
}

void VaeModel::validate() const {
  if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw std::invalid_argument("reconstruction weight must be >= 0");
  if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (mean_head_.in_dim() != trunk_.out_dim() || logvar_head_.in_dim() != trunk_.out_dim())
    throw DimensionError("encoder heads must consume the trunk output");
  if (mean_head_.out_dim() != logvar_head_.out_dim())
    throw DimensionError("mean and log-variance heads must have equal width");
  if (decoder_.in_dim() != mean_head_.out_dim()) throw DimensionError("decoder input must equal latent dimension");
  if (decoder_.out_dim() != trunk_.in_dim()) throw DimensionError("decoder output must equal data dimension");
}

void VaeModel::set_beta(double beta) {
  beta_ = beta;
  validate();
}

void VaeModel::set_dropout_rate(double rate) {
  dropout_rate_ = rate;
  validate();
}

LatentBatch VaeModel::encode(const Matrix& x) const {
  const Matrix h = trunk_.predict(x);
  return {mean_head_.predict(h), clamp_logvar(logvar_head_.predict(h))};
}

LatentGaussian VaeModel::encode(const Vector& x) const {
  LatentBatch b = encode(Matrix(x));
  return {b.mean.col(0), b.logvar.col(0)};
}

Matrix VaeModel::decode(const Matrix& z) const { return decoder_.predict(z); }

Vector VaeModel::decode(const Vector& z) const { return decoder_.predict(Matrix(z)).col(0); }

Matrix VaeModel::draw_noise(Eigen::Index cols, Rng& rng) const {
  return standard_normal(latent_dim(), cols, rng);
}

Vector VaeModel::elbo_with_noise(const Matrix& x, std::span<const Matrix> eps) const {
  if (eps.empty()) throw std::invalid_argument("at least one noise draw is required");
  const LatentBatch latent = encode(x);
  Vector recon = Vector::Zero(x.cols());
  for (const Matrix& e : eps) {
    const Matrix xhat = decoder_.predict(reparameterize(latent, e));
    recon += (xhat - x).colwise().squaredNorm().transpose();
  }
  Vector elbo = -(0.5 * beta_ / static_cast<double>(eps.size())) * recon - kl_std_normal(latent);
  for (Eigen::Index i = 0; i < elbo.size(); ++i)
    if (!std::isfinite(elbo(i)))
      throw NonFiniteError("non-finite ELBO at sample " + std::to_string(i), static_cast<long>(i));
  return elbo;
}

Vector VaeModel::elbo_batch(const Matrix& x, int num_mc, Rng& rng) const {
  if (num_mc < 1) throw std::invalid_argument("num_mc must be >= 1");
  std::vector<Matrix> eps;
  eps.reserve(num_mc);
  for (int l = 0; l < num_mc; ++l) eps.push_back(draw_noise(x.cols(), rng));
  return elbo_with_noise(x, eps);
}

double VaeModel::elbo_estimate(const Vector& x, int num_mc, Rng& rng) const {
  return elbo_batch(Matrix(x), num_mc, rng)(0);
}

VaeLossGrad VaeModel::loss_grad(const Matrix& x, const Vector& weights, std::span<const Matrix> eps, bool training,
                                Rng* rng) const {
  const Eigen::Index batch = x.cols();
  const auto num_mc = static_cast<Eigen::Index>(eps.size());
  if (num_mc == 0) throw std::invalid_argument("at least one noise draw is required");
  if (weights.size() != batch) throw DimensionError("weights length must equal batch size");
  const Eigen::Index n = latent_dim();
  for (const Matrix& e : eps)
    if (e.rows() != n || e.cols() != batch) throw DimensionError("noise shape must be latent_dim x batch");

  const double rate = training ? dropout_rate_ : 0.0;
  ForwardResult trunk_fw = trunk_.forward(x, training, rate, rng);
  ForwardResult mean_fw = mean_head_.forward(trunk_fw.output);
  ForwardResult lv_fw = logvar_head_.forward(trunk_fw.output);
  const Matrix& mu = mean_fw.output;
  const Matrix logvar = clamp_logvar(lv_fw.output);
  const Matrix sigma = (0.5 * logvar.array()).exp();

  Matrix z(n, batch * num_mc);
  for (Eigen::Index l = 0; l < num_mc; ++l)
    z.middleCols(l * batch, batch) = mu.array() + sigma.array() * eps[l].array();
  ForwardResult dec_fw = decoder_.forward(z, training, rate, rng);

  Matrix residual = dec_fw.output;
  for (Eigen::Index l = 0; l < num_mc; ++l) residual.middleCols(l * batch, batch) -= x;

  const double inv_l = 1.0 / static_cast<double>(num_mc);
  Vector recon = Vector::Zero(batch);
  for (Eigen::Index l = 0; l < num_mc; ++l)
    recon += residual.middleCols(l * batch, batch).colwise().squaredNorm().transpose();
  recon *= 0.5 * beta_ * inv_l;
  const Vector kl = kl_std_normal(LatentBatch{mu, logvar});

  VaeLossGrad out;
  out.elbo = -recon - kl;
  out.loss = -weights.dot(out.elbo);
  out.finite = std::isfinite(out.loss) && out.elbo.allFinite();
  if (!out.finite) return out;

  // d loss / d xhat = w_i * beta * (xhat - x) / L
  Matrix dxhat = residual;
  for (Eigen::Index l = 0; l < num_mc; ++l)
    dxhat.middleCols(l * batch, batch) *= (beta_ * inv_l) * weights.asDiagonal();
  BackwardResult dec_bw = decoder_.backward(dec_fw.cache, dxhat);

  Matrix dmu = mu * weights.asDiagonal();
  Matrix dlv = (0.5 * (logvar.array().exp() - 1.0)).matrix() * weights.asDiagonal();
  for (Eigen::Index l = 0; l < num_mc; ++l) {
    const auto dz = dec_bw.input_grad.middleCols(l * batch, batch);
    dmu += dz;
    dlv.array() += dz.array() * eps[l].array() * 0.5 * sigma.array();
  }
  // clamp passes no gradient outside its range
  dlv.array() *= (lv_fw.output.array() >= kLogvarMin && lv_fw.output.array() <= kLogvarMax).cast<double>();

  BackwardResult mean_bw = mean_head_.backward(mean_fw.cache, dmu);
  BackwardResult lv_bw = logvar_head_.backward(lv_fw.cache, dlv);
  BackwardResult trunk_bw = trunk_.backward(trunk_fw.cache, mean_bw.input_grad + lv_bw.input_grad);

  out.grads.trunk = std::move(trunk_bw.param_grads);
  out.grads.mean_head = std::move(mean_bw.param_grads);
  out.grads.logvar_head = std::move(lv_bw.param_grads);
  out.grads.decoder = std::move(dec_bw.param_grads);
  out.finite = out.grads.all_finite();
  return out;
}

VaeLossGrad VaeModel::loss_grad(const Matrix& x, const Vector& weights, int num_mc, bool training, Rng& rng) const {
  if (num_mc < 1) throw std::invalid_argument("num_mc must be >= 1");
  std::vector<Matrix> eps;
  eps.reserve(num_mc);
  for (int l = 0; l < num_mc; ++l) eps.push_back(draw_noise(x.cols(), rng));
  return loss_grad(x, weights, eps, training, &rng);
}

VaeGradients VaeModel::elbo_grad(const Vector& x, int num_mc, bool training, Rng& rng) const {
  VaeLossGrad lg = loss_grad(Matrix(x), Vector::Ones(1), num_mc, training, rng);
  if (!lg.finite) throw NonFiniteError("non-finite ELBO gradient", 0);
  VaeGradients g;
  g.trunk = negated(lg.grads.trunk);
  g.mean_head = negated(lg.grads.mean_head);
  g.logvar_head = negated(lg.grads.logvar_head);
  g.decoder = negated(lg.grads.decoder);
  return g;
}

Matrix VaeModel::sample(int count, Rng& rng) const {
  if (count < 0) throw std::invalid_argument("sample count must be >= 0");
  if (count == 0) return Matrix(data_dim(), 0);
  return decoder_.predict(draw_noise(count, rng));
}

bool VaeModel::apply_gradients(const VaeGradients& g, double lr) {
  if (!g.all_finite()) return false;
  trunk_opt_.step(trunk_, g.trunk, lr);
  mean_opt_.step(mean_head_, g.mean_head, lr);
  logvar_opt_.step(logvar_head_, g.logvar_head, lr);
  decoder_opt_.step(decoder_, g.decoder, lr);
  return true;
}

}  // namespace vaeem

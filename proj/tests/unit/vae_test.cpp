#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vaeem/vae.hpp"

namespace vaeem {
namespace {

Mlp dense(Matrix w, Vector b, bool activate = false) {
  LayerStack layers;
  layers.push_back({std::move(w), std::move(b)});
  return Mlp(std::move(layers), 0.2, activate);
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix mat(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> v) {
  Matrix m(rows, cols);
  auto it = v.begin();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = *it++;
  return m;
}

VaeModel hand_model() {
  Mlp trunk = dense(mat(2, 2, {1, 2, -1, 1}), vec({0, 0.5}), true);
  Mlp mean = dense(mat(1, 2, {2, 1}), vec({0.1}));
  Mlp logvar = dense(mat(1, 2, {-1, 3}), vec({0}));
  LayerStack dec{{mat(2, 1, {2, -4}), vec({0, 0})}, {mat(2, 2, {1, 1, 0, -1}), vec({0, 1})}};
  return VaeModel(std::move(trunk), std::move(mean), std::move(logvar), Mlp(dec, 0.2), 1.0);
}

TEST(Kl, ZeroAtStandardNormal) {
  EXPECT_EQ(kl_std_normal(LatentGaussian{Vector::Zero(3), Vector::Zero(3)}), 0.0);
}

TEST(Kl, ScalarOracle) {
  // 0.5 * (4 - 1 - ln 4)
  const double kl = kl_std_normal(LatentGaussian{vec({0.0}), vec({std::log(4.0)})});
  EXPECT_NEAR(kl, 0.8068528194400547, 1e-15);
}

TEST(Kl, BatchMatchesPerColumn) {
  Rng rng(1);
  const Matrix mu = standard_normal(3, 4, rng), lv = standard_normal(3, 4, rng);
  const Vector batch = kl_std_normal(LatentBatch{mu, lv});
  for (Eigen::Index c = 0; c < 4; ++c)
    EXPECT_NEAR(batch(c), kl_std_normal(LatentGaussian{mu.col(c), lv.col(c)}), 1e-14);
}

TEST(Kl, NonNegativeOnRandomGaussians) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Matrix mu = 3.0 * standard_normal(4, 1, rng), lv = 3.0 * standard_normal(4, 1, rng);
    EXPECT_GE(kl_std_normal(LatentGaussian{mu.col(0), lv.col(0)}), 0.0);
  }
}

TEST(Reparameterize, ScalarOracle) {
  const Vector z = reparameterize(LatentGaussian{vec({1.0}), vec({std::log(4.0)})}, vec({0.5}));
  EXPECT_NEAR(z(0), 2.0, 1e-15);
}

TEST(Reparameterize, ZeroNoiseGivesMean) {
  const Vector mu = vec({0.3, -2.0});
  EXPECT_EQ(reparameterize(LatentGaussian{mu, vec({1.0, -4.0})}, Vector::Zero(2)), mu);
}

TEST(Reparameterize, ShapeMismatchThrows) {
  EXPECT_THROW(reparameterize(LatentGaussian{Vector::Zero(2), Vector::Zero(2)}, Vector::Zero(3)), DimensionError);
}

TEST(VaeModel, EncodeHandComputed) {
  const LatentGaussian q = hand_model().encode(vec({1.0, 0.0}));
  EXPECT_NEAR(q.mean(0), 2.0, 1e-15);
  EXPECT_NEAR(q.logvar(0), -1.3, 1e-15);
}

TEST(VaeModel, DecodeHandComputed) {
  const Vector x = hand_model().decode(vec({0.5}));
  EXPECT_NEAR(x(0), 0.6, 1e-15);
  EXPECT_NEAR(x(1), 1.4, 1e-15);
}

TEST(VaeModel, LogvarIsClampedAndPassesNoGradient) {
  VaeModel m = hand_model();
  m.logvar_head().layers()[0].bias << 100.0;
  EXPECT_EQ(m.encode(vec({1.0, 0.0})).logvar(0), kLogvarMax);
  m.logvar_head().layers()[0].bias << -100.0;
  EXPECT_EQ(m.encode(vec({1.0, 0.0})).logvar(0), kLogvarMin);
  const Matrix x = mat(2, 1, {1.0, 0.0});
  const std::vector<Matrix> eps{mat(1, 1, {0.7})};
  const VaeLossGrad lg = m.loss_grad(x, Vector::Ones(1), eps);
  ASSERT_TRUE(lg.finite);
  for (double g : testing::flatten(lg.grads.logvar_head)) EXPECT_EQ(g, 0.0);
}

TEST(VaeModel, RejectsInconsistentShapes) {
  Mlp trunk = dense(Matrix::Zero(2, 2), Vector::Zero(2), true);
  Mlp mean = dense(Matrix::Zero(1, 2), Vector::Zero(1));
  Mlp logvar = dense(Matrix::Zero(2, 2), Vector::Zero(2));
  Mlp dec = dense(Matrix::Zero(2, 1), Vector::Zero(2));
  EXPECT_THROW(VaeModel(trunk, mean, logvar, dec, 1.0), DimensionError);
}

TEST(VaeArchitecture, ValidatesChaining) {
  EXPECT_NO_THROW((VaeArchitecture{{4, 3, 2}, {2, 3, 4}}.validate()));
  EXPECT_THROW((VaeArchitecture{{4, 3, 2}, {3, 3, 4}}.validate()), DimensionError);
  EXPECT_THROW((VaeArchitecture{{4, 3, 2}, {2, 3, 5}}.validate()), DimensionError);
  Rng rng(0);
  EXPECT_THROW(VaeModel(VaeArchitecture{{4, 2}, {2, 4}}, 1.0, 0.0, rng), DimensionError);
}

TEST(VaeModel, ElboNonFiniteNamesSample) {
  const VaeModel m = hand_model();
  Matrix x = Matrix::Zero(2, 4);
  x(1, 2) = std::numeric_limits<double>::infinity();
  const std::vector<Matrix> eps{Matrix::Zero(1, 4)};
  try {
    m.elbo_with_noise(x, eps);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.sample(), 2);
  }
}

TEST(VaeModel, SampleShapesAndEmpty) {
  Rng rng(3);
  const VaeModel m(VaeArchitecture{{3, 5, 2}, {2, 5, 3}}, 1.0, 0.0, rng);
  EXPECT_EQ(m.sample(0, rng).cols(), 0);
  EXPECT_EQ(m.sample(0, rng).rows(), 3);
  const Matrix s = m.sample(7, rng);
  EXPECT_EQ(s.rows(), 3);
  EXPECT_EQ(s.cols(), 7);
  EXPECT_THROW(m.sample(-1, rng), std::invalid_argument);
}

TEST(VaeModel, FixedNoiseSampleIsDeterministic) {
  Rng init(4);
  const VaeModel m(VaeArchitecture{{3, 5, 2}, {2, 5, 3}}, 1.0, 0.0, init);
  Rng a(9), b(9);
  EXPECT_EQ(m.sample(5, a), m.sample(5, b));
}

// At m = 0, s = 0 (unit variance), eps = 0 and decoder bias = x, every
// partial derivative of the single-sample ELBO vanishes.
TEST(VaeModel, KnownCriticalPointHasZeroGradient) {
  Mlp trunk = dense(mat(1, 1, {1.0}), vec({0.0}), true);
  Mlp mean = dense(mat(1, 1, {0.0}), vec({0.0}));
  Mlp logvar = dense(mat(1, 1, {0.0}), vec({0.0}));
  Mlp dec = dense(mat(1, 1, {0.8}), vec({0.35}));
  const VaeModel m(trunk, mean, logvar, dec, 1.0);
  const std::vector<Matrix> eps{Matrix::Zero(1, 1)};
  const VaeLossGrad lg = m.loss_grad(mat(1, 1, {0.35}), Vector::Ones(1), eps);
  double norm = 0.0;
  for (const auto* s : {&lg.grads.trunk, &lg.grads.mean_head, &lg.grads.logvar_head, &lg.grads.decoder})
    for (double g : testing::flatten(*s)) norm += g * g;
  EXPECT_LT(std::sqrt(norm), 1e-12);
}

// Linear-Gaussian model: encoder is exact for p(x) = N(c, W W^T + I) when
// q(z|x) = N(S W^T (x - c), S), S = (I + W^T W)^-1 with W^T W diagonal. The
// ELBO then equals log p(x) up to the dropped -d/2 log 2pi term.
TEST(VaeModel, ElboEqualsEvidenceAtExactPosterior) {
  const Matrix w = mat(2, 2, {1.5, 0.0, 0.0, -0.5});  // orthogonal columns
  const Vector c = vec({0.2, -0.1});
  const Vector x = vec({1.0, 0.6});
  const Matrix s = (Matrix::Identity(2, 2) + w.transpose() * w).inverse();
  const Vector mu = s * w.transpose() * (x - c);
  const Vector lv = s.diagonal().array().log();

  Mlp trunk = dense(Matrix::Identity(2, 2), Vector::Zero(2), true);
  Mlp mean = dense(Matrix::Zero(2, 2), mu);
  Mlp logvar = dense(Matrix::Zero(2, 2), lv);
  const VaeModel m(trunk, mean, logvar, dense(w, c), 1.0);

  const Matrix cov = w * w.transpose() + Matrix::Identity(2, 2);
  const Vector r = x - c;
  const double log_p = -0.5 * (r.dot(cov.inverse() * r) + std::log(cov.determinant()) + 2 * std::log(2 * std::numbers::pi));
  const double expected = log_p + std::log(2 * std::numbers::pi);

  Rng rng(5);
  const int draws = 100000;
  std::vector<Matrix> eps{standard_normal(2, draws, rng)};
  const Matrix xs = x.replicate(1, draws);
  const Vector elbo = m.elbo_with_noise(xs, eps);
  const double mean_elbo = elbo.mean();
  const double se = std::sqrt((elbo.array() - mean_elbo).square().sum() / (draws - 1) / draws);
  EXPECT_LT(std::abs(mean_elbo - expected), 4.0 * se + 1e-12) << mean_elbo << " vs " << expected;
}

// Analytic expectation of the reconstruction term for a linear decoder.
TEST(VaeModel, MonteCarloElboMatchesLinearDecoderClosedForm) {
  const Matrix w = mat(3, 2, {1.0, 0.5, -0.3, 2.0, 0.7, 0.1});
  const Vector c = vec({0.1, 0.2, 0.3});
  const Vector mu = vec({0.4, -0.8}), lv = vec({-0.5, 0.3});
  const Vector x = vec({0.5, 1.5, 0.25});
  const double beta = 5.0;
  const VaeModel m(dense(Matrix::Identity(3, 3), Vector::Zero(3), true), dense(Matrix::Zero(2, 3), mu),
                   dense(Matrix::Zero(2, 3), lv), dense(w, c), beta);
  const Vector sigma2 = lv.array().exp();
  double trace = 0.0;
  for (Eigen::Index j = 0; j < 2; ++j) trace += sigma2(j) * w.col(j).squaredNorm();
  const double kl = 0.5 * (sigma2.array() - 1.0 - lv.array() + mu.array().square()).sum();
  const double expected = -0.5 * beta * ((x - w * mu - c).squaredNorm() + trace) - kl;

  Rng rng(6);
  const int draws = 100000;
  std::vector<Matrix> eps{standard_normal(2, draws, rng)};
  const Vector elbo = m.elbo_with_noise(x.replicate(1, draws), eps);
  const double mean_elbo = elbo.mean();
  const double se = std::sqrt((elbo.array() - mean_elbo).square().sum() / (draws - 1) / draws);
  EXPECT_LT(std::abs(mean_elbo - expected), 4.0 * se);
}

TEST(VaeModel, ElboGradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    VaeModel m(VaeArchitecture{{4, 5, 2}, {2, 6, 4}}, 2.0, 0.0, rng);
    for (auto* net : {&m.trunk(), &m.mean_head(), &m.logvar_head(), &m.decoder()})
      for (auto& l : net->layers()) l.bias = 0.3 * standard_normal(l.bias.size(), 1, rng);
    const Matrix x = standard_normal(4, 1, rng);
    const std::vector<Matrix> eps{standard_normal(2, 1, rng), standard_normal(2, 1, rng)};
    const VaeLossGrad lg = m.loss_grad(x, Vector::Ones(1), eps);
    ASSERT_TRUE(lg.finite);
    auto f = [&] { return -m.elbo_with_noise(x, eps)(0); };
    const std::pair<Mlp*, const LayerStack*> groups[] = {{&m.trunk(), &lg.grads.trunk},
                                                         {&m.mean_head(), &lg.grads.mean_head},
                                                         {&m.logvar_head(), &lg.grads.logvar_head},
                                                         {&m.decoder(), &lg.grads.decoder}};
    for (const auto& [net, grads] : groups) {
      const auto numeric = testing::central_differences(f, testing::parameter_pointers(net->layers()));
      EXPECT_LT(testing::max_relative_error(testing::flatten(*grads), numeric), 1e-3) << "trial " << trial;
    }
  }
}

TEST(VaeModel, ElboGradIsNegatedLossGradient) {
  Rng init(8);
  const VaeModel m(VaeArchitecture{{3, 4, 2}, {2, 4, 3}}, 1.0, 0.0, init);
  const Vector x = vec({0.1, 0.5, 0.9});
  Rng a(1), b(1);
  const VaeGradients g = m.elbo_grad(x, 2, false, a);
  const VaeLossGrad lg = m.loss_grad(Matrix(x), Vector::Ones(1), 2, false, b);
  const auto ge = testing::flatten(g.decoder), gl = testing::flatten(lg.grads.decoder);
  for (std::size_t i = 0; i < ge.size(); ++i) EXPECT_EQ(ge[i], -gl[i]);
}

TEST(VaeModel, LossGradIsLinearInWeights) {
  Rng init(9);
  const VaeModel m(VaeArchitecture{{3, 4, 2}, {2, 4, 3}}, 1.0, 0.0, init);
  Rng rng(10);
  const Matrix x = standard_normal(3, 5, rng);
  const std::vector<Matrix> eps{standard_normal(2, 5, rng)};
  const Vector w = Vector::LinSpaced(5, 0.1, 0.9);
  const VaeLossGrad one = m.loss_grad(x, w, eps);
  const VaeLossGrad two = m.loss_grad(x, 2.0 * w, eps);
  EXPECT_NEAR(two.loss, 2.0 * one.loss, 1e-12 * std::abs(one.loss));
  const auto g1 = testing::flatten(one.grads.trunk), g2 = testing::flatten(two.grads.trunk);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 2.0 * g1[i], 1e-12);
}

TEST(VaeModel, ZeroWeightsGiveZeroGradient) {
  Rng init(11);
  const VaeModel m(VaeArchitecture{{3, 4, 2}, {2, 4, 3}}, 1.0, 0.0, init);
  Rng rng(12);
  const VaeLossGrad lg = m.loss_grad(standard_normal(3, 4, rng), Vector::Zero(4), 1, false, rng);
  for (double g : testing::flatten(lg.grads.decoder)) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(lg.loss, 0.0);
}

TEST(VaeModel, ApplyGradientsRejectsNonFinite) {
  Rng init(13);
  VaeModel m(VaeArchitecture{{2, 3, 1}, {1, 3, 2}}, 1.0, 0.0, init);
  Rng rng(14);
  VaeLossGrad lg = m.loss_grad(standard_normal(2, 3, rng), Vector::Ones(3), 1, false, rng);
  lg.grads.decoder[0].bias(0) = std::nan("");
  const auto before = testing::flatten(m.decoder().layers());
  EXPECT_FALSE(m.apply_gradients(lg.grads, 0.1));
  EXPECT_EQ(testing::flatten(m.decoder().layers()), before);
  EXPECT_EQ(m.trunk_optimizer().steps(), 0);
}

TEST(VaeModel, TrainingStepsReduceLossOnFixedNoise) {
  Rng init(15);
  VaeModel m(VaeArchitecture{{2, 8, 2}, {2, 8, 2}}, 1.0, 0.0, init);
  Rng rng(16);
  const Matrix x = standard_normal(2, 64, rng);
  const std::vector<Matrix> eps{standard_normal(2, 64, rng)};
  const Vector w = Vector::Ones(64);
  const double start = m.loss_grad(x, w, eps).loss;
  for (int s = 0; s < 200; ++s) m.apply_gradients(m.loss_grad(x, w, eps).grads, 1e-2);
  EXPECT_LT(m.loss_grad(x, w, eps).loss, start);
}

TEST(VaeModel, DropoutTrainingNeedsRng) {
  Rng init(17);
  const VaeModel m(VaeArchitecture{{2, 8, 2}, {2, 8, 2}}, 1.0, 0.3, init);
  Rng a(1), b(1);
  const Matrix x = Matrix::Constant(2, 3, 0.5);
  const VaeLossGrad la = m.loss_grad(x, Vector::Ones(3), 1, true, a);
  const VaeLossGrad lb = m.loss_grad(x, Vector::Ones(3), 1, true, b);
  EXPECT_EQ(la.loss, lb.loss);
}

}  // namespace
}  // namespace vaeem

#include <gtest/gtest.h>

#include <cmath>

#include "vaeem/em_cluster.hpp"
#include "vaeem/metrics.hpp"

namespace vaeem {
namespace {

EmConfig tiny_config() {
  EmConfig c = EmConfig::synthetic();
  c.clusters = 3;
  c.encoder_dims = {2, 8, 2};
  c.decoder_dims = {2, 8, 2};
  c.em_iterations = 4;
  c.epochs_per_m_step = 2;
  c.batch_size = 32;
  c.mc_samples_e = 2;
  c.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

Matrix small_data(int n, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(2, n, rng);
}

TEST(SoftAssignments, HardLabelsBreakTiesLow) {
  SoftAssignments s{Matrix(2, 3)};
  s.u << 0.4, 0.4, 0.2, 0.1, 0.45, 0.45;
  EXPECT_EQ(s.hard_labels(), (std::vector<int>{0, 1}));
  EXPECT_TRUE(s.on_simplex());
  EXPECT_NEAR(s.mean_max_responsibility(), 0.425, 1e-15);
}

TEST(SoftAssignments, OnSimplexRejectsNegative) {
  SoftAssignments s{Matrix(1, 2)};
  s.u << 1.1, -0.1;
  EXPECT_FALSE(s.on_simplex());
}

TEST(Softmax, EqualScoresGiveUniform) {
  const SoftAssignments s = softmax_rows(Matrix::Constant(3, 4, -12.5));
  EXPECT_TRUE(s.u.isApprox(Matrix::Constant(3, 4, 0.25)));
}

TEST(Softmax, LargeGapIsOneHot) {
  Matrix scores(1, 3);
  scores << -1e6, 0.0, -5e5;
  const SoftAssignments s = softmax_rows(scores);
  EXPECT_EQ(s.u(0, 1), 1.0);
  EXPECT_EQ(s.u(0, 0), 0.0);
}

TEST(Softmax, ShiftInvariantAndStableAtExtremes) {
  Matrix a(1, 3);
  a << -1e5, -1e5 + 1.0, -1e5 + 2.0;
  Matrix b(1, 3);
  b << 0.0, 1.0, 2.0;
  EXPECT_TRUE(softmax_rows(a).u.isApprox(softmax_rows(b).u, 1e-12));
  EXPECT_TRUE(softmax_rows(a).on_simplex(1e-12));
}

TEST(Objective, HandComputed) {
  // ELBOs (0, ln 3), u = (1/4, 3/4): objective = -(3/4) ln 3 + (1/4) ln(1/4) + (3/4) ln(3/4) = -ln 4
  Matrix elbos(1, 2);
  elbos << 0.0, std::log(3.0);
  SoftAssignments u{Matrix(1, 2)};
  u.u << 0.25, 0.75;
  EXPECT_NEAR(em_objective(elbos, u), -1.3862943611198906, 1e-15);
}

TEST(Objective, SoftmaxMinimisesOverAssignments) {
  Rng rng(1);
  const Matrix elbos = 3.0 * standard_normal(6, 4, rng);
  const double best = em_objective(elbos, softmax_rows(elbos));
  for (int i = 0; i < 50; ++i) EXPECT_LE(best, em_objective(elbos, init_assignments(6, 4, rng)) + 1e-12);
  // minimum equals -sum_i logsumexp_k ELBO_ik
  double lse = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double m = elbos.row(i).maxCoeff();
    lse += m + std::log((elbos.row(i).array() - m).exp().sum());
  }
  EXPECT_NEAR(best, -lse, 1e-10);
}

TEST(Objective, ZeroResponsibilityContributesNothing) {
  Matrix elbos(1, 2);
  elbos << -std::numeric_limits<double>::max(), -1.0;
  SoftAssignments u{Matrix(1, 2)};
  u.u << 0.0, 1.0;
  EXPECT_EQ(em_objective(elbos, u), 1.0);
}

TEST(InitAssignments, RowsOnSimplexAndSeeded) {
  Rng a(3), b(3);
  const SoftAssignments s = init_assignments(100, 5, a);
  EXPECT_TRUE(s.on_simplex(1e-12));
  EXPECT_EQ(s.u, init_assignments(100, 5, b).u);
  EXPECT_GT(s.u.minCoeff(), 0.0);
}

TEST(InitAssignments, DirichletMarginalMean) {
  Rng rng(4);
  const SoftAssignments s = init_assignments(20000, 4, rng);
  // Dirichlet(1,1,1,1) marginal: Beta(1,3), mean 1/4, sd sqrt(3/80)=0.194
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(s.u.col(c).mean(), 0.25, 0.01);
}

TEST(InitAssignments, SlotStreamsPermuteColumns) {
  const std::vector<std::uint64_t> fwd{0, 1, 2}, rev{2, 1, 0};
  const SoftAssignments a = init_assignments(10, fwd, 7);
  const SoftAssignments b = init_assignments(10, rev, 7);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a.u.col(c), b.u.col(2 - c));
}

TEST(EmConfig, PresetsMatchReferenceTable) {
  const EmConfig m = EmConfig::mnist();
  EXPECT_EQ(m.clusters, 10);
  EXPECT_EQ(m.batch_size, 256);
  EXPECT_EQ(m.learning_rate, 1e-3);
  EXPECT_EQ(m.em_iterations, 300);
  EXPECT_EQ(m.mc_samples_e, 10);
  EXPECT_EQ(m.mc_samples_m, 1);
  EXPECT_EQ(m.dropout_rate, 0.2);
  EXPECT_EQ(m.epochs_per_m_step, 20);
  EXPECT_EQ(m.encoder_dims, (std::vector<int>{784, 500, 20}));
  EXPECT_EQ(m.decoder_dims, (std::vector<int>{20, 500, 784}));
  const EmConfig s = EmConfig::synthetic();
  EXPECT_EQ(s.learning_rate, 1e-4);
  EXPECT_EQ(s.reconstruction_weight, 5.0);
  EXPECT_EQ(s.em_iterations, 1000);
  EXPECT_EQ(s.epochs_per_m_step, 5);
  EXPECT_EQ(s.encoder_dims, (std::vector<int>{2, 100, 2}));
  EXPECT_EQ(s.dropout_rate, 0.0);
}

TEST(EmConfig, LearningRateSchedule) {
  const EmConfig m = EmConfig::mnist();
  EXPECT_EQ(m.learning_rate_at(1), 1e-3);
  EXPECT_EQ(m.learning_rate_at(20), 1e-3);
  EXPECT_NEAR(m.learning_rate_at(21), 9e-4, 1e-18);
  EXPECT_NEAR(m.learning_rate_at(41), 8.1e-4, 1e-18);
  EXPECT_EQ(EmConfig::synthetic().learning_rate_at(999), 1e-4);
}

TEST(EmConfig, ValidationNamesKey) {
  EmConfig c = tiny_config();
  c.batch_size = 0;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
  }
  c = tiny_config();
  c.decoder_dims = {3, 8, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ElboMatrix, ShapeAndDimensionCheck) {
  const EmConfig c = tiny_config();
  const std::vector<std::uint64_t> streams{0, 1, 2};
  const auto models = init_models(c, streams);
  std::vector<Rng> rngs{Rng(1), Rng(2), Rng(3)};
  const Matrix e = elbo_matrix(models, small_data(7, 1), 2, rngs);
  EXPECT_EQ(e.rows(), 7);
  EXPECT_EQ(e.cols(), 3);
  EXPECT_TRUE(e.allFinite());
  EXPECT_THROW(elbo_matrix(models, Matrix::Zero(3, 2), 1, rngs), DimensionError);
}

TEST(ElboMatrix, ThreadCountDoesNotChangeResult) {
  const EmConfig c = tiny_config();
  const std::vector<std::uint64_t> streams{0, 1, 2};
  const auto models = init_models(c, streams);
  const Matrix x = small_data(1100, 2);
  std::vector<Rng> r1{Rng(1), Rng(2), Rng(3)}, r2 = r1;
  EXPECT_EQ(elbo_matrix(models, x, 3, r1, 1), elbo_matrix(models, x, 3, r2, 3));
}

TEST(TrainWeighted, ZeroWeightLeavesModelUnchangedInValue) {
  const EmConfig c = tiny_config();
  const std::vector<std::uint64_t> streams{0};
  auto models = init_models(c, streams);
  const VaeModel before = models[0];
  Rng rng(3);
  TrainOptions o;
  o.epochs = 2;
  o.batch_size = 8;
  o.training = false;
  const TrainReport r = train_weighted(models[0], small_data(20, 3), Vector::Zero(20), o, rng);
  EXPECT_EQ(r.steps, 6);
  EXPECT_EQ(models[0].decoder().layers()[0].weight, before.decoder().layers()[0].weight);
}

TEST(Fit, HistoryLengthAndSimplex) {
  const EmConfig c = tiny_config();
  const Matrix x = small_data(60, 4);
  const FitResult r = fit(c, x);
  EXPECT_EQ(r.history.records.size(), 4u);
  EXPECT_TRUE(r.assignments.on_simplex(1e-9));
  EXPECT_EQ(r.models.size(), 3u);
  for (std::size_t i = 0; i < r.history.records.size(); ++i) {
    EXPECT_EQ(r.history.records[i].iteration, static_cast<int>(i) + 1);
    EXPECT_TRUE(std::isfinite(r.history.records[i].objective));
    EXPECT_FALSE(r.history.records[i].accuracy.has_value());
  }
}

TEST(Fit, RepeatedRunsBitIdentical) {
  const EmConfig c = tiny_config();
  const Matrix x = small_data(50, 5);
  const FitResult a = fit(c, x), b = fit(c, x);
  EXPECT_EQ(a.assignments.u, b.assignments.u);
  EXPECT_EQ(a.models[1].decoder().layers()[1].weight, b.models[1].decoder().layers()[1].weight);
  for (std::size_t i = 0; i < a.history.records.size(); ++i)
    EXPECT_EQ(a.history.records[i].objective, b.history.records[i].objective);
}

TEST(Fit, ThreadedMatchesSerial) {
  EmConfig c = tiny_config();
  const Matrix x = small_data(50, 6);
  const FitResult serial = fit(c, x);
  c.threads = 3;
  const FitResult threaded = fit(c, x);
  EXPECT_EQ(serial.assignments.u, threaded.assignments.u);
}

TEST(Fit, SlotPermutationPermutesResult) {
  const EmConfig c = tiny_config();
  const Matrix x = small_data(40, 7);
  FitOptions fwd, perm;
  fwd.slot_streams = {0, 1, 2};
  perm.slot_streams = {2, 0, 1};
  const FitResult a = fit(c, x, fwd), b = fit(c, x, perm);
  // slot j of b carries stream perm[j], which is slot perm[j] of a
  for (int j = 0; j < 3; ++j) {
    const int src = static_cast<int>(perm.slot_streams[j]);
    EXPECT_EQ(b.assignments.u.col(j), a.assignments.u.col(src));
    EXPECT_EQ(b.models[j].decoder().layers()[0].weight, a.models[src].decoder().layers()[0].weight);
  }
  for (std::size_t i = 0; i < a.history.records.size(); ++i)
    EXPECT_EQ(a.history.records[i].objective, b.history.records[i].objective);
}

TEST(Fit, SingleClusterGivesUnitResponsibilities) {
  EmConfig c = tiny_config();
  c.clusters = 1;
  const FitResult r = fit(c, small_data(20, 8));
  EXPECT_TRUE(r.assignments.u.isApprox(Matrix::Ones(20, 1)));
}

TEST(Fit, RecordsAccuracyWhenLabelled) {
  const EmConfig c = tiny_config();
  const Matrix x = small_data(30, 9);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[i] = i % 3;
  FitOptions o;
  o.labels = &labels;
  const FitResult r = fit(c, x, o);
  ASSERT_TRUE(r.history.records.back().accuracy.has_value());
  EXPECT_DOUBLE_EQ(*r.history.records.back().accuracy,
                   clustering_accuracy(r.assignments.hard_labels(), labels, 3));
}

TEST(Fit, RejectsBadInputs) {
  EmConfig c = tiny_config();
  EXPECT_THROW(fit(c, small_data(2, 1)), std::invalid_argument);
  EXPECT_THROW(fit(c, Matrix::Zero(3, 10)), DimensionError);
  std::vector<int> labels(3);
  FitOptions o;
  o.labels = &labels;
  EXPECT_THROW(fit(c, small_data(10, 1), o), std::invalid_argument);
}

TEST(Fit, FrozenNoiseObjectiveNeverIncreases) {
  EmConfig c = tiny_config();
  c.frozen_noise = true;
  c.em_iterations = 12;
  c.epochs_per_m_step = 5;
  const FitResult r = fit(c, small_data(80, 10));
  for (std::size_t i = 1; i < r.history.records.size(); ++i)
    EXPECT_LE(r.history.records[i].objective, r.history.records[i - 1].objective + 1e-6) << i;
}

TEST(Fit, IterationCallbackSeesEveryRecord) {
  const EmConfig c = tiny_config();
  int calls = 0;
  FitOptions o;
  o.on_iteration = [&](const EmRecord& rec) { EXPECT_EQ(rec.iteration, ++calls); };
  fit(c, small_data(20, 11), o);
  EXPECT_EQ(calls, c.em_iterations);
}

TEST(Assign, AgreesWithAssignAll) {
  const EmConfig c = tiny_config();
  const std::vector<std::uint64_t> streams{0, 1, 2};
  const auto models = init_models(c, streams);
  const Matrix x = small_data(5, 12);
  Rng rng(3);
  const Assignment a = assign(models, x.col(0), 4, rng);
  EXPECT_NEAR(a.responsibilities.sum(), 1.0, 1e-12);
  EXPECT_GE(a.label, 0);
  EXPECT_LT(a.label, 3);
  const SoftAssignments all = assign_all(models, x, 4, 99);
  EXPECT_EQ(all.u, assign_all(models, x, 4, 99, 2).u);
  EXPECT_TRUE(all.on_simplex(1e-12));
}

TEST(Generate, ShapesAndRange) {
  const EmConfig c = tiny_config();
  const std::vector<std::uint64_t> streams{0, 1, 2};
  const auto models = init_models(c, streams);
  Rng rng(1);
  EXPECT_EQ(generate(models, 2, 6, rng).cols(), 6);
  EXPECT_EQ(generate(models, 0, 0, rng).cols(), 0);
  EXPECT_THROW(generate(models, 3, 1, rng), std::out_of_range);
  EXPECT_THROW(generate(models, -1, 1, rng), std::out_of_range);
}

}  // namespace
}  // namespace vaeem

#include "vaeem/em_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <numeric>
#include <thread>

#include "vaeem/metrics.hpp"

namespace vaeem {

namespace {

enum StreamTag : std::uint64_t {
  kTagInitWeights = 1,
  kTagAssignments = 2,
  kTagMStep = 3,
  kTagEStep = 4,
  kTagFrozenNoise = 5,
};

constexpr Eigen::Index kElboChunk = 512;

template <typename F>
void parallel_for(int count, int threads, F&& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<int> canonical_order(std::span<const std::uint64_t> streams) {
  std::vector<int> order(streams.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return streams[a] < streams[b]; });
  return order;
}

std::vector<std::uint64_t> default_streams(int k) {
  std::vector<std::uint64_t> s(k);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

void emit(const WarningSink& sink, EmHistory& history, std::string message) {
  if (sink)
    sink(message);
  else
    std::clog << "warning: " << message << '\n';
  history.warnings.push_back(std::move(message));
}

/// Full-N ELBO under frozen noise.
Vector frozen_elbo(const VaeModel& model, const Matrix& data, const std::vector<Matrix>& eps) {
  return model.elbo_with_noise(data, eps);
}

/// Full-batch descent on the frozen-noise weighted loss, keeping a step only
/// when the loss does not increase.
void frozen_m_step(VaeModel& model, const Matrix& data, const Vector& weights, const std::vector<Matrix>& eps,
                   int steps, double lr) {
  double current = -weights.dot(frozen_elbo(model, data, eps));
  for (int s = 0; s < steps; ++s) {
    VaeLossGrad lg = model.loss_grad(data, weights, eps, false, nullptr);
    if (!lg.finite) return;
    VaeModel candidate = model;
    if (!candidate.apply_gradients(lg.grads, lr)) return;
    double next = 0.0;
    try {
      next = -weights.dot(frozen_elbo(candidate, data, eps));
    } catch (const NonFiniteError&) {
      return;
    }
    if (!(next <= current)) return;
    model = std::move(candidate);
    current = next;
  }
}

}  // namespace

bool SoftAssignments::on_simplex(double tol) const {
  if (!u.allFinite() || (u.size() > 0 && u.minCoeff() < -tol)) return false;
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    if (std::abs(u.row(i).sum() - 1.0) > tol) return false;
  return true;
}

std::vector<int> SoftAssignments::hard_labels() const {
  std::vector<int> labels(u.rows());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < u.cols(); ++k)
      if (u(i, k) > u(i, best)) best = static_cast<int>(k);
    labels[i] = best;
  }
  return labels;
}

double SoftAssignments::mean_max_responsibility() const {
  if (u.rows() == 0) return 0.0;
  return u.rowwise().maxCoeff().mean();
}

EmConfig EmConfig::mnist() { return EmConfig{}; }

EmConfig EmConfig::synthetic() {
  EmConfig c;
  c.clusters = 5;
  c.encoder_dims = {2, 100, 2};
  c.decoder_dims = {2, 100, 2};
  c.dropout_rate = 0.0;
  c.learning_rate = 1e-4;
  c.lr_decay = 1.0;
  c.decay_every = 0;
  c.batch_size = 256;
  c.mc_samples_e = 10;
  c.mc_samples_m = 1;
  c.reconstruction_weight = 5.0;
  c.epochs_per_m_step = 5;
  c.em_iterations = 1000;
  return c;
}

double EmConfig::learning_rate_at(int iteration) const {
  if (decay_every <= 0 || lr_decay == 1.0) return learning_rate;
  return learning_rate * std::pow(lr_decay, static_cast<double>((iteration - 1) / decay_every));
}

void EmConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key, why); };
  if (clusters < 1) fail("clusters", "must be >= 1");
  if (em_iterations < 0) fail("em_iterations", "must be >= 0");
  if (epochs_per_m_step < 0) fail("epochs_per_m_step", "must be >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(lr_decay > 0.0)) fail("lr_decay", "must be > 0");
  if (decay_every < 0) fail("decay_every", "must be >= 0");
  if (mc_samples_e < 1) fail("mc_samples_e", "must be >= 1");
  if (mc_samples_m < 1) fail("mc_samples_m", "must be >= 1");
  if (!(reconstruction_weight > 0.0)) fail("reconstruction_weight", "must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate", "must be in [0, 1)");
  if (!(activation_slope >= 0.0 && activation_slope < 1.0)) fail("activation_slope", "must be in [0, 1)");
  if (threads < 1) fail("threads", "must be >= 1");
  try {
    architecture().validate();
    if (encoder_dims.size() < 3) throw DimensionError("encoder needs at least one hidden width");
  } catch (const std::exception& e) {
    fail("encoder_dims/decoder_dims", e.what());
  }
}

SoftAssignments init_assignments(Eigen::Index n, int k, Rng& rng) {
  if (n < 1 || k < 1) throw std::invalid_argument("init_assignments needs N, K >= 1");
  std::exponential_distribution<double> expo(1.0);
  SoftAssignments out{Matrix(n, k)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) total += (out.u(i, c) = expo(rng));
    out.u.row(i) /= total;
  }
  return out;
}

SoftAssignments init_assignments(Eigen::Index n, std::span<const std::uint64_t> slot_streams, std::uint64_t seed) {
  const int k = static_cast<int>(slot_streams.size());
  if (n < 1 || k < 1) throw std::invalid_argument("init_assignments needs N, K >= 1");
  std::exponential_distribution<double> expo(1.0);
  Matrix draws(n, k);
  for (int c = 0; c < k; ++c) {
    Rng rng = make_rng(seed, {kTagAssignments, slot_streams[c]});
    for (Eigen::Index i = 0; i < n; ++i) draws(i, c) = expo(rng);
  }
  const std::vector<int> order = canonical_order(slot_streams);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (int c : order) total += draws(i, c);
    draws.row(i) /= total;
  }
  return {std::move(draws)};
}

SoftAssignments softmax_rows(const Matrix& scores, std::span<const int> order) {
  std::vector<int> identity;
  if (order.empty()) {
    identity.resize(scores.cols());
    std::iota(identity.begin(), identity.end(), 0);
    order = identity;
  }
  SoftAssignments out{Matrix(scores.rows(), scores.cols())};
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    double total = 0.0;
    for (int c : order) total += (out.u(i, c) = std::exp(scores(i, c) - m));
    out.u.row(i) /= total;
  }
  return out;
}

Matrix elbo_matrix(std::span<const VaeModel> models, const Matrix& data, int num_mc, std::span<Rng> rngs,
                   int threads) {
  if (rngs.size() != models.size()) throw std::invalid_argument("one rng per model is required");
  if (num_mc < 1) throw std::invalid_argument("num_mc must be >= 1");
  const int k = static_cast<int>(models.size());
  for (const auto& m : models)
    if (m.data_dim() != data.rows()) throw DimensionError("model and data dimensions differ");
  Matrix elbos(data.cols(), k);
  parallel_for(k, threads, [&](int c) {
    for (Eigen::Index start = 0; start < data.cols(); start += kElboChunk) {
      const Eigen::Index len = std::min(kElboChunk, data.cols() - start);
      try {
        elbos.col(c).segment(start, len) = models[c].elbo_batch(data.middleCols(start, len), num_mc, rngs[c]);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("non-finite ELBO for sample " + std::to_string(start + e.sample()) + ", cluster " +
                                 std::to_string(c),
                             start + e.sample());
      }
    }
  });
  return elbos;
}

SoftAssignments e_step(std::span<const VaeModel> models, const Matrix& data, int num_mc, Rng& rng) {
  const std::uint64_t base = rng();
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < models.size(); ++c) rngs.push_back(make_rng(base, {kTagEStep, c}));
  return softmax_rows(elbo_matrix(models, data, num_mc, rngs));
}

double em_objective(const Matrix& elbos, const SoftAssignments& u, std::span<const int> order) {
  if (elbos.rows() != u.u.rows() || elbos.cols() != u.u.cols()) throw DimensionError("objective shape mismatch");
  std::vector<int> identity;
  if (order.empty()) {
    identity.resize(elbos.cols());
    std::iota(identity.begin(), identity.end(), 0);
    order = identity;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < elbos.rows(); ++i)
    for (const int c : order) {
      const double w = u.u(i, c);
      total -= w * elbos(i, c);
      if (w > 0.0) total += w * std::log(w);
    }
  return total;
}

double em_objective(std::span<const VaeModel> models, const Matrix& data, const SoftAssignments& u, int num_mc,
                    Rng& rng) {
  const std::uint64_t base = rng();
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < models.size(); ++c) rngs.push_back(make_rng(base, {kTagEStep, c}));
  return em_objective(elbo_matrix(models, data, num_mc, rngs), u);
}

TrainReport train_weighted(VaeModel& model, const Matrix& data, const Vector& weights, const TrainOptions& options,
                           Rng& rng) {
  if (weights.size() != data.cols()) throw DimensionError("one weight per sample is required");
  if (options.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  TrainReport report;
  std::vector<Eigen::Index> order(data.cols());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t len = std::min<std::size_t>(options.batch_size, order.size() - start);
      Matrix xb(data.rows(), static_cast<Eigen::Index>(len));
      Vector wb(static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = data.col(order[start + j]);
        wb(static_cast<Eigen::Index>(j)) = weights(order[start + j]);
      }
      VaeLossGrad lg = model.loss_grad(xb, wb, options.num_mc, options.training, rng);
      if (!lg.finite || !model.apply_gradients(lg.grads, options.learning_rate)) {
        report.skipped.push_back("epoch " + std::to_string(epoch) + ", batch at " + std::to_string(start) +
                                 ": non-finite loss or gradient, batch skipped");
        continue;
      }
      ++report.steps;
    }
  }
  return report;
}

std::vector<TrainReport> m_step(std::span<VaeModel> models, const Matrix& data, const SoftAssignments& u,
                                const EmConfig& config, double learning_rate, Rng& rng) {
  if (u.clusters() != static_cast<Eigen::Index>(models.size()) || u.size() != data.cols())
    throw DimensionError("assignments shape does not match models/data");
  const std::uint64_t base = rng();
  const TrainOptions options{config.epochs_per_m_step, config.batch_size, config.mc_samples_m, learning_rate,
                             config.dropout_rate > 0.0};
  std::vector<TrainReport> reports(models.size());
  parallel_for(static_cast<int>(models.size()), config.threads, [&](int c) {
    Rng cluster_rng = make_rng(base, {kTagMStep, static_cast<std::uint64_t>(c)});
    reports[c] = train_weighted(models[c], data, u.u.col(c), options, cluster_rng);
  });
  return reports;
}

std::vector<VaeModel> init_models(const EmConfig& config, std::span<const std::uint64_t> slot_streams) {
  std::vector<VaeModel> models;
  models.reserve(slot_streams.size());
  for (std::uint64_t s : slot_streams) {
    Rng rng = make_rng(config.seed, {kTagInitWeights, s});
    models.emplace_back(config.architecture(), config.reconstruction_weight, config.dropout_rate, rng);
  }
  return models;
}

FitResult fit(const EmConfig& config, const Matrix& data, const FitOptions& options) {
  config.validate();
  const int k = config.clusters;
  const Eigen::Index n = data.cols();
  if (n < k) throw std::invalid_argument("fit needs at least as many samples as clusters");
  if (data.rows() != config.encoder_dims.front())
    throw DimensionError("data dimension " + std::to_string(data.rows()) + " does not match encoder input " +
                         std::to_string(config.encoder_dims.front()));
  if (options.labels && static_cast<Eigen::Index>(options.labels->size()) != n)
    throw std::invalid_argument("label count does not match sample count");

  const std::vector<std::uint64_t> streams =
      options.slot_streams.empty() ? default_streams(k) : options.slot_streams;
  if (static_cast<int>(streams.size()) != k) throw std::invalid_argument("one slot stream per cluster is required");
  const std::vector<int> order = canonical_order(streams);

  FitResult result;
  result.models = init_models(config, streams);
  result.assignments = init_assignments(n, streams, config.seed);

  std::vector<std::vector<Matrix>> frozen(k);
  if (config.frozen_noise) {
    for (int c = 0; c < k; ++c) {
      Rng rng = make_rng(config.seed, {kTagFrozenNoise, streams[c]});
      for (int l = 0; l < config.mc_samples_e; ++l) frozen[c].push_back(standard_normal(config.encoder_dims.back(), n, rng));
    }
  }

  int label_classes = 0;
  if (options.labels && !options.labels->empty())
    label_classes = *std::max_element(options.labels->begin(), options.labels->end()) + 1;

  const TrainOptions base_train{config.epochs_per_m_step, config.batch_size, config.mc_samples_m,
                                config.learning_rate, config.dropout_rate > 0.0};

  for (int iter = 1; iter <= config.em_iterations; ++iter) {
    const double lr = config.learning_rate_at(iter);
    const auto it = static_cast<std::uint64_t>(iter);

    // M-step
    std::vector<TrainReport> reports(k);
    parallel_for(k, config.threads, [&](int c) {
      const Vector weights = result.assignments.u.col(c);
      if (config.frozen_noise) {
        frozen_m_step(result.models[c], data, weights, frozen[c], config.epochs_per_m_step, lr);
      } else {
        Rng rng = make_rng(config.seed, {kTagMStep, it, streams[c]});
        TrainOptions opts = base_train;
        opts.learning_rate = lr;
        reports[c] = train_weighted(result.models[c], data, weights, opts, rng);
      }
    });
    for (int c = 0; c < k; ++c)
      for (const auto& msg : reports[c].skipped)
        emit(options.on_warning, result.history, "iteration " + std::to_string(iter) + ", cluster " +
                                                     std::to_string(c) + ": " + msg);

    // E-step
    Matrix elbos(n, k);
    if (config.frozen_noise) {
      parallel_for(k, config.threads, [&](int c) { elbos.col(c) = frozen_elbo(result.models[c], data, frozen[c]); });
    } else {
      std::vector<Rng> rngs;
      for (int c = 0; c < k; ++c) rngs.push_back(make_rng(config.seed, {kTagEStep, it, streams[c]}));
      elbos = elbo_matrix(result.models, data, config.mc_samples_e, rngs, config.threads);
    }
    result.assignments = softmax_rows(elbos, order);

    for (int c = 0; c < k; ++c)
      if (result.assignments.u.col(c).maxCoeff() < 1e-3)
        emit(options.on_warning, result.history,
             "iteration " + std::to_string(iter) + ": cluster " + std::to_string(c) + " is empty");

    EmRecord rec;
    rec.iteration = iter;
    rec.objective = em_objective(elbos, result.assignments, order);
    rec.mean_max_responsibility = result.assignments.mean_max_responsibility();
    rec.learning_rate = lr;
    if (options.labels)
      rec.accuracy = clustering_accuracy(result.assignments.hard_labels(), *options.labels,
                                         std::max(k, label_classes));
    result.history.records.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
  }
  return result;
}

Assignment assign(std::span<const VaeModel> models, const Vector& x, int num_mc, Rng& rng) {
  const std::uint64_t base = rng();
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < models.size(); ++c) rngs.push_back(make_rng(base, {kTagEStep, c}));
  const SoftAssignments u = softmax_rows(elbo_matrix(models, Matrix(x), num_mc, rngs));
  return {u.hard_labels().front(), u.u.row(0).transpose()};
}

SoftAssignments assign_all(std::span<const VaeModel> models, const Matrix& data, int num_mc, std::uint64_t seed,
                           int threads) {
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < models.size(); ++c) rngs.push_back(make_rng(seed, {kTagEStep, c}));
  return softmax_rows(elbo_matrix(models, data, num_mc, rngs, threads));
}

Matrix generate(std::span<const VaeModel> models, int k, int count, Rng& rng) {
  if (k < 0 || k >= static_cast<int>(models.size()))
    throw std::out_of_range("cluster " + std::to_string(k) + " out of range [0, " + std::to_string(models.size()) +
                            ")");
  return models[k].sample(count, rng);
}

}  // namespace vaeem

// Micro benchmarks for the hot paths of one EM iteration.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "vaeem/em_cluster.hpp"
#include "vaeem/malloc_tuning.hpp"
#include "vaeem/metrics.hpp"
#include "vaeem/nn.hpp"

namespace {

using namespace vaeem;

// MNIST-sized encoder trunk (784-500) on a 256-sample minibatch.
void BM_MlpForwardBackward(benchmark::State& state) {
  tune_malloc_for_training();
  const int batch = static_cast<int>(state.range(0));
  Rng rng(1);
  const std::vector<int> dims{784, 500, 20};
  const Mlp mlp = Mlp::glorot(dims, 0.2, false, rng);
  const Matrix x = standard_normal(784, batch, rng);
  const Matrix g = standard_normal(20, batch, rng);
  for (auto _ : state) {
    ForwardResult f = mlp.forward(x, true, 0.2, &rng);
    BackwardResult b = mlp.backward(f.cache, g);
    benchmark::DoNotOptimize(b.param_grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

// One weighted minibatch step of the synthetic 2-100-2 VAE.
void BM_SyntheticVaeStep(benchmark::State& state) {
  tune_malloc_for_training();
  Rng rng(2);
  const EmConfig c = EmConfig::synthetic();
  VaeModel model(c.architecture(), c.reconstruction_weight, 0.0, rng);
  const Matrix x = standard_normal(2, 256, rng);
  const Vector w = Vector::Constant(256, 0.2);
  for (auto _ : state) {
    VaeLossGrad lg = model.loss_grad(x, w, 1, true, rng);
    model.apply_gradients(lg.grads, 1e-4);
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_SyntheticVaeStep);

// E-step scoring of N samples against K synthetic VAEs with 10 draws each.
void BM_EStep(benchmark::State& state) {
  tune_malloc_for_training();
  const int n = static_cast<int>(state.range(0));
  EmConfig c = EmConfig::synthetic();
  const std::vector<std::uint64_t> streams{0, 1, 2, 3, 4};
  const std::vector<VaeModel> models = init_models(c, streams);
  Rng rng(3);
  const Matrix x = standard_normal(2, n, rng);
  for (auto _ : state) {
    SoftAssignments u = e_step(models, x, c.mc_samples_e, rng);
    benchmark::DoNotOptimize(u.u.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EStep)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Hungarian(benchmark::State& state) {
  const auto k = static_cast<Eigen::Index>(state.range(0));
  Rng rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix cost(k, k);
  for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = unit(rng);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(cost));
}
BENCHMARK(BM_Hungarian)->Arg(10)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "widthlab/linalg.hpp"
#include "widthlab/net.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/spectral.hpp"
#include "widthlab/tasks.hpp"

using namespace widthlab;

namespace {

NetConfig config_for(int width) {
  NetConfig c;
  c.depth = 3;
  c.width = width;
  c.input_dim = 5;
  c.output_dim = 1;
  c.alpha0 = 1.0;
  c.parameterization = Parameterization::kMuP;
  c.seed = 1;
  return c;
}

void BM_GaussianStream(benchmark::State& state) {
  Rng rng(1);
  for (auto _ : state) {
    auto v = gaussian_stream(rng, static_cast<std::size_t>(state.range(0)));
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianStream)->Arg(1 << 16)->Arg(1 << 20);

void BM_TrainStep(benchmark::State& state) {
  const NetConfig c = config_for(static_cast<int>(state.range(0)));
  ParamSet p = init_params(c);
  DataStream stream;
  stream.task.input_dim = 5;
  stream.batch_size = 10;
  const Batch b = online_batch(stream, 0);
  for (auto _ : state) {
    const LossGrads lg = loss_and_grads(p, c, b.x, b.y);
    sgd_step_inplace(p, lg.grads, 1e-3);
    benchmark::DoNotOptimize(p.weights.front().data());
  }
}
BENCHMARK(BM_TrainStep)->Arg(128)->Arg(512)->Arg(2048);

void BM_Entk(benchmark::State& state) {
  const NetConfig c = config_for(static_cast<int>(state.range(0)));
  const ParamSet p = init_params(c);
  Rng rng(3);
  const Matrix probes = sample_sphere(rng, 5, 128);
  for (auto _ : state) {
    const KernelMatrix k = entk(p, c, probes);
    benchmark::DoNotOptimize(k.m.data());
  }
}
BENCHMARK(BM_Entk)->Arg(256)->Arg(1024)->Arg(4096);

void BM_JacobiEig(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(5);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.next_gaussian();
  const Matrix m = (a * a.transpose()) / n;
  for (auto _ : state) {
    const auto eig = sym_eig(m, 1e-12 * m.cwiseAbs().maxCoeff());
    benchmark::DoNotOptimize(eig.values.data());
  }
}
BENCHMARK(BM_JacobiEig)->Arg(64)->Arg(256)->Arg(512);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <vector>

#include "deconvparse/cnn.hpp"
#include "deconvparse/data.hpp"
#include "deconvparse/deconv.hpp"
#include "deconvparse/rng.hpp"

using namespace deconvparse;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

void BM_CorrelateValid(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({12, n, n}, 1);
  const Tensor k = random_tensor({12, 5, 5}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(correlate_valid(x, k));
  }
  state.SetItemsProcessed(state.iterations() * 12 * 25 * (n - 4) * (n - 4));
}
BENCHMARK(BM_CorrelateValid)->Arg(16)->Arg(32)->Arg(64);

void BM_ConvolveFull(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Tensor z = random_tensor({n, n}, 3);
  const Tensor k = random_tensor({12, 3, 3}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(convolve_full(z, k));
  }
}
BENCHMARK(BM_ConvolveFull)->Arg(8)->Arg(16)->Arg(32);

void BM_Pool3D(benchmark::State& state) {
  const Tensor z = random_tensor({24, 32, 32}, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pool(z, PoolRegion{2, 2, 2}));
  }
}
BENCHMARK(BM_Pool3D);

void BM_Shrink(benchmark::State& state) {
  const Tensor z = random_tensor({24, 32, 32}, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(shrink(z, 0.05));
  }
}
BENCHMARK(BM_Shrink);

void BM_IstaInfer(benchmark::State& state) {
  const Tensor y = random_tensor({4, 16, 16}, 7);
  std::vector<FilterBank> banks;
  banks.push_back(FilterBank::init_random(1, 8, 4, 3, 3, 11));
  banks.push_back(FilterBank::init_random(2, 8, 4, 3, 3, 12));
  DeconvLayerConfig c1;
  c1.pool = PoolRegion{2, 2, 2};
  c1.ista_iterations = static_cast<std::size_t>(state.range(0));
  DeconvLayerConfig c2 = c1;
  c2.pool = PoolRegion{2, 1, 1};
  std::vector<DeconvLayerConfig> cfgs{c1, c2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ista_infer(y, banks, cfgs));
  }
}
BENCHMARK(BM_IstaInfer)->Arg(5)->Arg(20);

void BM_CgSolve(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  // SPD tridiagonal operator
  auto apply = [n](const Tensor& x) {
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
      double v = 4.0 * x[i];
      if (i > 0) v -= x[i - 1];
      if (i + 1 < n) v -= x[i + 1];
      out[i] = v;
    }
    return out;
  };
  const Tensor b = random_tensor({n}, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cg_solve(apply, b, 1e-8, 4 * n, nullptr, false));
  }
}
BENCHMARK(BM_CgSolve)->Arg(64)->Arg(512);

void BM_ConvStageForward(benchmark::State& state) {
  const Tensor x = random_tensor({3, 64, 64}, 9);
  ConvStageParams p;
  p.filters = random_tensor({12, 3, 5, 5}, 10);
  p.biases = Tensor({12});
  p.pool = PoolRegion{1, 2, 2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv_stage_forward(x, p));
  }
}
BENCHMARK(BM_ConvStageForward);

void BM_LocalContrastNormalize(benchmark::State& state) {
  const Tensor img = random_tensor({3, 64, 64}, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_contrast_normalize(img, 5));
  }
}
BENCHMARK(BM_LocalContrastNormalize);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>

#include "vmamba/cost.hpp"
#include "vmamba/frontend.hpp"
#include "vmamba/model.hpp"
#include "vmamba/ssm.hpp"

using namespace vmamba;

namespace {

Tensor random(Shape shape, float scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

constexpr std::size_t kDim = 64;
constexpr std::size_t kState = 16;

void BM_SelectiveScan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t r = (kDim + 15) / 16;
  const auto params = ssm::default_channel_params<float>(kDim, kState);
  const ssm::SelectiveProjections<float> proj{random({kDim, kState}, 0.1f, 1), random({kDim, kState}, 0.1f, 2),
                                              random({kDim, r}, 0.1f, 3), random({r, kDim}, 0.1f, 4),
                                              Tensor({kDim}, -2.0f)};
  const auto x = random({n, kDim}, 1.0f, 5);
  for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan(x, params, proj));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectiveScan)->RangeMultiplier(2)->Range(64, 4096)->Complexity(benchmark::oN);

void BM_NaiveAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = random({n, kDim}, 1.0f, 6), k = random({n, kDim}, 1.0f, 7), v = random({n, kDim}, 1.0f, 8);
  for (auto _ : state) benchmark::DoNotOptimize(cost::naive_attention(q, k, v));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NaiveAttention)->RangeMultiplier(2)->Range(64, 2048)->Complexity(benchmark::oNSquared);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random({n, n}, 1.0f, 9), b = random({n, n}, 1.0f, 10);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

void BM_Tokenize(benchmark::State& state) {
  const auto clip = random({3, 16, 224, 224}, 1.0f, 11);
  const auto w = random({static_cast<std::size_t>(state.range(0)), 3, 2, 16, 16}, 0.02f, 12);
  const Tensor bias({static_cast<std::size_t>(state.range(0))}, 0.0f);
  for (auto _ : state) benchmark::DoNotOptimize(video::tokenize(clip, w, bias));
}
BENCHMARK(BM_Tokenize)->Arg(32)->Arg(192)->Unit(benchmark::kMillisecond);

void BM_ToyForward(benchmark::State& state) {
  const auto cfg = model::toy_config();
  const auto weights = model::init_weights<float>(cfg, 0);
  const auto clip = random(cfg.clip_shape(), 1.0f, 13);
  for (auto _ : state) benchmark::DoNotOptimize(model::predict_logits(clip, cfg, weights));
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

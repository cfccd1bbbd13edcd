#include <benchmark/benchmark.h>

#include <vector>

#include "indistill/autograd.hpp"
#include "indistill/gemm.hpp"
#include "indistill/losses.hpp"
#include "indistill/ops.hpp"
#include "indistill/random.hpp"

namespace {

using namespace indistill;

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<float> a(n * n, 1.0f), b(n * n, 0.5f), c(n * n);
  for (auto _ : state) {
    gemm_accumulate(n, n, n, a.data(), n, b.data(), n, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Gemm)->RangeMultiplier(2)->Range(32, 256);

// CNN-S first two layers at batch 128: 1->8 on 28x28, 8->16 on 14x14.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0));
  const auto cout = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const Tensor<float> x = noise({128, cin, hw, hw}, 1);
  Parameter<float> w("w", noise({cin, cout, 3, 3}, 2)), bias("b", Tensor<float>({cout}));
  for (auto _ : state) {
    Tape<float> tape;
    auto y = conv2d(tape.constant(x), tape.leaf(w), tape.leaf(bias), {.stride = 1, .padding = 1});
    tape.backward(sum(y));
    benchmark::DoNotOptimize(w.grad.data().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({1, 8, 28})->Args({8, 16, 14})->Args({16, 32, 7})
    ->Unit(benchmark::kMillisecond);

void BM_PktLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor<float> t = noise({n, 64}, 3);
  Parameter<float> s("s", noise({n, 64}, 4));
  for (auto _ : state) {
    Tape<float> tape;
    tape.backward(pkt_loss(t, tape.leaf(s)));
    benchmark::DoNotOptimize(s.grad.data().data());
  }
}
BENCHMARK(BM_PktLoss)->Arg(32)->Arg(128);

}  // namespace

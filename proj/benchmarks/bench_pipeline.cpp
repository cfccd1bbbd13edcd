#include <benchmark/benchmark.h>

#include "indistill/data.hpp"
#include "indistill/losses.hpp"
#include "indistill/metrics.hpp"
#include "indistill/models.hpp"
#include "indistill/optim.hpp"
#include "indistill/random.hpp"

namespace {

using namespace indistill;

// One CE training step of CNN-S on a 128-sample batch.
void BM_StudentTrainStep(benchmark::State& state) {
  const Dataset d = synthetic_blobs(128, 10, 1, 28, 28, 1);
  Model m = build_model(student_cnn({1, 28, 28}, 10), 1);
  OptimizerState<float> opt;
  const OptimizerConfig cfg;
  for (auto _ : state) {
    for (auto& p : m.parameters()) p.zero_grad();
    Tape<float> tape;
    auto out = m.forward(tape, d.images, {.mode = BatchNormMode::kTrain, .trainable_layers = 4});
    tape.backward(cross_entropy(out.logits, std::span<const int>(d.labels)));
    optimizer_step(std::span<Parameter<float>>(m.parameters()), opt, cfg, 1e-3);
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_StudentTrainStep)->Unit(benchmark::kMillisecond);

void BM_RetrievalMap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  EmbeddingSet e;
  e.dim = 64;
  Rng rng(5);
  for (std::size_t i = 0; i < n * e.dim; ++i) e.values.push_back(rng.normal());
  for (std::size_t i = 0; i < n; ++i) e.labels.push_back(static_cast<int>(i % 10));
  for (auto _ : state) benchmark::DoNotOptimize(retrieval_scores(e, 100));
}
BENCHMARK(BM_RetrievalMap)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

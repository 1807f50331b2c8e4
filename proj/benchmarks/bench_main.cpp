#include <benchmark/benchmark.h>

#include "umood/forgetting.hpp"
#include "umood/masking.hpp"
#include "umood/metrics.hpp"
#include "umood/nn.hpp"
#include "umood/numerics.hpp"

namespace {

umood::Classifier make_model(std::size_t hidden) {
  umood::RandomStream rng(7);
  return umood::Classifier::random_init({2, hidden, hidden, 3}, rng);
}

umood::LabeledSet make_batch(std::size_t n) {
  umood::RandomStream rng(11);
  umood::LabeledSet set;
  set.features = umood::Matrix(n, 2);
  set.class_count = 3;
  for (std::size_t i = 0; i < n; ++i) {
    set.features(i, 0) = rng.next_gaussian();
    set.features(i, 1) = rng.next_gaussian();
    set.labels.push_back(static_cast<int>(i % 3));
  }
  return set;
}

void BM_logsumexp(benchmark::State& state) {
  umood::RandomStream rng(3);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) {
    x = rng.next_gaussian();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(umood::logsumexp(v));
  }
}
BENCHMARK(BM_logsumexp)->Arg(16)->Arg(256);

void BM_forward_batch(benchmark::State& state) {
  const umood::Classifier model = make_model(64);
  const umood::LabeledSet batch = make_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(umood::forward_batch(model, batch.features));
  }
}
BENCHMARK(BM_forward_batch)->Arg(256);

void BM_ce_grads(benchmark::State& state) {
  const umood::Classifier model = make_model(64);
  const umood::LabeledSet batch = make_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(umood::ce_loss_and_grads(model, batch));
  }
}
BENCHMARK(BM_ce_grads)->Arg(256);

void BM_gen_mask(benchmark::State& state) {
  const umood::Classifier model = make_model(64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(umood::gen_mask(model, 0.975, 5));
  }
}
BENCHMARK(BM_gen_mask);

void BM_auroc(benchmark::State& state) {
  umood::RandomStream rng(5);
  umood::ScoredSet set;
  for (int i = 0; i < state.range(0); ++i) {
    set.id_scores.push_back(rng.next_gaussian() + 1.0);
    set.ood_scores.push_back(rng.next_gaussian());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(umood::auroc(set));
  }
}
BENCHMARK(BM_auroc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();

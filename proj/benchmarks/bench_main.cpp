#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <random>

#include "fds/losses.hpp"
#include "fds/metrics.hpp"
#include "fds/nn_ops.hpp"
#include "fds/synthetic.hpp"
#include "fds/trainer.hpp"

using namespace fds;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(gen);
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const ag::Var x(random_tensor(2, c, hw, hw, 1)), w(random_tensor(c, c, 3, 3, 2));
  ag::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d(x, w, ag::Var(), {1, 1}).value().data());
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 32})->Args({32, 16})->Args({64, 8});

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor xt = random_tensor(2, c, hw, hw, 1), wt = random_tensor(c, c, 3, 3, 2);
  for (auto _ : state) {
    ag::Var x(xt, true), w(wt, true);
    ag::backward(ag::sum(ag::conv2d(x, w, ag::Var(), {1, 1})));
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({8, 32})->Args({32, 16});

void BM_TinyForward(benchmark::State& state) {
  SegmentationNet net(ModelConfig::tiny(), 0, false);
  const Tensor images = random_tensor(static_cast<int>(state.range(0)), 3, 64, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(images).data());
}
BENCHMARK(BM_TinyForward)->Arg(1)->Arg(8);

void BM_TrainIteration(benchmark::State& state) {
  spdlog::set_level(spdlog::level::err);
  SyntheticSpec spec;
  spec.n_normal = 8;
  spec.n_defect_test = 4;
  const CategoryData data = render_synthetic(spec);
  const Episode ep = build_episode(data.defect_test, data.normal_train, 1, 0);
  TrainConfig cfg = TrainConfig::for_k_shot(1);
  cfg.iterations = 10;
  cfg.eval_every = 1000;
  cfg.ablation = static_cast<Ablation>(state.range(0));
  for (auto _ : state) {
    SegmentationNet net(ModelConfig::tiny(), 0, false);
    benchmark::DoNotOptimize(train(ep, net, cfg).records.size());
  }
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
}
BENCHMARK(BM_TrainIteration)->Arg(0)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_NbrLoss(benchmark::State& state) {
  const Tensor a = random_tensor(1, 1, 1, static_cast<int>(state.range(0)), 4);
  const Tensor b = random_tensor(1, 1, 1, static_cast<int>(state.range(0)), 5);
  const std::span<const double> sa(a.data(), a.size()), sb(b.data(), b.size());
  for (auto _ : state) benchmark::DoNotOptimize(nbr_loss(sa, sb));
}
BENCHMARK(BM_NbrLoss)->Arg(64)->Arg(512);

void BM_WeightedBce(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PredictedMask p{hw, hw, std::vector<double>(static_cast<std::size_t>(hw) * hw)};
  Mask m(hw, hw);
  for (auto& v : p.probs) v = u(gen);
  for (auto& v : m.values) v = u(gen) < 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(weighted_bce(m, p, 0.9));
}
BENCHMARK(BM_WeightedBce)->Arg(64)->Arg(512);

void BM_RocAuc(benchmark::State& state) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> score(0, 4096);
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < state.range(0); ++i) scored.emplace_back(score(gen), i % 4 == 0 ? 0 : 1);
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scored).auc);
}
BENCHMARK(BM_RocAuc)->Arg(100)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();

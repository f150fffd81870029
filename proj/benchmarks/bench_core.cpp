#include <benchmark/benchmark.h>

#include "pedgen/attention.hpp"
#include "pedgen/config.hpp"
#include "pedgen/discriminators.hpp"
#include "pedgen/generator.hpp"
#include "pedgen/nn.hpp"
#include "pedgen/rng.hpp"

namespace {

using namespace pedgen;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)));
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return Tensor::leaf(std::move(shape), std::move(v));
}

void BM_VisaAttend(benchmark::State& state) {
  const int regions = static_cast<int>(state.range(0));
  const int t = 16;
  Rng rng(1);
  ParamMap params;
  VisaParams vp(64, 32, rng, params, "v");
  RegionFeatureGrid grid;
  grid.height = regions / 8;
  grid.width = 8;
  grid.values = random_tensor({64, regions}, rng);
  Tensor words = random_tensor({32, t}, rng);
  for (auto _ : state) {
    VisaResult res = visa_attend(grid, words, vp);
    benchmark::DoNotOptimize(res.grid.values.values().data());
  }
}
BENCHMARK(BM_VisaAttend)->Arg(64)->Arg(256)->Arg(1024);

void BM_ScaAttend(benchmark::State& state) {
  const int regions = static_cast<int>(state.range(0));
  Rng rng(2);
  ParamMap params;
  ScaParams sp(64, 32, rng, params, "s");
  sp.gamma.mutable_values()[0] = 0.3;
  RegionFeatureGrid grid;
  grid.height = regions / 8;
  grid.width = 8;
  grid.values = random_tensor({64, regions}, rng);
  Tensor sentence = random_tensor({32}, rng);
  for (auto _ : state) {
    ScaResult res = sca_attend(grid, sentence, sp);
    benchmark::DoNotOptimize(res.grid.values.values().data());
  }
}
BENCHMARK(BM_ScaAttend)->Arg(16)->Arg(64)->Arg(256);

void BM_GeneratorTinyForward(benchmark::State& state) {
  Rng rng(3);
  ParamMap params;
  ModelProfile p = tiny_profile();
  Generator gen(p, rng, params);
  Tensor z = random_tensor({p.latent_dim}, rng);
  Tensor c = random_tensor({p.condition_dim}, rng);
  Tensor words = random_tensor({p.word_dim, p.t_max}, rng);
  for (auto _ : state) {
    auto bundles = gen.generate_stages(z, c, words);
    benchmark::DoNotOptimize(bundles.back().image.values().data());
  }
}
BENCHMARK(BM_GeneratorTinyForward);

void BM_GeneratorPaperForward(benchmark::State& state) {
  Rng rng(4);
  ParamMap params;
  ModelProfile p = paper_profile();
  Generator gen(p, rng, params);
  Tensor z = random_tensor({p.latent_dim}, rng);
  Tensor c = random_tensor({p.condition_dim}, rng);
  Tensor words = random_tensor({p.word_dim, p.t_max}, rng, 0.3);
  for (auto _ : state) {
    auto bundles = gen.generate_stages(z, c, words);
    benchmark::DoNotOptimize(bundles.back().image.values().data());
  }
}
BENCHMARK(BM_GeneratorPaperForward)->Unit(benchmark::kMillisecond);

void BM_PartScore(benchmark::State& state) {
  Rng rng(5);
  ParamMap params;
  PartDiscriminator disc(32, 16, 16, rng, params, "d");
  Tensor img = random_tensor({3, 32, 32}, rng);
  Tensor words = random_tensor({16, 14}, rng);
  for (auto _ : state) {
    PartScores s = disc.score(img, words, true);
    benchmark::DoNotOptimize(s.feet.values().data());
  }
}
BENCHMARK(BM_PartScore);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(6);
  Tensor x = random_tensor({8, 16, 16, 16}, rng);
  Tensor xg = Tensor::leaf(x.shape(), x.values(), true);
  Tensor w = random_tensor({16, 16, 3, 3}, rng);
  Tensor wg = Tensor::leaf(w.shape(), w.values(), true);
  Tensor b = Tensor::zeros({16}, true);
  for (auto _ : state) {
    Tensor loss = sum_all(conv2d(xg, wg, b, 1, 1));
    loss.backward();
    xg.zero_grad();
    wg.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

}  // namespace

BENCHMARK_MAIN();

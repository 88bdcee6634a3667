#include <benchmark/benchmark.h>

#include "flowi2i/backbone.hpp"
#include "flowi2i/data.hpp"
#include "flowi2i/features.hpp"
#include "flowi2i/metrics.hpp"
#include "flowi2i/motion.hpp"
#include "flowi2i/runtime.hpp"
#include "flowi2i/sampler.hpp"
#include "flowi2i/trainer.hpp"

using namespace flowi2i;

namespace {

LatentGrid random_latent(int s, std::uint64_t seed) {
  Rng rng(seed);
  return LatentGrid::gaussian(1, s, s, rng);
}

void BM_BackboneForward(benchmark::State& state) {
  const Backbone model{ModelConfig{}};
  const int s = model.config().latent_size;
  const LatentGrid x = random_latent(s, 1);
  const ConditioningBundle bundle = ConditioningBundle::from_source(random_latent(s, 2));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, FlowTimestep(0.5), bundle));
}
BENCHMARK(BM_BackboneForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Backbone model{ModelConfig{}};
  const Codec codec;
  TrainConfig tc;
  tc.batch_size = batch;
  Trainer trainer(model, codec, tc);
  std::vector<LoadedPair> pairs;
  for (int i = 0; i < batch; ++i) {
    const ImageGrid clean = preprocess(generate_phantom(static_cast<std::uint64_t>(i), 128), {});
    pairs.push_back({clean, generate_pair(clean, GateSpec{}, static_cast<std::uint64_t>(i)).corrupted});
  }
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(std::span<const LoadedPair>(pairs)));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Restore(benchmark::State& state) {
  const Backbone model{ModelConfig{}};
  const Codec codec;
  const ImageGrid src = preprocess(generate_phantom(3, 128), {});
  SampleConfig sc;
  sc.steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample(model, src, sc, 1, 128, codec));
}
BENCHMARK(BM_Restore)->Arg(5)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_Corrupt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageGrid img = generate_phantom(4, n);
  Rng rng(5);
  const MotionTrajectory traj = draw_trajectory(0.5, rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(corrupt(img, traj));
}
BENCHMARK(BM_Corrupt)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageGrid a = generate_phantom(6, n);
  const ImageGrid b = generate_phantom(7, n);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_FeatureExtract(benchmark::State& state) {
  const RandomConvExtractor extractor(1);
  const ImageGrid img = generate_phantom(8, 128);
  for (auto _ : state) benchmark::DoNotOptimize(extractor.extract(img));
}
BENCHMARK(BM_FeatureExtract)->Unit(benchmark::kMillisecond);

void BM_Frechet(benchmark::State& state) {
  Rng rng(9);
  Eigen::MatrixXd a(200, 64), b(200, 64);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = standard_normal(rng);
    b.data()[i] = standard_normal(rng) + 0.1;
  }
  const FeatureStats sa = fit_stats(a);
  const FeatureStats sb = fit_stats(b);
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(sa, sb));
}
BENCHMARK(BM_Frechet)->Unit(benchmark::kMicrosecond);

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}

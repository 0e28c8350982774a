#include <benchmark/benchmark.h>

#include "treedoa/baselines.hpp"
#include "treedoa/tree.hpp"

using namespace treedoa;

namespace {

TdnnModel random_tree(const TreeSpec& spec, int input_dim) {
  TdnnModel model(spec, input_dim, FeatureScaling::unit_norm);
  std::uint64_t seed = 1;
  for (int h = 0; h < spec.depth(); ++h)
    for (std::int64_t i = 0; i < spec.nodes_at_level(h); ++i)
      model.set_node(h, i, nn::Mlnn::initialized(spec.node_layers(h, input_dim), seed++));
  return model;
}

void BM_SampleCovariance(benchmark::State& state) {
  ArrayConfig cfg;
  cfg.num_elements = static_cast<int>(state.range(0));
  const auto batch = synth_snapshots(cfg, SourceSet::equal_power({27.0}, 0.0), static_cast<int>(state.range(1)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_covariance(batch));
}
BENCHMARK(BM_SampleCovariance)->Args({16, 50})->Args({16, 200})->Args({64, 50});

void BM_MlnnForward(benchmark::State& state) {
  const auto net = nn::Mlnn::initialized(nn::LayerSpec{{240, 128, 64, 32, 120}}, 7);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(240);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlnnForward);

void BM_RoutePredict(benchmark::State& state) {
  const ArrayConfig cfg;
  const TreeSpec spec{{6, 5, 4}, -60.0, 60.0, {128, 64, 32}};
  const auto model = random_tree(spec, cfg.feature_dim());
  const auto x = sample_features(cfg, SourceSet::equal_power({27.0}, 10.0), 50, 11);
  for (auto _ : state) benchmark::DoNotOptimize(model.route_predict(x));
}
BENCHMARK(BM_RoutePredict);

void BM_RootMusic(benchmark::State& state) {
  const ArrayConfig cfg;
  const int q = static_cast<int>(state.range(0));
  std::vector<double> doas{-30.0, 12.5, 40.0};
  doas.resize(static_cast<std::size_t>(q));
  const auto r = sample_covariance(synth_snapshots(cfg, SourceSet::equal_power(doas, 0.0), 50, 5));
  for (auto _ : state) benchmark::DoNotOptimize(root_music(r, q, cfg));
}
BENCHMARK(BM_RootMusic)->Arg(1)->Arg(3);

void BM_MusicSpectrum(benchmark::State& state) {
  const ArrayConfig cfg;
  const auto r = analytic_covariance(cfg, SourceSet::equal_power({27.0}, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(music_spectrum(r, 1, cfg, 0.1));
}
BENCHMARK(BM_MusicSpectrum);

}  // namespace
BENCHMARK_MAIN();

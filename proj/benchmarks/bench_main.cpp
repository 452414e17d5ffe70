#include <benchmark/benchmark.h>

#include "fprior/baselines.hpp"
#include "fprior/bayes.hpp"
#include "fprior/diffnet/dense_net.hpp"
#include "fprior/funcprior.hpp"

using namespace fprior;
using Matrix = Eigen::MatrixXd;

namespace {

funcprior::DeepOnetGenerator grid_generator(Rng& rng) {
  const auto mode = funcprior::GeneratorMode::Energy2d;
  return funcprior::make_generator(mode, funcprior::NetworkShape::defaults(mode), rng);
}

MeasurementSet seven_points() {
  Rng rng = stream_rng(1, 1);
  const auto locs = sample_locations(StretchRegion::square(1.4, 1.6), 7, rng);
  return make_measurements(from_vector(ParamRanges::table1_base()), locs, 0.1, ComponentMask::Both, 2);
}

void BM_CauchyStress(benchmark::State& state) {
  const auto p = from_vector(ParamRanges::table1_base());
  double lt = 1.0;
  for (auto _ : state) {
    lt = lt > 1.6 ? 1.0 : lt + 1e-3;
    benchmark::DoNotOptimize(cauchy_stress(p, {lt, 1.3}));
  }
}
BENCHMARK(BM_CauchyStress);

void BM_GridRepresentation(benchmark::State& state) {
  const auto p = from_vector(ParamRanges::table1_base());
  const auto layout = SensorLayout::default_grid();
  for (auto _ : state) benchmark::DoNotOptimize(layout_representation(p, layout, std::nullopt));
}
BENCHMARK(BM_GridRepresentation);

void BM_GridCriticStep(benchmark::State& state) {
  Rng rng = stream_rng(3, 0);
  const auto gen = grid_generator(rng);
  const auto layout = SensorLayout::default_grid();
  const auto disc = funcprior::make_discriminator(layout.representation_size(),
                                                  funcprior::NetworkShape::defaults(funcprior::GeneratorMode::Energy2d),
                                                  rng);
  const auto data = generate_dataset(ParamRanges::table1(), layout, 50, std::nullopt, 1);
  Matrix xi(50, gen.latent_dim());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi.data()[i] = standard_normal(rng);
  for (auto _ : state) {
    const auto loss = funcprior::discriminator_loss(gen, disc, xi, data.samples, layout, 0.1, rng);
    benchmark::DoNotOptimize(diffnet::grad_values(loss.total, disc.parameters()));
  }
}
BENCHMARK(BM_GridCriticStep)->Unit(benchmark::kMillisecond);

void BM_GanPosteriorGradient(benchmark::State& state) {
  Rng rng = stream_rng(4, 0);
  const auto gen = grid_generator(rng);
  const bayes::GanPosterior post(gen, seven_points(), 0.1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim())), g;
  for (auto _ : state) benchmark::DoNotOptimize(post(x, g));
}
BENCHMARK(BM_GanPosteriorGradient);

void BM_FourFiberPosteriorGradient(benchmark::State& state) {
  const bayes::FourFiberPosterior post(seven_points(), ParamRanges::table1(), 0.1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim())), g;
  for (auto _ : state) benchmark::DoNotOptimize(post(x, g));
}
BENCHMARK(BM_FourFiberPosteriorGradient);

void BM_GpFieldStats(benchmark::State& state) {
  const auto data = seven_points();
  const auto pts = SensorLayout::default_grid().points;
  baselines::GpConfig cfg;
  cfg.noise_variance = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(baselines::gp_field_stats(data, pts, true, cfg));
}
BENCHMARK(BM_GpFieldStats)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

#include <gtest/gtest.h>

#include <cmath>

#include "fprior/baselines.hpp"

using namespace fprior;
using namespace fprior::baselines;

namespace {

// Three points with hand-picked hyperparameters; values from a 30-digit
// evaluation of the Gaussian-process formulas.
struct ThreePoint {
  Matrix x = (Matrix(3, 1) << 0.0, 0.5, 1.5).finished();
  Vector y = (Vector(3) << 1.0, 2.0, 0.5).finished();
  GpHyper h{2.0, {0.7}};
  double noise = 0.01;
};

MeasurementSet grid_measurements(const FourFiberParams& p, ComponentMask mask, double noise, int n) {
  std::vector<BiaxialStretch> locs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) locs.push_back({1.0 + 0.6 * i / (n - 1), 1.0 + 0.6 * j / (n - 1)});
  }
  return make_measurements(p, locs, noise, mask, 11);
}

std::vector<BiaxialStretch> eval_grid() { return SensorLayout::default_grid().points; }

}  // namespace

TEST(GaussianProcess, LogMarginalMatchesReference) {
  ThreePoint t;
  const Vector yc = t.y.array() - t.y.mean();
  EXPECT_NEAR(gp_log_marginal(t.x, yc, t.h, t.noise, 1e-10), -4.3554479415984013, 1e-12);
}

TEST(GaussianProcess, PredictionMatchesReference) {
  ThreePoint t;
  GpConfig cfg;
  cfg.noise_variance = t.noise;
  cfg.optimize = false;
  cfg.initial = t.h;
  const GpModel gp(t.x, t.y, t.h, cfg);
  Vector mean, sd;
  gp.predict((Matrix(1, 1) << 1.0).finished(), mean, sd);
  EXPECT_NEAR(mean[0], 1.6297456487155076, 1e-12);
  EXPECT_NEAR(sd[0], 0.37575919169798191, 1e-10);
  EXPECT_DOUBLE_EQ(gp.mean_offset(), t.y.mean());
}

TEST(GaussianProcess, LogMarginalGradientMatchesFiniteDifference) {
  Matrix x(6, 2);
  x << 1.0, 1.1, 1.2, 1.5, 1.3, 1.2, 1.5, 1.6, 1.1, 1.4, 1.6, 1.0;
  Vector y(6);
  y << 0.1, 0.6, 0.4, 1.9, 0.3, 1.2;
  const Vector yc = y.array() - y.mean();
  const GpHyper h{0.8, {0.3, 0.45}};
  Vector g;
  gp_log_marginal(x, yc, h, 1e-3, 1e-10, &g);
  ASSERT_EQ(g.size(), 3);
  const double eps = 1e-6;
  for (int k = 0; k < 3; ++k) {
    auto shifted = [&](double d) {
      GpHyper q = h;
      if (k == 0) {
        q.signal_variance *= std::exp(d);
      } else {
        q.length_scales[static_cast<std::size_t>(k - 1)] *= std::exp(d);
      }
      return gp_log_marginal(x, yc, q, 1e-3, 1e-10);
    };
    const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
    EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "component " << k;
  }
}

TEST(GaussianProcess, NoiselessFitInterpolatesTrainingData) {
  Matrix x(8, 1);
  Vector y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 1.0 + 0.08 * i;
    y[i] = std::exp(3.0 * (x(i, 0) - 1.0)) - 1.0;
  }
  GpConfig cfg;
  cfg.seed = 3;
  const auto gp = gp_regress(x, y, cfg);
  Vector mean, sd;
  gp.predict(x, mean, sd);
  EXPECT_LT((mean - y).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(sd.maxCoeff(), 1e-3);
}

TEST(GaussianProcess, UncertaintyRevertsToSignalVarianceFarAway) {
  ThreePoint t;
  GpConfig cfg;
  cfg.noise_variance = t.noise;
  cfg.optimize = false;
  const GpModel gp(t.x, t.y, t.h, cfg);
  Vector mean, sd;
  gp.predict((Matrix(1, 1) << 50.0).finished(), mean, sd);
  EXPECT_NEAR(mean[0], t.y.mean(), 1e-12);
  EXPECT_NEAR(sd[0], std::sqrt(t.h.signal_variance), 1e-12);
}

TEST(GaussianProcess, FieldStatsFitEachObservedComponent) {
  const auto base = from_vector(ParamRanges::table1_base());
  const auto data = grid_measurements(base, ComponentMask::Both, 0.0, 4);
  GpConfig cfg;
  const auto pts = eval_grid();
  const auto st = gp_field_stats(data, pts, true, cfg);
  ASSERT_EQ(st.mean_theta.size(), static_cast<Eigen::Index>(pts.size()));
  ASSERT_TRUE(st.has_z());
  for (const auto& m : data.points) {
    const std::vector<BiaxialStretch> one{m.stretch};
    const auto at = gp_field_stats(data, one, true, cfg);
    EXPECT_NEAR(at.mean_theta[0], *m.sigma_theta, 1e-6);
    EXPECT_NEAR(at.mean_z[0], *m.sigma_z, 1e-6);
  }
  const auto theta_only = gp_field_stats(grid_measurements(base, ComponentMask::ThetaOnly, 0.0, 3), pts, true, cfg);
  EXPECT_FALSE(theta_only.has_z());
  EXPECT_THROW(gp_field_stats(grid_measurements(base, ComponentMask::ZOnly, 0.0, 3), pts, true, cfg),
               std::invalid_argument);
}

TEST(NonlinearFit, ReproducesNoiselessFieldWithinOnePercent) {
  const auto base = from_vector(ParamRanges::table1_base());
  const auto data = grid_measurements(base, ComponentMask::Both, 0.0, 5);
  FitConfig cfg;
  cfg.starts = 4;
  cfg.seed = 2;
  const auto fit = nonlinear_fit(data, ParamRanges::table1(), cfg);
  EXPECT_TRUE(fit.converged);
  EXPECT_EQ(fit.observations, 50u);
  const auto pts = eval_grid();
  const auto st = fit_field_stats(fit, pts, 700.0);
  Vector tt(st.mean_theta.size()), tz(st.mean_theta.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto s = cauchy_stress(base, pts[i]);
    tt[static_cast<Eigen::Index>(i)] = s.sigma_theta;
    tz[static_cast<Eigen::Index>(i)] = s.sigma_z;
  }
  EXPECT_LT((st.mean_theta - tt).norm() / tt.norm(), 0.01);
  EXPECT_LT((st.mean_z - tz).norm() / tz.norm(), 0.01);
  EXPECT_EQ(st.sd_theta.maxCoeff(), 0.0);
}

TEST(NonlinearFit, StartingAtTruthConvergesImmediately) {
  const auto truth = ParamRanges::table1_base();
  const auto data = grid_measurements(from_vector(truth), ComponentMask::Both, 0.0, 3);
  const auto fit = nonlinear_fit_from(data, ParamRanges::table1(), truth, FitConfig{});
  EXPECT_TRUE(fit.converged);
  EXPECT_LE(fit.iterations, 2);
  EXPECT_LT(fit.cost, 1e-20);
  for (std::size_t k = 0; k < truth.size(); ++k) EXPECT_NEAR(fit.params[k], truth[k], 1e-9 * std::abs(truth[k]));
}

TEST(NonlinearFit, RejectsFewerObservationsThanParameters) {
  const auto base = from_vector(ParamRanges::table1_base());
  MeasurementSet five;
  for (int i = 0; i < 5; ++i) five.points.push_back({{1.1 + 0.1 * i, 1.3}, 0.1 * (i + 1), std::nullopt});
  EXPECT_THROW(nonlinear_fit(five, ParamRanges::table1(), FitConfig{}), UnderDetermined);
  // Four points with both components give exactly eight observations.
  const auto eight = make_measurements(base, {{1.1, 1.1}, {1.2, 1.4}, {1.4, 1.2}, {1.5, 1.5}}, 0.0,
                                       ComponentMask::Both, 1);
  EXPECT_NO_THROW(nonlinear_fit(eight, ParamRanges::table1(), FitConfig{}));
}

TEST(NonlinearFit, RelativeWeightingAndParsing) {
  EXPECT_EQ(parse_weighting("none"), Weighting::None);
  EXPECT_EQ(parse_weighting("relative"), Weighting::Relative);
  EXPECT_EQ(to_string(Weighting::Relative), "relative");
  EXPECT_THROW(parse_weighting("log"), std::invalid_argument);
  const auto truth = ParamRanges::table1_base();
  const auto data = grid_measurements(from_vector(truth), ComponentMask::Both, 0.0, 3);
  FitConfig cfg;
  cfg.weighting = Weighting::Relative;
  const auto fit = nonlinear_fit_from(data, ParamRanges::table1(), truth, cfg);
  EXPECT_LT(fit.cost, 1e-20);
  const auto json = fit_report_json(fit);
  for (const char* key : {"\"params\"", "\"cost\"", "\"iterations\"", "\"converged\"", "\"observations\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

TEST(NonlinearFit, ConfigValidation) {
  FitConfig cfg;
  cfg.starts = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  GpConfig g;
  g.noise_variance = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

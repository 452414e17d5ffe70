#pragma once

// Posterior inference over measured stresses: Gaussian likelihood, a
// standard-normal latent prior (GAN prior) or uniform 4FF parameter priors
// reached from a normal latent, and Hamiltonian Monte Carlo.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fprior/funcprior.hpp"
#include "fprior/synthgen.hpp"

namespace fprior::bayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Sum over observed components of log N(obs | pred, sd^2). pred_z may be
/// empty when every measurement masks sigma_z.
double log_likelihood(const Vector& pred_theta, const Vector& pred_z, const MeasurementSet& data, double sd);

/// Value and gradient of a log density; returns -inf for rejected states.
using LogDensityFn = std::function<double(const Vector& x, Vector& grad)>;

class GanPosterior {
 public:
  /// Trunk features at the measurement locations are computed once here.
  GanPosterior(const funcprior::DeepOnetGenerator& gen, const MeasurementSet& data, double sd);

  std::size_t dim() const { return static_cast<std::size_t>(gen_->latent_dim()); }
  double operator()(const Vector& xi, Vector& grad) const;
  double value(const Vector& xi) const;

 private:
  const funcprior::DeepOnetGenerator* gen_;
  MeasurementSet data_;
  double sd_;
  funcprior::TrunkFeatures tf_;
};

/// Standard normal CDF through std::erfc (glibc, within a few ulp).
double normal_cdf(double x);
double normal_pdf(double x);

/// a + (b - a) Phi(x).
double normal_to_uniform(double x, double a, double b);
ParamVector latent_to_params(const Vector& x, const ParamRanges& ranges);

class FourFiberPosterior {
 public:
  FourFiberPosterior(const MeasurementSet& data, const ParamRanges& ranges, double sd,
                     double exponent_cap = ConstitutiveOptions{}.exponent_cap);

  std::size_t dim() const { return kNumFreeParams; }
  /// -inf (zero gradient) when a fiber term overflows at a measurement.
  double operator()(const Vector& x, Vector& grad) const;
  double value(const Vector& x) const;

 private:
  MeasurementSet data_;
  ParamRanges ranges_;
  double sd_;
  double cap_;
};

struct HmcConfig {
  double step_size = 0.05;  // initial value when adapting
  int leapfrog_steps = 30;
  int burn_in = 1000;
  int draws = 1000;
  bool adapt_step = true;
  double target_accept = 0.65;
  bool nuts = false;
  int max_tree_depth = 8;
  double min_burn_in_accept = 0.01;

  void validate() const;
};

struct Chain {
  Matrix draws;  // draws x dim, burn-in excluded
  Vector log_density;
  double accept_rate = 0.0;     // mean acceptance probability over kept draws
  double burn_in_accept = 0.0;  // same over burn-in
  double step_size = 0.0;       // step used for kept draws
  long divergences = 0;         // among kept draws
};

class SamplingFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Leapfrog HMC (or NUTS) with optional dual-averaging step adaptation during
/// burn-in. Plain HMC scales each transition's step by U(0.8, 1.2).
/// Throws SamplingFailed when burn-in acceptance falls below
/// min_burn_in_accept or the initial state has zero density.
Chain hmc_sample(const LogDensityFn& logp, const Vector& init, const HmcConfig& config, Rng& rng);

/// Pointwise posterior mean and standard deviation (population, divide by n).
struct FieldStats {
  std::vector<BiaxialStretch> points;
  Vector mean_theta, sd_theta;
  Vector mean_z, sd_z;  // empty when not predicted
  Vector mean_w, sd_w;  // empty when not predicted

  bool has_z() const { return mean_z.size() > 0; }
  bool has_w() const { return mean_w.size() > 0; }
};

/// Columnwise mean and population SD of a (samples x points) matrix.
void column_stats(const Matrix& samples, Vector& mean, Vector& sd);

FieldStats gan_field_stats(const funcprior::DeepOnetGenerator& gen, const Matrix& xi_draws,
                           std::span<const BiaxialStretch> points);
/// Exponent cap is relaxed for prediction so that extrapolated draws stay finite.
FieldStats fourfiber_field_stats(const Matrix& latent_draws, const ParamRanges& ranges,
                                 std::span<const BiaxialStretch> points, double exponent_cap = 700.0);

/// Header comment "# unit=0.1MPa" then
/// lambda_theta,lambda_z,mean_sigma_theta,sd_sigma_theta,mean_sigma_z,sd_sigma_z[,mean_W,sd_W].
/// Missing components are empty cells.
std::string stats_csv(const FieldStats& stats);
FieldStats parse_stats_csv(const std::string& text);

/// One row per draw: draw,log_density,<names...>.
std::string draws_csv(const Matrix& draws, const Vector& log_density, const std::vector<std::string>& names);

}  // namespace fprior::bayes

#pragma once

// Reference methods that use no learned prior: Gaussian-process regression of
// each stress component and bounded nonlinear least squares of the 4FF model.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fprior/bayes.hpp"
#include "fprior/synthgen.hpp"

namespace fprior::baselines {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// --- Gaussian process ---------------------------------------------------------

/// k(x, x') = s2 exp(-0.5 sum_d ((x_d - x'_d) / l_d)^2).
struct GpHyper {
  double signal_variance = 1.0;
  std::vector<double> length_scales;
};

struct GpConfig {
  double noise_variance = 0.0;  // fixed, not learned
  double jitter = 1e-10;
  bool optimize = true;         // log marginal likelihood ascent
  int restarts = 6;
  int max_iterations = 200;
  double min_length = 0.01, max_length = 10.0;
  double min_signal = 1e-6, max_signal = 1e4;
  std::uint64_t seed = 0;
  GpHyper initial{};            // used when optimize is false; empty length scales mean 0.3

  void validate() const;
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Constant-mean (sample mean) GP fit to rows of x with targets y.
class GpModel {
 public:
  GpModel(Matrix x, const Vector& y, const GpHyper& hyper, const GpConfig& config);

  const GpHyper& hyper() const { return hyper_; }
  double log_marginal_likelihood() const { return log_ml_; }
  double mean_offset() const { return offset_; }

  /// Posterior mean and SD of the latent function (noise excluded).
  void predict(const Matrix& xs, Vector& mean, Vector& sd) const;

 private:
  Matrix x_;
  GpHyper hyper_;
  double noise_ = 0.0;
  double offset_ = 0.0;
  Matrix chol_;  // lower factor of K + (noise + jitter) I
  std::vector<__float128> alpha_;  // quad-precision weights of the mean
  double log_ml_ = 0.0;
};

/// Log marginal likelihood and its gradient with respect to
/// (log s2, log l_1, ..., log l_d). Throws NotPositiveDefinite.
double gp_log_marginal(const Matrix& x, const Vector& y_centered, const GpHyper& h, double noise, double jitter,
                       Vector* grad = nullptr);

GpModel gp_regress(const Matrix& x, const Vector& y, const GpConfig& config);

/// One independent GP per observed component. Inputs are lambda_theta for a
/// line (use_lambda_z false) or (lambda_theta, lambda_z) otherwise.
bayes::FieldStats gp_field_stats(const MeasurementSet& data, std::span<const BiaxialStretch> points,
                                 bool use_lambda_z, const GpConfig& config);

// --- nonlinear least squares --------------------------------------------------

enum class Weighting { None, Relative };

Weighting parse_weighting(const std::string& s);
std::string to_string(Weighting w);

struct FitConfig {
  int max_iterations = 200;
  double tolerance = 1e-12;      // relative cost decrease that counts as converged
  Weighting weighting = Weighting::None;
  double relative_floor = 0.1;   // Relative divides residuals by max(|obs|, floor)
  double exponent_cap = 700.0;
  int starts = 1;                // first start is the range midpoint, others uniform
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitReport {
  ParamVector params{};
  double cost = 0.0;  // 0.5 sum of squared weighted residuals
  int iterations = 0;
  bool converged = false;
  std::size_t observations = 0;
  int start = 0;      // index of the winning start
};

class UnderDetermined : public std::runtime_error {
 public:
  UnderDetermined(std::size_t observations, std::size_t parameters);
};

class FitNotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bounded Levenberg-Marquardt in unit-box coordinates of the ranges.
FitReport nonlinear_fit(const MeasurementSet& data, const ParamRanges& ranges, const FitConfig& config);
/// Same, starting from a given parameter vector (clamped into the ranges).
FitReport nonlinear_fit_from(const MeasurementSet& data, const ParamRanges& ranges, const ParamVector& start,
                             const FitConfig& config);

std::string fit_report_json(const FitReport& r);

/// Stress field of the fitted parameters; SDs are zero.
bayes::FieldStats fit_field_stats(const FitReport& r, std::span<const BiaxialStretch> points, double exponent_cap);

}  // namespace fprior::baselines

#pragma once

// Experiment orchestration: configuration, prior caching, the synthetic
// studies (line case, noise/points sweep, surface variants, training-size and
// sampling-region studies), error metrics and artifact writing.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fprior/baselines.hpp"
#include "fprior/bayes.hpp"
#include "fprior/funcprior.hpp"
#include "fprior/synthgen.hpp"

namespace fprior::harness {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// ||pred - truth|| / ||truth|| over the evaluation points.
double relative_error(const Vector& pred, const Vector& truth);

struct PriorSpec {
  funcprior::GanConfig gan;
  SensorLayout layout;
  ParamRanges ranges;
  std::size_t samples = 1000;
  std::optional<double> cap;
  std::uint64_t data_seed = 1;
  std::filesystem::path checkpoint;  // existing prior directory; skips training when set
};

enum class Placement { Random, Line, Equi };
Placement parse_placement(const std::string& s);
std::string to_string(Placement p);

struct MeasurementSpec {
  Placement placement = Placement::Random;
  std::size_t count = 7;
  StretchRegion region = StretchRegion::square(1.4, 1.6);
  double lambda_z = 1.44;  // line placement
  double noise = 0.1;
  ComponentMask mask = ComponentMask::Both;
};

struct ExperimentConfig {
  std::string case_id = "case1";  // case1 | sweep | case2 | appendix-b | appendix-c | infer
  std::string variant;            // case2: random7 | equi5 | partial | ood
  bool paper_scale = false;
  PriorSpec prior;
  MeasurementSpec measurements;
  std::optional<ParamVector> truth;     // default: range midpoints (case1, sweep), base values otherwise
  std::optional<double> likelihood_sd;  // default: the noise scale, floored at noiseless_sd
  double noiseless_sd = 0.02;
  bayes::HmcConfig hmc;
  baselines::GpConfig gp;
  std::vector<std::string> methods;     // subset of gan, 4ff, gp
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;     // multi-seed studies; empty means {seed}
  std::filesystem::path out = "out";
  std::filesystem::path prior_cache;    // empty: <out>/priors

  std::vector<double> sweep_noise{0.0, 0.05, 0.1, 0.2};
  std::vector<std::size_t> sweep_points{3, 5, 10, 15};
  std::vector<double> ood_mu;           // kPa
  ParamRange ood_train_mu{15.0, 20.0};  // kPa
  std::vector<std::size_t> train_sizes{500, 1000, 2000};
  std::vector<StretchRegion> regions;

  double effective_sd() const;
  std::vector<std::uint64_t> seed_list() const { return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds; }
  void validate() const;
};

/// Desk-scale defaults for a case; paper_scale restores the long schedule.
ExperimentConfig default_config(const std::string& case_id, const std::string& variant = "",
                                bool paper_scale = false);
/// Defaults for (case, variant) overlaid with a JSON document; unknown keys are errors.
ExperimentConfig config_from_json(const std::string& case_id, const std::string& variant, bool paper_scale,
                                  const std::string& json_text);
std::string config_to_json(const ExperimentConfig& c);

// --- priors -------------------------------------------------------------------

using Log = std::function<void(const std::string&)>;

/// Content key of the dataset specification and GAN configuration.
std::string prior_key(const PriorSpec& spec);
/// Loads spec.checkpoint, or the cached prior for prior_key, or generates data,
/// trains and caches. The returned prior's layout must match spec.layout.
funcprior::TrainedPrior obtain_prior(const PriorSpec& spec, const std::filesystem::path& cache, const Log& log = {});

// --- inference ----------------------------------------------------------------

struct MethodResult {
  std::string method;
  bayes::FieldStats stats;
  double err_theta = 0.0;
  std::optional<double> err_z;
  std::optional<double> accept_rate;
  std::optional<double> step_size;
  Matrix draws;  // kept HMC draws: latent vectors for gan, parameters (kPa, deg) for 4ff
  Vector log_density;
  std::vector<std::string> draw_names;
  std::optional<baselines::FitReport> fit;
};

struct CaseResult {
  std::string case_id, variant;
  std::uint64_t seed = 0;
  MeasurementSet measurements;
  bayes::FieldStats truth;  // true field, zero SDs
  std::vector<MethodResult> methods;
  std::size_t training_samples = 0;

  const MethodResult& method(const std::string& name) const;
};

/// Evaluation points: a 66-point line (step 0.01) for line priors, else the 25 x 25 grid.
std::vector<BiaxialStretch> evaluation_points(const ExperimentConfig& c);
ParamVector truth_params(const ExperimentConfig& c);
MeasurementSet draw_measurements(const MeasurementSpec& spec, const ParamVector& truth, std::uint64_t seed);

/// Runs one method on a measurement set; errors are left unset.
MethodResult run_method(const std::string& name, const ExperimentConfig& c, const funcprior::TrainedPrior* prior,
                        const MeasurementSet& data, std::uint64_t seed);
/// Runs every configured method on one measurement set.
CaseResult run_methods(const ExperimentConfig& c, const funcprior::TrainedPrior* prior, const MeasurementSet& data,
                       const ParamVector& truth, std::uint64_t seed);

CaseResult run_case1(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed);
CaseResult run_case2(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed);

struct SweepCell {
  double noise = 0.0;
  std::size_t points = 0;
  std::map<std::string, double> mean_error;  // method -> mean sigma_theta error over seeds
};
std::vector<SweepCell> run_sweep(const ExperimentConfig& c, const funcprior::TrainedPrior& prior);
std::string sweep_csv(const std::vector<SweepCell>& cells);

struct CurveRow {
  std::string label;  // mu value, training size or region
  double x = 0.0;
  std::map<std::string, double> errors;  // "<method>_theta", "<method>_z", extras
};
/// Error versus true shear modulus for a prior trained on a narrowed mu range.
std::vector<CurveRow> run_ood(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed);
/// One prior per training size; also reports the fraction of grid cells where
/// the posterior-mean sigma_theta decreases with lambda_theta.
std::vector<CurveRow> run_appendix_b(const ExperimentConfig& c,
                                     const std::vector<const funcprior::TrainedPrior*>& priors, std::uint64_t seed);
std::vector<CurveRow> run_appendix_c(const ExperimentConfig& c, const funcprior::TrainedPrior& prior,
                                     std::uint64_t seed);
std::string curve_csv(const std::string& first_column, const std::vector<CurveRow>& rows);

/// Fraction of adjacent lambda_theta pairs on a grid where the field decreases.
double monotonicity_violation(const bayes::FieldStats& stats, std::size_t n_theta);

// --- artifacts ----------------------------------------------------------------

std::string error_report_json(const CaseResult& r);
/// error_report.json, measurements.csv, truth.csv and <method>_stats.csv.
void write_case(const CaseResult& r, const std::filesystem::path& dir);

struct IngestResult {
  MeasurementSet data;
  std::vector<std::string> warnings;
};
/// Parses a measurement CSV and attaches the likelihood SD; points outside the
/// domain produce warnings.
IngestResult ingest_measurements(const std::filesystem::path& path, double noise_scale,
                                 const StretchRegion& domain = StretchRegion::square(1.0, 1.65));

/// Runs the configured case into c.out and returns a short human-readable summary.
std::string run_experiment(const ExperimentConfig& c, const Log& log = {});

}  // namespace fprior::harness

#pragma once

// Synthetic data: 4FF parameter sampling, prior training sets on fixed sensor
// layouts, and sparse noisy measurement sets.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fprior/constitutive.hpp"
#include "fprior/rng.hpp"

namespace fprior {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamRange {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
  double midpoint() const { return 0.5 * (lower + upper); }
};

/// Independent uniform ranges for the eight free 4FF parameters, in table order
/// (see to_vector). Moduli are kPa, alpha is degrees.
struct ParamRanges {
  std::array<ParamRange, kNumFreeParams> bounds{};

  /// Base values times the variation bounds of the reference murine-aorta table.
  static ParamRanges table1();
  static ParamVector table1_base();
  static ParamRanges scaled(const ParamVector& base,
                            const std::array<ParamRange, kNumFreeParams>& variations);

  ParamVector midpoint() const;
  void validate() const;
};

enum class LayoutKind { Line1d, Grid2d };

struct SensorLayout {
  LayoutKind kind = LayoutKind::Grid2d;
  std::vector<BiaxialStretch> points;
  std::size_t n_theta = 0;  // points per row
  std::size_t n_z = 0;      // rows; 1 for Line1d
  double theta_lo = 1.0, theta_hi = 1.65;
  double z_lo = 1.0, z_hi = 1.65;  // z_lo == z_hi for Line1d

  /// n equispaced circumferential stretches at fixed axial stretch.
  static SensorLayout line(double theta_lo, double theta_hi, std::size_t n, double lambda_z);
  /// n_theta x n_z tensor grid; index = iz * n_theta + itheta.
  static SensorLayout grid(double lo, double hi, std::size_t n_theta, std::size_t n_z);

  static SensorLayout default_line() { return line(1.0, 1.65, 15, 1.44); }
  static SensorLayout default_grid() { return grid(1.0, 1.65, 25, 25); }

  std::size_t size() const { return points.size(); }
  /// Stress vector length per sample: sigma_theta only for lines,
  /// [sigma_theta; sigma_z] for grids.
  std::size_t representation_size() const {
    return kind == LayoutKind::Line1d ? points.size() : 2 * points.size();
  }
  bool operator==(const SensorLayout&) const = default;
};

struct PriorDataset {
  SensorLayout layout;
  ParamRanges ranges;
  std::uint64_t seed = 0;
  std::optional<double> cap;       // internal units; nullopt = no truncation
  std::vector<ParamVector> params;  // one draw per sample
  RowMatrix samples;                // N x representation_size

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  std::uint64_t checksum() const;
};

enum class ComponentMask { Both, ThetaOnly, ZOnly };

ComponentMask parse_mask(const std::string& s);
std::string to_string(ComponentMask m);

struct Measurement {
  BiaxialStretch stretch;
  std::optional<double> sigma_theta;
  std::optional<double> sigma_z;
};

struct MeasurementSet {
  std::vector<Measurement> points;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;

  std::size_t observation_count() const;
  void validate() const;
};

struct StretchRegion {
  double theta_lo = 1.0, theta_hi = 1.65;
  double z_lo = 1.0, z_hi = 1.65;

  static StretchRegion square(double lo, double hi) { return {lo, hi, lo, hi}; }
  bool contains(const BiaxialStretch& s) const;
};

/// Cap value of 0.5 MPa in internal units.
inline constexpr double kDefaultStressCap = 5.0;

FourFiberParams sample_params(const ParamRanges& ranges, Rng& rng);

PriorDataset generate_dataset(const ParamRanges& ranges, const SensorLayout& layout, std::size_t n,
                              std::optional<double> cap, std::uint64_t seed,
                              unsigned threads = 1);

/// Stress representation of one parameter set on a layout, optionally capped.
Eigen::VectorXd layout_representation(const FourFiberParams& params, const SensorLayout& layout,
                                      std::optional<double> cap);

/// Componentwise min(value, cap).
void apply_cap(Eigen::Ref<Eigen::VectorXd> values, double cap);

MeasurementSet make_measurements(const FourFiberParams& params,
                                 const std::vector<BiaxialStretch>& locations, double noise_scale,
                                 ComponentMask mask, std::uint64_t seed);

std::vector<BiaxialStretch> sample_locations(const StretchRegion& region, std::size_t count, Rng& rng);
std::vector<BiaxialStretch> line_locations(double theta_lo, double theta_hi, std::size_t count,
                                           double lambda_z, Rng& rng);
/// Evenly spaced equi-stretch points lambda_theta = lambda_z on [lo, hi].
std::vector<BiaxialStretch> equi_stretch_locations(double lo, double hi, std::size_t count);

// --- files -----------------------------------------------------------------

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_dataset(const PriorDataset& ds, const std::filesystem::path& path);
PriorDataset load_dataset(const std::filesystem::path& path);

void write_measurements_csv(const MeasurementSet& m, const std::filesystem::path& path);
std::string measurements_csv(const MeasurementSet& m);
/// Parses the measurement CSV. Throws FormatError naming the offending line.
MeasurementSet parse_measurements_csv(const std::string& text, double noise_scale);
MeasurementSet read_measurements_csv(const std::filesystem::path& path, double noise_scale);

}  // namespace fprior

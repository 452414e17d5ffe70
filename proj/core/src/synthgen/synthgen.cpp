#include "fprior/synthgen.hpp"

#include <algorithm>
#include <thread>

#include "fprior/io.hpp"

namespace fprior {

ParamVector ParamRanges::table1_base() {
  return {8.633, 9.34, 0.137, 4.447, 0.046, 0.015, 1.193, 28.0};
}

ParamRanges ParamRanges::table1() {
  const ParamRange moduli{0.1, 5.0};
  const ParamRange exponents{0.01, 2.0};
  const ParamRange angle{0.1, 2.0};
  return scaled(table1_base(),
                {moduli, moduli, exponents, moduli, exponents, moduli, exponents, angle});
}

ParamRanges ParamRanges::scaled(const ParamVector& base,
                                const std::array<ParamRange, kNumFreeParams>& variations) {
  ParamRanges r;
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    r.bounds[i] = {base[i] * variations[i].lower, base[i] * variations[i].upper};
  }
  return r;
}

ParamVector ParamRanges::midpoint() const {
  ParamVector m{};
  for (std::size_t i = 0; i < kNumFreeParams; ++i) m[i] = bounds[i].midpoint();
  return m;
}

void ParamRanges::validate() const {
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    if (!(bounds[i].lower < bounds[i].upper)) {
      throw std::invalid_argument(std::string("ParamRanges: empty range for ") + param_names()[i]);
    }
  }
  // every draw must be a valid parameter set
  from_vector([&] {
    ParamVector lo{};
    for (std::size_t i = 0; i < kNumFreeParams; ++i) lo[i] = bounds[i].lower;
    return lo;
  }()).validate();
  if (bounds[7].upper >= 90.0) throw std::invalid_argument("ParamRanges: alpha must stay below 90");
}

SensorLayout SensorLayout::line(double theta_lo, double theta_hi, std::size_t n, double lambda_z) {
  if (n < 2) throw std::invalid_argument("SensorLayout::line needs at least two points");
  SensorLayout l;
  l.kind = LayoutKind::Line1d;
  l.n_theta = n;
  l.n_z = 1;
  l.theta_lo = theta_lo;
  l.theta_hi = theta_hi;
  l.z_lo = l.z_hi = lambda_z;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = theta_lo + (theta_hi - theta_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    l.points.push_back({t, lambda_z});
  }
  return l;
}

SensorLayout SensorLayout::grid(double lo, double hi, std::size_t n_theta, std::size_t n_z) {
  if (n_theta < 2 || n_z < 2) throw std::invalid_argument("SensorLayout::grid needs >= 2 points per axis");
  SensorLayout l;
  l.kind = LayoutKind::Grid2d;
  l.n_theta = n_theta;
  l.n_z = n_z;
  l.theta_lo = l.z_lo = lo;
  l.theta_hi = l.z_hi = hi;
  for (std::size_t iz = 0; iz < n_z; ++iz) {
    const double z = lo + (hi - lo) * static_cast<double>(iz) / static_cast<double>(n_z - 1);
    for (std::size_t it = 0; it < n_theta; ++it) {
      const double t = lo + (hi - lo) * static_cast<double>(it) / static_cast<double>(n_theta - 1);
      l.points.push_back({t, z});
    }
  }
  return l;
}

std::uint64_t PriorDataset::checksum() const {
  std::uint64_t h = fnv1a_doubles({samples.data(), static_cast<std::size_t>(samples.size())});
  for (const auto& p : params) h = fnv1a_doubles(p, h);
  return h;
}

ComponentMask parse_mask(const std::string& s) {
  if (s == "both") return ComponentMask::Both;
  if (s == "theta") return ComponentMask::ThetaOnly;
  if (s == "z") return ComponentMask::ZOnly;
  throw std::invalid_argument("unknown mask '" + s + "' (expected both|theta|z)");
}

std::string to_string(ComponentMask m) {
  switch (m) {
    case ComponentMask::Both: return "both";
    case ComponentMask::ThetaOnly: return "theta";
    case ComponentMask::ZOnly: return "z";
  }
  return "both";
}

std::size_t MeasurementSet::observation_count() const {
  std::size_t n = 0;
  for (const auto& p : points) n += (p.sigma_theta ? 1 : 0) + (p.sigma_z ? 1 : 0);
  return n;
}

void MeasurementSet::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!p.sigma_theta && !p.sigma_z) {
      throw std::invalid_argument("measurement " + std::to_string(i) + " has no observed component");
    }
    if (!(p.stretch.lambda_theta > 0.0) || !(p.stretch.lambda_z > 0.0)) {
      throw std::invalid_argument("measurement " + std::to_string(i) + " has non-positive stretch");
    }
  }
  if (noise_scale < 0.0) throw std::invalid_argument("negative noise scale");
}

bool StretchRegion::contains(const BiaxialStretch& s) const {
  return s.lambda_theta >= theta_lo && s.lambda_theta <= theta_hi && s.lambda_z >= z_lo &&
         s.lambda_z <= z_hi;
}

FourFiberParams sample_params(const ParamRanges& ranges, Rng& rng) {
  ParamVector v{};
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    const auto& b = ranges.bounds[i];
    v[i] = b.lower + b.width() * uniform01(rng);
  }
  return from_vector(v);
}

void apply_cap(Eigen::Ref<Eigen::VectorXd> values, double cap) {
  values = values.cwiseMin(cap);
}

Eigen::VectorXd layout_representation(const FourFiberParams& params, const SensorLayout& layout,
                                      std::optional<double> cap) {
  const auto c = coefficients(params);
  const auto n = static_cast<Eigen::Index>(layout.size());
  const bool line = layout.kind == LayoutKind::Line1d;
  Eigen::VectorXd rep(line ? n : 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    StressT<double> s{};
    try {
      s = cauchy_stress_from(c, layout.points[static_cast<std::size_t>(i)], 50.0);
    } catch (const ConstitutiveOverflow&) {
      // an overflowing fiber means the stress is far above any cap
      if (!cap) throw;
      s = {*cap, *cap};
    }
    rep[i] = s.sigma_theta;
    if (!line) rep[n + i] = s.sigma_z;
  }
  if (cap) apply_cap(rep, *cap);
  return rep;
}

PriorDataset generate_dataset(const ParamRanges& ranges, const SensorLayout& layout, std::size_t n,
                              std::optional<double> cap, std::uint64_t seed, unsigned threads) {
  if (n < 1) throw std::invalid_argument("generate_dataset: N must be >= 1");
  if (layout.points.empty()) throw std::invalid_argument("generate_dataset: empty layout");
  ranges.validate();
  PriorDataset ds;
  ds.layout = layout;
  ds.ranges = ranges;
  ds.seed = seed;
  ds.cap = cap;
  ds.params.resize(n);
  ds.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout.representation_size()));

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = stream_rng(seed, i);
      const FourFiberParams p = sample_params(ranges, rng);
      ds.params[i] = to_vector(p);
      ds.samples.row(static_cast<Eigen::Index>(i)) = layout_representation(p, layout, cap).transpose();
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  return ds;
}

MeasurementSet make_measurements(const FourFiberParams& params,
                                 const std::vector<BiaxialStretch>& locations, double noise_scale,
                                 ComponentMask mask, std::uint64_t seed) {
  if (locations.empty()) throw std::invalid_argument("make_measurements: no locations");
  if (noise_scale < 0.0) throw std::invalid_argument("make_measurements: negative noise scale");
  Rng rng(mix_seed(seed));
  MeasurementSet m;
  m.noise_scale = noise_scale;
  m.seed = seed;
  const auto c = coefficients(params);
  for (const auto& loc : locations) {
    const auto s = cauchy_stress_from(c, loc, 50.0);
    // both noise draws are consumed regardless of the mask so that masked
    // and unmasked sets share their observed values
    const double et = standard_normal(rng);
    const double ez = standard_normal(rng);
    Measurement obs{loc, std::nullopt, std::nullopt};
    if (mask != ComponentMask::ZOnly) obs.sigma_theta = s.sigma_theta + noise_scale * et;
    if (mask != ComponentMask::ThetaOnly) obs.sigma_z = s.sigma_z + noise_scale * ez;
    m.points.push_back(obs);
  }
  return m;
}

std::vector<BiaxialStretch> sample_locations(const StretchRegion& region, std::size_t count, Rng& rng) {
  std::vector<BiaxialStretch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = region.theta_lo + (region.theta_hi - region.theta_lo) * uniform01(rng);
    const double z = region.z_lo + (region.z_hi - region.z_lo) * uniform01(rng);
    out.push_back({t, z});
  }
  return out;
}

std::vector<BiaxialStretch> line_locations(double theta_lo, double theta_hi, std::size_t count,
                                           double lambda_z, Rng& rng) {
  std::vector<BiaxialStretch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({theta_lo + (theta_hi - theta_lo) * uniform01(rng), lambda_z});
  }
  return out;
}

std::vector<BiaxialStretch> equi_stretch_locations(double lo, double hi, std::size_t count) {
  std::vector<BiaxialStretch> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double l = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back({l, l});
  }
  return out;
}

}  // namespace fprior

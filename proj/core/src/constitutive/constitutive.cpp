#include "fprior/constitutive.hpp"

#include <sstream>

namespace fprior {

namespace {

std::string overflow_message(std::size_t fiber, double exponent, double cap) {
  std::ostringstream os;
  os << "4FF fiber " << fiber + 1 << " exponent k2*(I4-1)^2 = " << exponent
     << " exceeds cap " << cap;
  return os.str();
}

double fiber_energy(double k1, double k2, double i4, std::size_t fiber, double cap) {
  const double e = i4 - 1.0;
  const double arg = k2 * e * e;
  if (arg > cap) detail::throw_overflow(fiber, arg, cap);
  // expm1 keeps the small-strain limit accurate
  return k1 / (4.0 * k2) * std::expm1(arg);
}

}  // namespace

ConstitutiveOverflow::ConstitutiveOverflow(std::size_t fiber, double exponent, double cap)
    : std::runtime_error(overflow_message(fiber, exponent, cap)),
      fiber_(fiber),
      exponent_(exponent) {}

void detail::throw_overflow(std::size_t fiber, double exponent, double cap) {
  throw ConstitutiveOverflow(fiber, exponent, cap);
}

void FourFiberParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("FourFiberParams: " + what); };
  if (!(mu > 0.0) || !std::isfinite(mu)) fail("mu must be positive and finite");
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(k1[i] >= 0.0) || !std::isfinite(k1[i])) fail("k1 must be non-negative and finite");
    if (!(k2[i] > 0.0) || !std::isfinite(k2[i])) fail("k2 must be positive and finite");
  }
  if (k1[2] != k1[3] || k2[2] != k2[3]) fail("diagonal fiber families must share k1 and k2");
  if (!(alpha_deg > 0.0 && alpha_deg < 90.0)) fail("alpha must lie in (0, 90) degrees");
}

ParamVector to_vector(const FourFiberParams& p) {
  return {p.mu, p.k1[0], p.k2[0], p.k1[1], p.k2[1], p.k1[2], p.k2[2], p.alpha_deg};
}

FourFiberParams from_vector(const ParamVector& v) {
  FourFiberParams p;
  p.mu = v[0];
  p.k1 = {v[1], v[3], v[5], v[5]};
  p.k2 = {v[2], v[4], v[6], v[6]};
  p.alpha_deg = v[7];
  return p;
}

const std::array<const char*, kNumFreeParams>& param_names() {
  static const std::array<const char*, kNumFreeParams> names = {
      "mu", "k1_axial", "k2_axial", "k1_circ", "k2_circ", "k1_diag", "k2_diag", "alpha"};
  return names;
}

Invariants pseudo_invariants(const BiaxialStretch& s, double alpha_deg) {
  const double a = alpha_deg * kPi / 180.0;
  const double c = std::cos(a);
  const double sn = std::sin(a);
  const double lt2 = s.lambda_theta * s.lambda_theta;
  const double lz2 = s.lambda_z * s.lambda_z;
  const double lr = s.lambda_r();
  const double diag = lz2 * c * c + lt2 * sn * sn;
  return {lr * lr + lt2 + lz2, {lz2, lt2, diag, diag}};
}

FiberCoefficients<double> coefficients(const FourFiberParams& p) {
  const double a = p.alpha_deg * kPi / 180.0;
  FiberCoefficients<double> c{};
  c.mu = kpa_to_units(p.mu);
  for (std::size_t i = 0; i < 4; ++i) {
    c.k1[i] = kpa_to_units(p.k1[i]);
    c.k2[i] = p.k2[i];
  }
  c.cos2 = std::cos(a) * std::cos(a);
  c.sin2 = std::sin(a) * std::sin(a);
  return c;
}

double strain_energy(const FourFiberParams& params, const BiaxialStretch& stretch,
                     const ConstitutiveOptions& options) {
  const Invariants inv = pseudo_invariants(stretch, params.alpha_deg);
  double w = 0.5 * params.mu * (inv.i1 - 3.0);
  for (std::size_t i = 0; i < 4; ++i) {
    w += fiber_energy(params.k1[i], params.k2[i], inv.i4[i], i, options.exponent_cap);
  }
  return kpa_to_units(w);
}

BiaxialStress cauchy_stress(const FourFiberParams& params, const BiaxialStretch& stretch,
                            const ConstitutiveOptions& options) {
  const auto s = cauchy_stress_from(coefficients(params), stretch, options.exponent_cap);
  return {s.sigma_theta, s.sigma_z};
}

std::vector<BiaxialStress> stress_grid(const FourFiberParams& params,
                                       std::span<const BiaxialStretch> grid,
                                       const ConstitutiveOptions& options) {
  if (grid.empty()) throw std::invalid_argument("stress_grid: empty grid");
  const auto c = coefficients(params);
  std::vector<BiaxialStress> out;
  out.reserve(grid.size());
  for (const auto& s : grid) {
    const auto v = cauchy_stress_from(c, s, options.exponent_cap);
    out.push_back({v.sigma_theta, v.sigma_z});
  }
  return out;
}

}  // namespace fprior

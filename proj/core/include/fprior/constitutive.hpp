#pragma once

// Four-fiber-family (4FF) hyperelastic model of the arterial wall under
// biaxial extension with incompressibility and a stress-free radial surface.
//
// Units: moduli in FourFiberParams are kPa. Energies and stresses returned by
// this module are in the toolkit's internal stress unit, 0.1 MPa (= 100 kPa).

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fprior {

inline constexpr double kKpaPerUnit = 100.0;  // 1 internal unit = 0.1 MPa
inline constexpr double kPi = 3.14159265358979323846;

inline double kpa_to_units(double kpa) { return kpa / kKpaPerUnit; }
inline double units_to_kpa(double units) { return units * kKpaPerUnit; }

struct FourFiberParams {
  double mu = 0.0;                      // kPa
  std::array<double, 4> k1{};           // kPa, [axial, circ, diag, diag]
  std::array<double, 4> k2{};           // dimensionless
  double alpha_deg = 0.0;               // diagonal fiber angle from axial

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

// The eight independent entries of FourFiberParams, in table order:
// mu, k1[0], k2[0], k1[1], k2[1], k1[2]=k1[3], k2[2]=k2[3], alpha.
inline constexpr std::size_t kNumFreeParams = 8;
using ParamVector = std::array<double, kNumFreeParams>;

ParamVector to_vector(const FourFiberParams& p);
FourFiberParams from_vector(const ParamVector& v);
const std::array<const char*, kNumFreeParams>& param_names();

struct BiaxialStretch {
  double lambda_theta = 1.0;
  double lambda_z = 1.0;

  double lambda_r() const { return 1.0 / (lambda_theta * lambda_z); }
  bool operator==(const BiaxialStretch&) const = default;
};

struct BiaxialStress {
  double sigma_theta = 0.0;  // 0.1 MPa
  double sigma_z = 0.0;      // 0.1 MPa
};

struct Invariants {
  double i1 = 0.0;
  std::array<double, 4> i4{};
};

class ConstitutiveOverflow : public std::runtime_error {
 public:
  ConstitutiveOverflow(std::size_t fiber, double exponent, double cap);
  std::size_t fiber() const { return fiber_; }
  double exponent() const { return exponent_; }

 private:
  std::size_t fiber_;
  double exponent_;
};

struct ConstitutiveOptions {
  // Largest admissible k2 (I4 - 1)^2 before evaluation fails.
  double exponent_cap = 50.0;
};

Invariants pseudo_invariants(const BiaxialStretch& stretch, double alpha_deg);

double strain_energy(const FourFiberParams& params, const BiaxialStretch& stretch,
                     const ConstitutiveOptions& options = {});

BiaxialStress cauchy_stress(const FourFiberParams& params, const BiaxialStretch& stretch,
                            const ConstitutiveOptions& options = {});

std::vector<BiaxialStress> stress_grid(const FourFiberParams& params,
                                       std::span<const BiaxialStretch> grid,
                                       const ConstitutiveOptions& options = {});

// Material coefficients in internal units with the fiber angle reduced to
// cos^2/sin^2. Templated on the scalar so that forward-mode dual numbers can
// carry parameter sensitivities through the closed-form stress.
template <class T>
struct FiberCoefficients {
  T mu;
  std::array<T, 4> k1;
  std::array<T, 4> k2;
  T cos2;
  T sin2;
};

template <class T>
struct StressT {
  T sigma_theta;
  T sigma_z;
};

FiberCoefficients<double> coefficients(const FourFiberParams& params);

/// Coefficients from a free-parameter vector in table order (moduli kPa,
/// alpha degrees). The diagonal pair shares k1 and k2.
template <class T>
FiberCoefficients<T> coefficients_from(const std::array<T, kNumFreeParams>& v) {
  using std::cos;
  FiberCoefficients<T> c;
  c.mu = v[0] / kKpaPerUnit;
  c.k1 = {v[1] / kKpaPerUnit, v[3] / kKpaPerUnit, v[5] / kKpaPerUnit, v[5] / kKpaPerUnit};
  c.k2 = {v[2], v[4], v[6], v[6]};
  const T ca = cos(v[7] * (kPi / 180.0));
  c.cos2 = ca * ca;
  c.sin2 = 1.0 - c.cos2;
  return c;
}

namespace detail {

[[noreturn]] void throw_overflow(std::size_t fiber, double exponent, double cap);

inline double scalar_value(double x) { return x; }

template <class T>
double scalar_value(const T& x) {
  return x.value();
}

}  // namespace detail

// sigma_j = lambda_j dW/dlambda_j - lambda_r dW/dlambda_r for j in {theta, z},
// the Lagrange multiplier eliminated through sigma_r = 0.
template <class T>
StressT<T> cauchy_stress_from(const FiberCoefficients<T>& c, const BiaxialStretch& s,
                              double exponent_cap) {
  using std::exp;
  const double lt2 = s.lambda_theta * s.lambda_theta;
  const double lz2 = s.lambda_z * s.lambda_z;
  const double lr = s.lambda_r();
  const double lr2 = lr * lr;

  const T i4_diag = c.cos2 * lz2 + c.sin2 * lt2;
  // dW/dI4 = k1/2 (I4 - 1) exp(k2 (I4 - 1)^2)
  auto fiber_slope = [&](std::size_t i, const T& i4) -> T {
    const T e = i4 - 1.0;
    const T arg = c.k2[i] * e * e;
    if (detail::scalar_value(arg) > exponent_cap) {
      detail::throw_overflow(i, detail::scalar_value(arg), exponent_cap);
    }
    return 0.5 * c.k1[i] * e * exp(arg);
  };
  const T psi_axial = fiber_slope(0, T(lz2));
  const T psi_circ = fiber_slope(1, T(lt2));
  const T psi_diag = fiber_slope(2, i4_diag) + fiber_slope(3, i4_diag);

  const T radial = c.mu * lr2;
  const T theta = c.mu * lt2 + 2.0 * lt2 * (psi_circ + psi_diag * c.sin2);
  const T axial = c.mu * lz2 + 2.0 * lz2 * (psi_axial + psi_diag * c.cos2);
  return {theta - radial, axial - radial};
}

}  // namespace fprior

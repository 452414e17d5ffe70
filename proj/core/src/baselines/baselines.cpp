#include "fprior/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "../common/serialize.hpp"
#include "fprior/dual.hpp"
#include "fprior/rng.hpp"

namespace fprior::baselines {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Matrix kernel(const Matrix& a, const Matrix& b, const GpHyper& h) {
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double d2 = 0.0;
      for (Eigen::Index d = 0; d < a.cols(); ++d) {
        const double r = (a(i, d) - b(j, d)) / h.length_scales[static_cast<std::size_t>(d)];
        d2 += r * r;
      }
      k(i, j) = h.signal_variance * std::exp(-0.5 * d2);
    }
  }
  return k;
}

void check_hyper(const GpHyper& h, Eigen::Index dims) {
  if (static_cast<Eigen::Index>(h.length_scales.size()) != dims) {
    throw std::invalid_argument("GP: one length scale per input dimension is required");
  }
  if (!(h.signal_variance > 0.0)) throw std::invalid_argument("GP: signal variance must be positive");
  for (double l : h.length_scales) {
    if (!(l > 0.0)) throw std::invalid_argument("GP: length scales must be positive");
  }
}

using Quad = __float128;

Quad quad_dot(const Matrix& k, Eigen::Index row, const std::vector<Quad>& a) {
  Quad s = 0;
  for (Eigen::Index j = 0; j < k.cols(); ++j) s += static_cast<Quad>(k(row, j)) * a[static_cast<std::size_t>(j)];
  return s;
}

// Solves a x = b by partial-pivot elimination in quad precision. Returns false
// on an exactly singular pivot.
bool quad_solve(const Matrix& a, const Vector& b, std::vector<Quad>& x) {
  const auto n = static_cast<std::size_t>(a.rows());
  std::vector<Quad> m(n * (n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) m[i * (n + 1) + j] = a(r, static_cast<Eigen::Index>(j));
    m[i * (n + 1) + n] = b[r];
  }
  const auto at = [&](std::size_t i, std::size_t j) -> Quad& { return m[i * (n + 1) + j]; };
  const auto mag = [](Quad v) { return v < 0 ? -v : v; };
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t i = c + 1; i < n; ++i) {
      if (mag(at(i, c)) > mag(at(p, c))) p = i;
    }
    if (at(p, c) == 0) return false;
    if (p != c) {
      for (std::size_t j = c; j <= n; ++j) std::swap(at(p, j), at(c, j));
    }
    for (std::size_t i = c + 1; i < n; ++i) {
      const Quad f = at(i, c) / at(c, c);
      for (std::size_t j = c; j <= n; ++j) at(i, j) -= f * at(c, j);
    }
  }
  x.assign(n, 0);
  for (std::size_t i = n; i-- > 0;) {
    Quad s = at(i, n);
    for (std::size_t j = i + 1; j < n; ++j) s -= at(i, j) * x[j];
    x[i] = s / at(i, i);
  }
  return true;
}

Eigen::LLT<Matrix> factor(const Matrix& x, const GpHyper& h, double noise, double jitter) {
  Matrix k = kernel(x, x, h);
  k.diagonal().array() += noise + jitter;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("GP: kernel matrix is not positive definite after jitter");
  }
  return llt;
}

}  // namespace

void GpConfig::validate() const {
  if (noise_variance < 0.0) throw std::invalid_argument("GpConfig: noise variance must be >= 0");
  if (jitter < 0.0) throw std::invalid_argument("GpConfig: jitter must be >= 0");
  if (restarts < 1 || max_iterations < 0) throw std::invalid_argument("GpConfig: bad optimizer settings");
  if (!(min_length > 0.0 && min_length < max_length)) throw std::invalid_argument("GpConfig: length bounds");
  if (!(min_signal > 0.0 && min_signal < max_signal)) throw std::invalid_argument("GpConfig: signal bounds");
}

double gp_log_marginal(const Matrix& x, const Vector& y, const GpHyper& h, double noise, double jitter,
                       Vector* grad) {
  check_hyper(h, x.cols());
  const auto llt = factor(x, h, noise, jitter);
  const Vector alpha = llt.solve(y);
  const Matrix& l = llt.matrixLLT();
  const auto n = static_cast<double>(y.size());
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * kLog2Pi;
  if (grad) {
    const Matrix kf = kernel(x, x, h);
    const Matrix w = alpha * alpha.transpose() - llt.solve(Matrix::Identity(y.size(), y.size()));
    grad->resize(1 + x.cols());
    (*grad)[0] = 0.5 * (w.array() * kf.array()).sum();
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      const double ld = h.length_scales[static_cast<std::size_t>(d)];
      double acc = 0.0;
      for (Eigen::Index j = 0; j < x.rows(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          const double r = (x(i, d) - x(j, d)) / ld;
          acc += w(i, j) * kf(i, j) * r * r;
        }
      }
      (*grad)[1 + d] = 0.5 * acc;
    }
  }
  return value;
}

GpModel::GpModel(Matrix x, const Vector& y, const GpHyper& hyper, const GpConfig& config)
    : x_(std::move(x)), hyper_(hyper), noise_(config.noise_variance) {
  if (x_.rows() != y.size() || y.size() == 0) throw std::invalid_argument("GP: need matching, non-empty data");
  check_hyper(hyper_, x_.cols());
  offset_ = y.mean();
  const Vector yc = y.array() - offset_;
  const auto llt = factor(x_, hyper_, noise_ + 0.0, config.jitter);
  chol_ = llt.matrixL();
  // The mean solves (K + noise I) alpha = y without jitter; quad precision
  // resolves the near-null directions of smooth kernels so noiseless data is
  // interpolated. The jittered factor serves the variances.
  Matrix k = kernel(x_, x_, hyper_);
  k.diagonal().array() += noise_;
  if (!quad_solve(k, yc, alpha_)) {
    const Vector a = llt.solve(yc);
    alpha_.assign(a.data(), a.data() + a.size());
  }
  log_ml_ = gp_log_marginal(x_, yc, hyper_, noise_, config.jitter);
}

void GpModel::predict(const Matrix& xs, Vector& mean, Vector& sd) const {
  if (xs.cols() != x_.cols()) throw std::invalid_argument("GP predict: input dimension mismatch");
  const Matrix ks = kernel(xs, x_, hyper_);
  mean.resize(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) mean[i] = static_cast<double>(quad_dot(ks, i, alpha_) + offset_);
  const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks.transpose());
  const Vector var = (hyper_.signal_variance - v.colwise().squaredNorm().array()).max(0.0);
  sd = var.array().sqrt();
}

GpModel gp_regress(const Matrix& x, const Vector& y, const GpConfig& config) {
  config.validate();
  if (x.rows() != y.size() || y.size() == 0) throw std::invalid_argument("GP: need matching, non-empty data");
  const auto dims = x.cols();
  GpHyper start = config.initial;
  if (start.length_scales.empty()) start.length_scales.assign(static_cast<std::size_t>(dims), 0.3);
  check_hyper(start, dims);
  if (!config.optimize) return GpModel(x, y, start, config);

  const Vector yc = y.array() - y.mean();
  const Eigen::Index p = 1 + dims;
  Vector lo(p), hi(p);
  lo[0] = std::log(config.min_signal);
  hi[0] = std::log(config.max_signal);
  lo.tail(dims).setConstant(std::log(config.min_length));
  hi.tail(dims).setConstant(std::log(config.max_length));
  auto to_hyper = [&](const Vector& z) {
    GpHyper h;
    h.signal_variance = std::exp(z[0]);
    for (Eigen::Index d = 0; d < dims; ++d) h.length_scales.push_back(std::exp(z[1 + d]));
    return h;
  };
  auto objective = [&](const Vector& z, Vector* g) {
    try {
      return gp_log_marginal(x, yc, to_hyper(z), config.noise_variance, config.jitter, g);
    } catch (const NotPositiveDefinite&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  Rng rng(mix_seed(config.seed));
  Vector best_z;
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < config.restarts; ++s) {
    Vector z(p);
    if (s == 0) {
      const double var = yc.squaredNorm() / static_cast<double>(y.size());
      z[0] = std::log(std::max(var, config.min_signal));
      for (Eigen::Index d = 0; d < dims; ++d) z[1 + d] = std::log(start.length_scales[static_cast<std::size_t>(d)]);
    } else {
      for (Eigen::Index k = 0; k < p; ++k) z[k] = lo[k] + (hi[k] - lo[k]) * uniform01(rng);
    }
    z = z.cwiseMax(lo).cwiseMin(hi);
    Vector g;
    double f = objective(z, &g);
    if (!std::isfinite(f)) continue;
    // projected gradient ascent with backtracking
    double step = 0.1;
    for (int it = 0; it < config.max_iterations; ++it) {
      bool moved = false;
      while (step > 1e-12) {
        const Vector zn = (z + step * g).cwiseMax(lo).cwiseMin(hi);
        Vector gn;
        const double fn = objective(zn, &gn);
        if (std::isfinite(fn) && fn >= f + 1e-4 * g.dot(zn - z) && fn > f) {
          const double gain = fn - f;
          z = zn;
          f = fn;
          g = gn;
          step *= 2.0;
          moved = gain > 1e-10 * (1.0 + std::abs(f));
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (f > best) {
      best = f;
      best_z = z;
    }
  }
  if (best_z.size() == 0) throw NotPositiveDefinite("GP: no restart produced a positive definite kernel");
  return GpModel(x, y, to_hyper(best_z), config);
}

bayes::FieldStats gp_field_stats(const MeasurementSet& data, std::span<const BiaxialStretch> points,
                                 bool use_lambda_z, const GpConfig& config) {
  const Eigen::Index dims = use_lambda_z ? 2 : 1;
  auto inputs = [&](const std::vector<BiaxialStretch>& pts) {
    Matrix x(static_cast<Eigen::Index>(pts.size()), dims);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = pts[i].lambda_theta;
      if (use_lambda_z) x(static_cast<Eigen::Index>(i), 1) = pts[i].lambda_z;
    }
    return x;
  };
  const std::vector<BiaxialStretch> pts(points.begin(), points.end());
  const Matrix xs = inputs(pts);
  auto fit_component = [&](bool theta, Vector& mean, Vector& sd) {
    std::vector<BiaxialStretch> locs;
    std::vector<double> vals;
    for (const auto& m : data.points) {
      const auto& v = theta ? m.sigma_theta : m.sigma_z;
      if (v) {
        locs.push_back(m.stretch);
        vals.push_back(*v);
      }
    }
    if (locs.empty()) return false;
    GpConfig c = config;
    c.seed = config.seed + (theta ? 0 : 1);
    const auto model = gp_regress(inputs(locs), Eigen::Map<const Vector>(vals.data(), vals.size()), c);
    model.predict(xs, mean, sd);
    return true;
  };
  bayes::FieldStats st;
  st.points = pts;
  if (!fit_component(true, st.mean_theta, st.sd_theta)) {
    throw std::invalid_argument("GP baseline: no sigma_theta observations");
  }
  fit_component(false, st.mean_z, st.sd_z);
  return st;
}

// --- nonlinear least squares --------------------------------------------------

Weighting parse_weighting(const std::string& s) {
  if (s == "none") return Weighting::None;
  if (s == "relative") return Weighting::Relative;
  throw std::invalid_argument("unknown weighting '" + s + "' (expected none|relative)");
}

std::string to_string(Weighting w) { return w == Weighting::None ? "none" : "relative"; }

void FitConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("FitConfig: max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("FitConfig: tolerance must be positive");
  if (!(relative_floor > 0.0)) throw std::invalid_argument("FitConfig: relative floor must be positive");
  if (starts < 1) throw std::invalid_argument("FitConfig: starts must be >= 1");
}

UnderDetermined::UnderDetermined(std::size_t observations, std::size_t parameters)
    : std::runtime_error("nonlinear fit is under-determined: " + std::to_string(observations) +
                         " observations for " + std::to_string(parameters) + " parameters") {}

namespace {

using D = Dual<static_cast<int>(kNumFreeParams)>;

struct Residuals {
  Vector r;
  Matrix j;  // d r / d u
  bool ok = true;
};

class Problem {
 public:
  Problem(const MeasurementSet& data, const ParamRanges& ranges, const FitConfig& config)
      : data_(data), ranges_(ranges), config_(config) {}

  ParamVector params(const Vector& u) const {
    ParamVector v{};
    for (std::size_t i = 0; i < kNumFreeParams; ++i) {
      v[i] = ranges_.bounds[i].lower + ranges_.bounds[i].width() * u[static_cast<Eigen::Index>(i)];
    }
    return v;
  }

  Residuals evaluate(const Vector& u) const {
    std::array<D, kNumFreeParams> th;
    for (std::size_t i = 0; i < kNumFreeParams; ++i) {
      const auto& b = ranges_.bounds[i];
      th[i] = D(b.lower + b.width() * u[static_cast<Eigen::Index>(i)], D::Tangent::Unit(static_cast<Eigen::Index>(i)) * b.width());
    }
    const auto c = coefficients_from(th);
    const auto m = static_cast<Eigen::Index>(data_.observation_count());
    Residuals out;
    out.r.resize(m);
    out.j.resize(m, static_cast<Eigen::Index>(kNumFreeParams));
    Eigen::Index k = 0;
    auto add = [&](const D& pred, double obs) {
      const double w = config_.weighting == Weighting::Relative ? 1.0 / std::max(std::abs(obs), config_.relative_floor)
                                                                : 1.0;
      out.r[k] = (pred.value() - obs) * w;
      out.j.row(k) = pred.tangent().transpose() * w;
      ++k;
    };
    try {
      for (const auto& p : data_.points) {
        const auto s = cauchy_stress_from(c, p.stretch, config_.exponent_cap);
        if (p.sigma_theta) add(s.sigma_theta, *p.sigma_theta);
        if (p.sigma_z) add(s.sigma_z, *p.sigma_z);
      }
    } catch (const ConstitutiveOverflow&) {
      out.ok = false;
    }
    if (out.ok && !out.r.allFinite()) out.ok = false;
    return out;
  }

 private:
  const MeasurementSet& data_;
  const ParamRanges& ranges_;
  const FitConfig& config_;
};

FitReport levenberg_marquardt(const Problem& prob, Vector u, const FitConfig& config) {
  constexpr auto n = static_cast<Eigen::Index>(kNumFreeParams);
  FitReport rep;
  Residuals cur = prob.evaluate(u);
  if (!cur.ok) {
    rep.cost = std::numeric_limits<double>::infinity();
    rep.params = prob.params(u);
    return rep;
  }
  double cost = 0.5 * cur.r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < config.max_iterations; ++it) {
    rep.iterations = it;
    const Matrix a = cur.j.transpose() * cur.j;
    const Vector g = cur.j.transpose() * cur.r;
    // gradient components pushing into an active bound do not count
    double pg = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const bool blocked = (u[k] <= 0.0 && g[k] > 0.0) || (u[k] >= 1.0 && g[k] < 0.0);
      if (!blocked) pg = std::max(pg, std::abs(g[k]));
    }
    if (cost < 1e-30 || pg < 1e-14) {
      rep.converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      Matrix m = a;
      m.diagonal() += lambda * a.diagonal().cwiseMax(1e-12);
      const Vector delta = m.partialPivLu().solve(-g);
      const Vector un = (u + delta).cwiseMax(0.0).cwiseMin(1.0);
      Residuals nxt = prob.evaluate(un);
      const double cn = nxt.ok ? 0.5 * nxt.r.squaredNorm() : std::numeric_limits<double>::infinity();
      if (cn < cost) {
        const double rel = (cost - cn) / cost;
        u = un;
        cur = std::move(nxt);
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < config.tolerance) rep.converged = true;
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) {
          // no descent direction left: a stationary point within the box
          rep.converged = true;
          break;
        }
      }
    }
    if (rep.converged) {
      rep.iterations = it + 1;
      break;
    }
    rep.iterations = it + 1;
  }
  rep.cost = cost;
  rep.params = prob.params(u);
  return rep;
}

Vector to_unit(const ParamVector& v, const ParamRanges& ranges) {
  Vector u(static_cast<Eigen::Index>(kNumFreeParams));
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    const auto& b = ranges.bounds[i];
    u[static_cast<Eigen::Index>(i)] = b.width() > 0.0 ? std::clamp((v[i] - b.lower) / b.width(), 0.0, 1.0) : 0.0;
  }
  return u;
}

void check_problem(const MeasurementSet& data, const ParamRanges& ranges) {
  data.validate();
  ranges.validate();
  if (data.observation_count() < kNumFreeParams) throw UnderDetermined(data.observation_count(), kNumFreeParams);
}

}  // namespace

FitReport nonlinear_fit_from(const MeasurementSet& data, const ParamRanges& ranges, const ParamVector& start,
                             const FitConfig& config) {
  config.validate();
  check_problem(data, ranges);
  const Problem prob(data, ranges, config);
  FitReport rep = levenberg_marquardt(prob, to_unit(start, ranges), config);
  rep.observations = data.observation_count();
  if (!rep.converged) {
    throw FitNotConverged("nonlinear fit did not converge in " + std::to_string(config.max_iterations) +
                          " iterations (cost " + std::to_string(rep.cost) + ")");
  }
  return rep;
}

FitReport nonlinear_fit(const MeasurementSet& data, const ParamRanges& ranges, const FitConfig& config) {
  config.validate();
  check_problem(data, ranges);
  const Problem prob(data, ranges, config);
  Rng rng(mix_seed(config.seed));
  FitReport best;
  best.cost = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int s = 0; s < config.starts; ++s) {
    Vector u = Vector::Constant(static_cast<Eigen::Index>(kNumFreeParams), 0.5);
    if (s > 0) {
      for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = uniform01(rng);
    }
    FitReport rep = levenberg_marquardt(prob, u, config);
    rep.start = s;
    if (rep.converged && (!any || rep.cost < best.cost)) {
      best = rep;
      any = true;
    }
  }
  if (!any) {
    throw FitNotConverged("nonlinear fit did not converge in " + std::to_string(config.max_iterations) +
                          " iterations from any of " + std::to_string(config.starts) + " starts");
  }
  best.observations = data.observation_count();
  return best;
}

std::string fit_report_json(const FitReport& r) {
  nlohmann::json j;
  j["params"] = params_to_json(from_vector(r.params));
  j["units"] = {{"moduli", "kPa"}, {"alpha", "deg"}};
  j["cost"] = r.cost;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["observations"] = r.observations;
  j["start"] = r.start;
  return j.dump(2) + "\n";
}

bayes::FieldStats fit_field_stats(const FitReport& r, std::span<const BiaxialStretch> points, double exponent_cap) {
  const auto c = coefficients_from(r.params);
  bayes::FieldStats st;
  st.points.assign(points.begin(), points.end());
  const auto n = static_cast<Eigen::Index>(points.size());
  st.mean_theta.resize(n);
  st.mean_z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = cauchy_stress_from(c, points[static_cast<std::size_t>(i)], exponent_cap);
    st.mean_theta[i] = s.sigma_theta;
    st.mean_z[i] = s.sigma_z;
  }
  st.sd_theta = Vector::Zero(n);
  st.sd_z = Vector::Zero(n);
  return st;
}

}  // namespace fprior::baselines

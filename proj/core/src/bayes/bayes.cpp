#include "fprior/bayes.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fprior/dual.hpp"
#include "fprior/io.hpp"

namespace fprior::bayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

double log_likelihood(const Vector& pred_theta, const Vector& pred_z, const MeasurementSet& data, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("log_likelihood: standard deviation must be positive");
  const auto n = static_cast<Eigen::Index>(data.points.size());
  if (pred_theta.size() != n) throw std::invalid_argument("log_likelihood: prediction size mismatch");
  const double norm = -0.5 * (kLog2Pi + 2.0 * std::log(sd));
  const double inv2 = 0.5 / (sd * sd);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = data.points[static_cast<std::size_t>(i)];
    if (m.sigma_theta) {
      const double r = pred_theta[i] - *m.sigma_theta;
      ll += norm - r * r * inv2;
    }
    if (m.sigma_z) {
      if (pred_z.size() != n) throw std::invalid_argument("log_likelihood: sigma_z observed but not predicted");
      const double r = pred_z[i] - *m.sigma_z;
      ll += norm - r * r * inv2;
    }
  }
  return ll;
}

// --- GAN prior ---------------------------------------------------------------

GanPosterior::GanPosterior(const funcprior::DeepOnetGenerator& gen, const MeasurementSet& data, double sd)
    : gen_(&gen), data_(data), sd_(sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("GanPosterior: likelihood SD must be positive");
  data_.validate();
  if (!funcprior::is_2d(gen.mode)) {
    for (const auto& m : data_.points) {
      if (m.sigma_z) throw std::invalid_argument("GanPosterior: a line prior cannot explain sigma_z observations");
    }
  }
  if (!data_.points.empty()) {
    std::vector<BiaxialStretch> locs;
    for (const auto& m : data_.points) locs.push_back(m.stretch);
    tf_ = funcprior::trunk_features(gen, locs);
  }
}

double GanPosterior::value(const Vector& xi) const {
  Vector g;
  return (*this)(xi, g);
}

double GanPosterior::operator()(const Vector& xi, Vector& grad) const {
  using funcprior::GeneratorMode;
  if (xi.size() != gen_->latent_dim()) throw std::invalid_argument("GanPosterior: latent size mismatch");
  const double prior = -0.5 * xi.squaredNorm();
  if (data_.points.empty()) {
    grad = -xi;
    return prior;
  }
  const Matrix x = xi.transpose();
  const Matrix b = gen_->branch.evaluate(x);
  const auto f = funcprior::fields_from_coefficients(b, tf_);
  const Vector st = f.sigma_theta.row(0).transpose();
  const Vector sz = f.sigma_z.size() ? Vector(f.sigma_z.row(0).transpose()) : Vector();
  const double ll = log_likelihood(st, sz, data_, sd_);
  if (!std::isfinite(ll)) {
    grad = Vector::Zero(xi.size());
    return kNegInf;
  }

  // d ll / d sigma for observed components
  const auto n = static_cast<Eigen::Index>(data_.points.size());
  Vector rt = Vector::Zero(n), rz = Vector::Zero(n);
  const double inv = 1.0 / (sd_ * sd_);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = data_.points[static_cast<std::size_t>(i)];
    if (m.sigma_theta) rt[i] = -(st[i] - *m.sigma_theta) * inv;
    if (m.sigma_z) rz[i] = -(sz[i] - *m.sigma_z) * inv;
  }

  const Eigen::Index p = b.cols();
  Matrix gb = Matrix::Zero(1, p);
  switch (tf_.mode) {
    case GeneratorMode::Direct1d: {
      const Vector w = rt.cwiseProduct((st.array() + 1.0).matrix());
      gb = w.transpose() * tf_.t;
      break;
    }
    case GeneratorMode::Direct2d: {
      const Eigen::Index h = p / 2;
      const Vector wt = rt.cwiseProduct((st.array() + 1.0).matrix());
      const Vector wz = rz.cwiseProduct((sz.array() + 1.0).matrix());
      gb.leftCols(h) = wt.transpose() * tf_.t.leftCols(h);
      gb.rightCols(p - h) = wz.transpose() * tf_.t.rightCols(p - h);
      break;
    }
    case GeneratorMode::Energy2d: {
      // sigma_j = lambda_j e (b . dt_j) with e = exp(b . t)
      const Vector e = (f.energy.row(0).array() + 1.0).transpose();
      const Vector s_t = tf_.dt_theta * b.row(0).transpose();
      const Vector s_z = tf_.dt_z * b.row(0).transpose();
      const Vector wt = rt.cwiseProduct(tf_.lambda_theta).cwiseProduct(e);
      const Vector wz = rz.cwiseProduct(tf_.lambda_z).cwiseProduct(e);
      gb = (wt.cwiseProduct(s_t) + wz.cwiseProduct(s_z)).transpose() * tf_.t + wt.transpose() * tf_.dt_theta +
           wz.transpose() * tf_.dt_z;
      break;
    }
  }
  grad = gen_->branch.input_vjp(x, gb).row(0).transpose() - xi;
  return ll + prior;
}

// --- 4FF prior -----------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double normal_to_uniform(double x, double a, double b) { return a + (b - a) * normal_cdf(x); }

ParamVector latent_to_params(const Vector& x, const ParamRanges& ranges) {
  if (x.size() != static_cast<Eigen::Index>(kNumFreeParams)) throw std::invalid_argument("latent size must be 8");
  ParamVector v{};
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    v[i] = normal_to_uniform(x[static_cast<Eigen::Index>(i)], ranges.bounds[i].lower, ranges.bounds[i].upper);
  }
  return v;
}

FourFiberPosterior::FourFiberPosterior(const MeasurementSet& data, const ParamRanges& ranges, double sd,
                                       double exponent_cap)
    : data_(data), ranges_(ranges), sd_(sd), cap_(exponent_cap) {
  if (!(sd > 0.0)) throw std::invalid_argument("FourFiberPosterior: likelihood SD must be positive");
  data_.validate();
  for (const auto& b : ranges_.bounds) {
    if (!(b.lower < b.upper)) throw std::invalid_argument("FourFiberPosterior: empty parameter range");
  }
}

double FourFiberPosterior::value(const Vector& x) const {
  Vector g;
  return (*this)(x, g);
}

double FourFiberPosterior::operator()(const Vector& x, Vector& grad) const {
  using D = Dual<static_cast<int>(kNumFreeParams)>;
  if (x.size() != static_cast<Eigen::Index>(kNumFreeParams)) throw std::invalid_argument("latent size must be 8");
  std::array<D, kNumFreeParams> th;
  Vector dth(kNumFreeParams);
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const auto& r = ranges_.bounds[i];
    th[i] = D::variable(r.lower + r.width() * normal_cdf(x[k]), static_cast<int>(i));
    dth[k] = r.width() * normal_pdf(x[k]);
  }
  const auto c = coefficients_from(th);

  const double norm = -0.5 * (kLog2Pi + 2.0 * std::log(sd_));
  const double inv2 = 0.5 / (sd_ * sd_);
  D ll(0.0);
  try {
    for (const auto& m : data_.points) {
      const auto s = cauchy_stress_from(c, m.stretch, cap_);
      if (m.sigma_theta) {
        const D r = s.sigma_theta - *m.sigma_theta;
        ll += norm - r * r * inv2;
      }
      if (m.sigma_z) {
        const D r = s.sigma_z - *m.sigma_z;
        ll += norm - r * r * inv2;
      }
    }
  } catch (const ConstitutiveOverflow&) {
    grad = Vector::Zero(x.size());
    return kNegInf;
  }
  if (!std::isfinite(ll.value())) {
    grad = Vector::Zero(x.size());
    return kNegInf;
  }
  grad = ll.tangent().cwiseProduct(dth) - x;
  return ll.value() - 0.5 * x.squaredNorm();
}

// --- HMC ---------------------------------------------------------------------

void HmcConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("HmcConfig: step size must be positive");
  if (leapfrog_steps < 1) throw std::invalid_argument("HmcConfig: leapfrog steps must be >= 1");
  if (draws < 1) throw std::invalid_argument("HmcConfig: draws must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("HmcConfig: burn-in must be >= 0");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("HmcConfig: target in (0,1)");
  if (max_tree_depth < 1) throw std::invalid_argument("HmcConfig: tree depth must be >= 1");
}

namespace {

struct State {
  Vector x;
  Vector g;
  double lp = kNegInf;
};

// One leapfrog step of size eps; momentum p is updated in place.
State leapfrog(const LogDensityFn& logp, const State& s, Vector& p, double eps) {
  State out;
  p += 0.5 * eps * s.g;
  out.x = s.x + eps * p;
  out.lp = logp(out.x, out.g);
  if (!std::isfinite(out.lp)) {
    out.lp = kNegInf;
    return out;
  }
  p += 0.5 * eps * out.g;
  return out;
}

double hamiltonian(double lp, const Vector& p) { return lp - 0.5 * p.squaredNorm(); }

Vector normal_vector(Eigen::Index n, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

double find_initial_step(const LogDensityFn& logp, const State& s, double eps, Rng& rng) {
  auto log_ratio = [&](double e) {
    Vector p = normal_vector(s.x.size(), rng);
    const double h0 = hamiltonian(s.lp, p);
    const State t = leapfrog(logp, s, p, e);
    const double h1 = std::isfinite(t.lp) ? hamiltonian(t.lp, p) : kNegInf;
    return h1 - h0;
  };
  double lr = log_ratio(eps);
  const double dir = (std::isfinite(lr) && lr > std::log(0.5)) ? 1.0 : -1.0;
  for (int k = 0; k < 60; ++k) {
    if (!(dir * lr > -dir * std::log(2.0))) break;
    eps *= std::pow(2.0, dir);
    lr = log_ratio(eps);
    if (!std::isfinite(lr) && dir > 0) {
      eps *= 0.5;
      break;
    }
  }
  return eps;
}

constexpr double kDivergence = 1000.0;

struct Transition {
  State next;
  double accept = 0.0;
  bool divergent = false;
};

Transition hmc_transition(const LogDensityFn& logp, const State& s, double eps, int steps, Rng& rng) {
  Vector p = normal_vector(s.x.size(), rng);
  const double h0 = hamiltonian(s.lp, p);
  State cur = s;
  for (int l = 0; l < steps; ++l) {
    cur = leapfrog(logp, cur, p, eps);
    if (!std::isfinite(cur.lp)) break;
  }
  Transition t;
  const double h1 = std::isfinite(cur.lp) ? hamiltonian(cur.lp, p) : kNegInf;
  t.divergent = !std::isfinite(h1) || h0 - h1 > kDivergence;
  t.accept = std::isfinite(h1) ? std::min(1.0, std::exp(h1 - h0)) : 0.0;
  t.next = uniform01(rng) < t.accept ? cur : s;
  return t;
}

// No-U-Turn sampler with slice sampling and dual-averaging statistics.
struct Tree {
  State minus, plus;
  Vector p_minus, p_plus;
  State candidate;
  double n = 0.0;
  bool ok = true;
  double alpha = 0.0;
  double n_alpha = 0.0;
  bool divergent = false;
};

bool no_u_turn(const State& minus, const State& plus, const Vector& pm, const Vector& pp) {
  const Vector d = plus.x - minus.x;
  return d.dot(pm) >= 0.0 && d.dot(pp) >= 0.0;
}

Tree build_tree(const LogDensityFn& logp, const State& s, const Vector& p, double log_u, int dir, int depth,
                double eps, double h0, Rng& rng) {
  if (depth == 0) {
    Vector p1 = p;
    const State s1 = leapfrog(logp, s, p1, dir * eps);
    Tree t;
    const double h1 = std::isfinite(s1.lp) ? hamiltonian(s1.lp, p1) : kNegInf;
    t.minus = t.plus = t.candidate = s1;
    t.p_minus = t.p_plus = p1;
    t.n = log_u <= h1 ? 1.0 : 0.0;
    t.ok = log_u < h1 + kDivergence;
    t.divergent = !t.ok;
    t.alpha = std::isfinite(h1) ? std::min(1.0, std::exp(h1 - h0)) : 0.0;
    t.n_alpha = 1.0;
    return t;
  }
  Tree t = build_tree(logp, s, p, log_u, dir, depth - 1, eps, h0, rng);
  if (!t.ok) return t;
  Tree t2 = dir < 0 ? build_tree(logp, t.minus, t.p_minus, log_u, dir, depth - 1, eps, h0, rng)
                    : build_tree(logp, t.plus, t.p_plus, log_u, dir, depth - 1, eps, h0, rng);
  if (dir < 0) {
    t.minus = t2.minus;
    t.p_minus = t2.p_minus;
  } else {
    t.plus = t2.plus;
    t.p_plus = t2.p_plus;
  }
  if (t.n + t2.n > 0.0 && uniform01(rng) < t2.n / (t.n + t2.n)) t.candidate = t2.candidate;
  t.alpha += t2.alpha;
  t.n_alpha += t2.n_alpha;
  t.divergent = t.divergent || t2.divergent;
  t.ok = t2.ok && no_u_turn(t.minus, t.plus, t.p_minus, t.p_plus);
  t.n += t2.n;
  return t;
}

Transition nuts_transition(const LogDensityFn& logp, const State& s, double eps, int max_depth, Rng& rng) {
  const Vector p = normal_vector(s.x.size(), rng);
  const double h0 = hamiltonian(s.lp, p);
  const double log_u = h0 + std::log(uniform01(rng));
  State minus = s, plus = s;
  Vector pm = p, pp = p;
  Transition out;
  out.next = s;
  double n = 1.0;
  bool ok = true;
  double alpha = 0.0, n_alpha = 0.0;
  for (int depth = 0; ok && depth < max_depth; ++depth) {
    const int dir = uniform01(rng) < 0.5 ? -1 : 1;
    Tree t = dir < 0 ? build_tree(logp, minus, pm, log_u, dir, depth, eps, h0, rng)
                     : build_tree(logp, plus, pp, log_u, dir, depth, eps, h0, rng);
    if (dir < 0) {
      minus = t.minus;
      pm = t.p_minus;
    } else {
      plus = t.plus;
      pp = t.p_plus;
    }
    if (t.ok && uniform01(rng) < t.n / n) out.next = t.candidate;
    n += t.n;
    alpha = t.alpha;
    n_alpha = t.n_alpha;
    out.divergent = out.divergent || t.divergent;
    ok = t.ok && no_u_turn(minus, plus, pm, pp);
  }
  out.accept = n_alpha > 0.0 ? alpha / n_alpha : 0.0;
  return out;
}

}  // namespace

Chain hmc_sample(const LogDensityFn& logp, const Vector& init, const HmcConfig& config, Rng& rng) {
  config.validate();
  State s;
  s.x = init;
  s.lp = logp(s.x, s.g);
  if (!std::isfinite(s.lp)) throw SamplingFailed("hmc_sample: initial state has zero posterior density");

  double eps = config.step_size;
  if (config.adapt_step && config.burn_in > 0) eps = find_initial_step(logp, s, eps, rng);
  // dual averaging
  const double mu = std::log(10.0 * eps);
  const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double h_bar = 0.0, log_eps_bar = 0.0;

  Chain chain;
  chain.draws.resize(config.draws, init.size());
  chain.log_density.resize(config.draws);
  double burn_sum = 0.0, keep_sum = 0.0;
  const long total = static_cast<long>(config.burn_in) + config.draws;
  for (long m = 1; m <= total; ++m) {
    // a jittered step breaks periodic trajectories of a fixed leapfrog count
    const double jitter = config.nuts ? 1.0 : 0.8 + 0.4 * uniform01(rng);
    const Transition t = config.nuts ? nuts_transition(logp, s, eps, config.max_tree_depth, rng)
                                     : hmc_transition(logp, s, eps * jitter, config.leapfrog_steps, rng);
    s = t.next;
    if (t.divergent && m > config.burn_in) ++chain.divergences;
    if (m <= config.burn_in) {
      burn_sum += t.accept;
      if (config.adapt_step) {
        const double md = static_cast<double>(m);
        h_bar = (1.0 - 1.0 / (md + t0)) * h_bar + (config.target_accept - t.accept) / (md + t0);
        const double log_eps = mu - std::sqrt(md) / gamma * h_bar;
        const double eta = std::pow(md, -kappa);
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
        eps = std::exp(log_eps);
      }
      if (m == config.burn_in) {
        if (config.adapt_step) eps = std::exp(log_eps_bar);
        chain.burn_in_accept = burn_sum / config.burn_in;
        if (chain.burn_in_accept < config.min_burn_in_accept) {
          std::ostringstream msg;
          msg << "hmc_sample: burn-in acceptance " << chain.burn_in_accept << " below "
              << config.min_burn_in_accept << " (step size " << eps << ")";
          throw SamplingFailed(msg.str());
        }
      }
    } else {
      const auto k = static_cast<Eigen::Index>(m - config.burn_in - 1);
      chain.draws.row(k) = s.x.transpose();
      chain.log_density[k] = s.lp;
      keep_sum += t.accept;
    }
  }
  chain.accept_rate = keep_sum / config.draws;
  chain.step_size = eps;
  return chain;
}

// --- field statistics ------------------------------------------------------------

void column_stats(const Matrix& samples, Vector& mean, Vector& sd) {
  if (samples.rows() < 1) throw std::invalid_argument("column_stats: no samples");
  mean = samples.colwise().mean().transpose();
  sd = ((samples.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
}

FieldStats gan_field_stats(const funcprior::DeepOnetGenerator& gen, const Matrix& xi_draws,
                           std::span<const BiaxialStretch> points) {
  FieldStats st;
  st.points.assign(points.begin(), points.end());
  const auto f = funcprior::generate(gen, xi_draws, points);
  column_stats(f.sigma_theta, st.mean_theta, st.sd_theta);
  if (f.sigma_z.size()) column_stats(f.sigma_z, st.mean_z, st.sd_z);
  if (f.energy.size()) column_stats(f.energy, st.mean_w, st.sd_w);
  return st;
}

FieldStats fourfiber_field_stats(const Matrix& latent_draws, const ParamRanges& ranges,
                                 std::span<const BiaxialStretch> points, double exponent_cap) {
  const auto n = latent_draws.rows();
  const auto k = static_cast<Eigen::Index>(points.size());
  Matrix th(n, k), z(n, k), w(n, k);
  const ConstitutiveOptions opts{exponent_cap};
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto params = from_vector(latent_to_params(latent_draws.row(d).transpose(), ranges));
    const auto c = coefficients(params);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& s = points[static_cast<std::size_t>(i)];
      const auto sig = cauchy_stress_from(c, s, exponent_cap);
      th(d, i) = sig.sigma_theta;
      z(d, i) = sig.sigma_z;
      w(d, i) = strain_energy(params, s, opts);
    }
  }
  FieldStats st;
  st.points.assign(points.begin(), points.end());
  column_stats(th, st.mean_theta, st.sd_theta);
  column_stats(z, st.mean_z, st.sd_z);
  column_stats(w, st.mean_w, st.sd_w);
  return st;
}

std::string stats_csv(const FieldStats& s) {
  std::string out = "# unit=0.1MPa\nlambda_theta,lambda_z,mean_sigma_theta,sd_sigma_theta,mean_sigma_z,sd_sigma_z";
  if (s.has_w()) out += ",mean_W,sd_W";
  out += '\n';
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out += format_double(s.points[i].lambda_theta) + ',' + format_double(s.points[i].lambda_z) + ',' +
           format_double(s.mean_theta[k]) + ',' + format_double(s.sd_theta[k]) + ',';
    if (s.has_z()) out += format_double(s.mean_z[k]) + ',' + format_double(s.sd_z[k]);
    else out += ',';
    if (s.has_w()) out += ',' + format_double(s.mean_w[k]) + ',' + format_double(s.sd_w[k]);
    out += '\n';
  }
  return out;
}

FieldStats parse_stats_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(l);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) header = split(line);
    else rows.push_back(split(line));
  }
  if (header.size() < 6 || header[0] != "lambda_theta" || header[2] != "mean_sigma_theta") {
    throw FormatError("stats CSV: unexpected header");
  }
  const bool has_w = header.size() == 8;
  const bool has_z = !rows.empty() && !rows[0][4].empty();
  FieldStats s;
  const auto n = static_cast<Eigen::Index>(rows.size());
  s.mean_theta.resize(n);
  s.sd_theta.resize(n);
  if (has_z) {
    s.mean_z.resize(n);
    s.sd_z.resize(n);
  }
  if (has_w) {
    s.mean_w.resize(n);
    s.sd_w.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (r.size() != header.size()) throw FormatError("stats CSV: row " + std::to_string(i + 1) + " has wrong width");
    s.points.push_back({std::stod(r[0]), std::stod(r[1])});
    s.mean_theta[i] = std::stod(r[2]);
    s.sd_theta[i] = std::stod(r[3]);
    if (has_z) {
      s.mean_z[i] = std::stod(r[4]);
      s.sd_z[i] = std::stod(r[5]);
    }
    if (has_w) {
      s.mean_w[i] = std::stod(r[6]);
      s.sd_w[i] = std::stod(r[7]);
    }
  }
  return s;
}

std::string draws_csv(const Matrix& draws, const Vector& log_density, const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != draws.cols()) throw std::invalid_argument("draws_csv: names");
  std::string out = "draw,log_density";
  for (const auto& n : names) out += ',' + n;
  out += '\n';
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    out += std::to_string(i) + ',' + format_double(log_density[i]);
    for (Eigen::Index j = 0; j < draws.cols(); ++j) out += ',' + format_double(draws(i, j));
    out += '\n';
  }
  return out;
}

}  // namespace fprior::bayes

#include "fprior/harness.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

#include "../common/serialize.hpp"
#include "fprior/diffnet/checkpoint.hpp"
#include "fprior/io.hpp"

namespace fprior::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Desk-scale generator iterations for grid priors; see README for timings.
constexpr long kDeskIterations2d = 3000;
constexpr long kDeskIterations1d = 20000;
constexpr long kPaperIterations = 100000;

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace

double relative_error(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("relative_error: size mismatch");
  const double denom = truth.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("relative_error: true field has zero norm");
  return (pred - truth).norm() / denom;
}

Placement parse_placement(const std::string& s) {
  if (s == "random") return Placement::Random;
  if (s == "line") return Placement::Line;
  if (s == "equi") return Placement::Equi;
  throw std::invalid_argument("unknown placement '" + s + "' (expected random|line|equi)");
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::Random: return "random";
    case Placement::Line: return "line";
    case Placement::Equi: return "equi";
  }
  return "random";
}

double ExperimentConfig::effective_sd() const {
  return likelihood_sd.value_or(std::max(measurements.noise, noiseless_sd));
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> cases{"case1", "sweep", "case2", "appendix-b", "appendix-c", "infer"};
  if (!cases.count(case_id)) throw std::invalid_argument("unknown case '" + case_id + "'");
  if (case_id == "case2") {
    static const std::set<std::string> variants{"random7", "equi5", "partial", "ood"};
    if (!variants.count(variant)) {
      throw std::invalid_argument("unknown case2 variant '" + variant + "' (expected random7|equi5|partial|ood)");
    }
  }
  prior.gan.validate();
  prior.ranges.validate();
  if (prior.samples == 0) throw std::invalid_argument("prior.samples must be positive");
  if (measurements.count == 0) throw std::invalid_argument("measurement count must be positive");
  if (measurements.noise < 0.0) throw std::invalid_argument("noise must be >= 0");
  if (!(effective_sd() > 0.0)) throw std::invalid_argument("likelihood SD must be positive");
  const auto& r = measurements.region;
  if (!(r.theta_lo <= r.theta_hi && r.z_lo <= r.z_hi)) throw std::invalid_argument("empty measurement region");
  hmc.validate();
  gp.validate();
  static const std::set<std::string> known{"gan", "4ff", "gp", "nlreg"};
  for (const auto& m : methods) {
    if (!known.count(m)) throw std::invalid_argument("unknown method '" + m + "' (expected gan|4ff|gp|nlreg)");
  }
  if (case_id == "appendix-b" && train_sizes.empty()) throw std::invalid_argument("train_sizes is empty");
  if (case_id == "appendix-c" && regions.empty()) throw std::invalid_argument("regions is empty");
  if (case_id == "case2" && variant == "ood" && ood_mu.empty()) throw std::invalid_argument("ood.mu is empty");
  if (!prior.checkpoint.empty() && !fs::exists(prior.checkpoint / "manifest.json")) {
    throw std::invalid_argument("checkpoint '" + prior.checkpoint.string() + "' has no manifest.json");
  }
}

ExperimentConfig default_config(const std::string& case_id, const std::string& variant, bool paper_scale) {
  ExperimentConfig c;
  c.case_id = case_id;
  c.variant = variant;
  c.paper_scale = paper_scale;
  c.prior.ranges = ParamRanges::table1();
  c.prior.gan.seed = 7;
  const bool line = case_id == "case1" || case_id == "sweep";
  if (line) {
    c.prior.gan.mode = funcprior::GeneratorMode::Direct1d;
    c.prior.gan.iterations = paper_scale ? kPaperIterations : kDeskIterations1d;
    c.prior.layout = SensorLayout::default_line();
    c.measurements.placement = Placement::Line;
    c.measurements.count = 5;
    c.measurements.region = {1.3, 1.6, 1.44, 1.44};
    c.measurements.lambda_z = 1.44;
    c.measurements.mask = ComponentMask::ThetaOnly;
    c.methods = {"gan", "gp"};
    if (case_id == "sweep") c.seeds = {0, 1, 2};
  } else {
    c.prior.gan.mode = funcprior::GeneratorMode::Energy2d;
    c.prior.gan.iterations = paper_scale ? kPaperIterations : kDeskIterations2d;
    c.prior.layout = SensorLayout::default_grid();
    c.methods = {"gan", "4ff"};
  }
  c.prior.gan.shape = funcprior::NetworkShape::defaults(c.prior.gan.mode);
  if (case_id == "case2") {
    if (variant == "equi5") {
      c.measurements.placement = Placement::Equi;
      c.measurements.count = 5;
      c.measurements.region = StretchRegion::square(1.2, 1.6);
    } else if (variant == "partial") {
      c.measurements.mask = ComponentMask::ThetaOnly;
    } else if (variant == "ood") {
      c.prior.ranges.bounds[0] = c.ood_train_mu;
      for (int mu = 5; mu <= 30; ++mu) c.ood_mu.push_back(mu);
    }
  } else if (case_id == "appendix-b") {
    c.methods = {"gan"};
  } else if (case_id == "appendix-c") {
    c.methods = {"gan"};
    c.measurements.count = 20;
    c.measurements.noise = 0.0;
    c.regions = {StretchRegion::square(1.4, 1.6), StretchRegion::square(1.0, 1.65), StretchRegion::square(1.0, 1.2)};
  }
  return c;
}

// --- JSON ----------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument("config: unknown key '" + k + "' in " + where);
  }
}

json region_to_json(const StretchRegion& r) { return {r.theta_lo, r.theta_hi, r.z_lo, r.z_hi}; }

StretchRegion region_from_json(const json& j) {
  if (!j.is_array() || (j.size() != 2 && j.size() != 4)) {
    throw std::invalid_argument("config: a region is [lo, hi] or [theta_lo, theta_hi, z_lo, z_hi]");
  }
  if (j.size() == 2) return StretchRegion::square(j[0].get<double>(), j[1].get<double>());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json hmc_to_json(const bayes::HmcConfig& h) {
  return {{"step_size", h.step_size},
          {"leapfrog_steps", h.leapfrog_steps},
          {"burn_in", h.burn_in},
          {"draws", h.draws},
          {"adapt_step", h.adapt_step},
          {"target_accept", h.target_accept},
          {"nuts", h.nuts},
          {"max_tree_depth", h.max_tree_depth},
          {"min_burn_in_accept", h.min_burn_in_accept}};
}

void hmc_from_json(const json& j, bayes::HmcConfig& h) {
  check_keys(j, {"step_size", "leapfrog_steps", "burn_in", "draws", "adapt_step", "target_accept", "nuts",
                 "max_tree_depth", "min_burn_in_accept"},
             "hmc");
  h.step_size = j.value("step_size", h.step_size);
  h.leapfrog_steps = j.value("leapfrog_steps", h.leapfrog_steps);
  h.burn_in = j.value("burn_in", h.burn_in);
  h.draws = j.value("draws", h.draws);
  h.adapt_step = j.value("adapt_step", h.adapt_step);
  h.target_accept = j.value("target_accept", h.target_accept);
  h.nuts = j.value("nuts", h.nuts);
  h.max_tree_depth = j.value("max_tree_depth", h.max_tree_depth);
  h.min_burn_in_accept = j.value("min_burn_in_accept", h.min_burn_in_accept);
}

json gp_to_json(const baselines::GpConfig& g) {
  return {{"restarts", g.restarts},         {"max_iterations", g.max_iterations}, {"jitter", g.jitter},
          {"length_bounds", {g.min_length, g.max_length}}, {"signal_bounds", {g.min_signal, g.max_signal}}};
}

void gp_from_json(const json& j, baselines::GpConfig& g) {
  check_keys(j, {"restarts", "max_iterations", "jitter", "length_bounds", "signal_bounds"}, "gp");
  g.restarts = j.value("restarts", g.restarts);
  g.max_iterations = j.value("max_iterations", g.max_iterations);
  g.jitter = j.value("jitter", g.jitter);
  if (j.contains("length_bounds")) {
    g.min_length = j.at("length_bounds").at(0);
    g.max_length = j.at("length_bounds").at(1);
  }
  if (j.contains("signal_bounds")) {
    g.min_signal = j.at("signal_bounds").at(0);
    g.max_signal = j.at("signal_bounds").at(1);
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["case"] = c.case_id;
  j["variant"] = c.variant;
  j["paper_scale"] = c.paper_scale;
  j["prior"] = {{"samples", c.prior.samples},
                {"cap", optional_number(c.prior.cap)},
                {"data_seed", c.prior.data_seed},
                {"checkpoint", c.prior.checkpoint.string()},
                {"layout", layout_to_json(c.prior.layout)},
                {"ranges", ranges_to_json(c.prior.ranges)},
                {"gan", gan_config_to_json(c.prior.gan)}};
  j["measurements"] = {{"placement", to_string(c.measurements.placement)},
                       {"count", c.measurements.count},
                       {"region", region_to_json(c.measurements.region)},
                       {"lambda_z", c.measurements.lambda_z},
                       {"noise", c.measurements.noise},
                       {"mask", to_string(c.measurements.mask)}};
  j["truth"] = params_to_json(from_vector(truth_params(c)));
  j["likelihood_sd"] = c.effective_sd();
  j["noiseless_sd"] = c.noiseless_sd;
  j["hmc"] = hmc_to_json(c.hmc);
  j["gp"] = gp_to_json(c.gp);
  j["methods"] = c.methods;
  j["seed"] = c.seed;
  j["seeds"] = c.seed_list();
  j["out"] = c.out.string();
  j["prior_cache"] = c.prior_cache.string();
  j["sweep"] = {{"noise", c.sweep_noise}, {"points", c.sweep_points}};
  j["ood"] = {{"mu", c.ood_mu}, {"train_mu", {c.ood_train_mu.lower, c.ood_train_mu.upper}}};
  j["train_sizes"] = c.train_sizes;
  json regions = json::array();
  for (const auto& r : c.regions) regions.push_back(region_to_json(r));
  j["regions"] = regions;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& case_id, const std::string& variant, bool paper_scale,
                                  const std::string& json_text) {
  ExperimentConfig c = default_config(case_id, variant, paper_scale);
  if (json_text.empty()) return c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"case", "variant", "paper_scale", "prior", "measurements", "truth", "likelihood_sd", "noiseless_sd",
                 "hmc", "gp", "methods", "seed", "seeds", "out", "prior_cache", "sweep", "ood", "train_sizes",
                 "regions"},
             "config");
  try {
    if (j.contains("case") && j["case"].get<std::string>() != case_id) {
      throw std::invalid_argument("config case '" + j["case"].get<std::string>() + "' does not match '" + case_id + "'");
    }
    if (j.contains("prior")) {
      const auto& p = j["prior"];
      check_keys(p, {"samples", "cap", "data_seed", "checkpoint", "layout", "ranges", "gan"}, "prior");
      c.prior.samples = p.value("samples", c.prior.samples);
      if (p.contains("cap")) {
        c.prior.cap = p["cap"].is_null() ? std::nullopt : std::optional<double>(p["cap"].get<double>());
      }
      c.prior.data_seed = p.value("data_seed", c.prior.data_seed);
      if (p.contains("checkpoint")) c.prior.checkpoint = p["checkpoint"].get<std::string>();
      if (p.contains("layout")) c.prior.layout = layout_from_json(p["layout"]);
      if (p.contains("ranges")) c.prior.ranges = ranges_from_json(p["ranges"]);
      if (p.contains("gan")) {
        json merged = json::parse(gan_config_to_json(c.prior.gan).dump());
        merged.merge_patch(p["gan"]);
        c.prior.gan = gan_config_from_json(merged);
        if (!p["gan"].contains("shape") && p["gan"].contains("mode")) {
          c.prior.gan.shape = funcprior::NetworkShape::defaults(c.prior.gan.mode);
        }
      }
    }
    if (j.contains("measurements")) {
      const auto& m = j["measurements"];
      check_keys(m, {"placement", "count", "region", "lambda_z", "noise", "mask"}, "measurements");
      if (m.contains("placement")) c.measurements.placement = parse_placement(m["placement"]);
      c.measurements.count = m.value("count", c.measurements.count);
      if (m.contains("region")) c.measurements.region = region_from_json(m["region"]);
      c.measurements.lambda_z = m.value("lambda_z", c.measurements.lambda_z);
      c.measurements.noise = m.value("noise", c.measurements.noise);
      if (m.contains("mask")) c.measurements.mask = parse_mask(m["mask"]);
    }
    if (j.contains("truth") && !j["truth"].is_null()) c.truth = to_vector(params_from_json(j["truth"]));
    if (j.contains("likelihood_sd") && !j["likelihood_sd"].is_null()) c.likelihood_sd = j["likelihood_sd"].get<double>();
    c.noiseless_sd = j.value("noiseless_sd", c.noiseless_sd);
    if (j.contains("hmc")) hmc_from_json(j["hmc"], c.hmc);
    if (j.contains("gp")) gp_from_json(j["gp"], c.gp);
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    c.seed = j.value("seed", c.seed);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("prior_cache")) c.prior_cache = j["prior_cache"].get<std::string>();
    if (j.contains("sweep")) {
      check_keys(j["sweep"], {"noise", "points"}, "sweep");
      if (j["sweep"].contains("noise")) c.sweep_noise = j["sweep"]["noise"].get<std::vector<double>>();
      if (j["sweep"].contains("points")) c.sweep_points = j["sweep"]["points"].get<std::vector<std::size_t>>();
    }
    if (j.contains("ood")) {
      check_keys(j["ood"], {"mu", "train_mu"}, "ood");
      if (j["ood"].contains("mu")) c.ood_mu = j["ood"]["mu"].get<std::vector<double>>();
      if (j["ood"].contains("train_mu")) {
        c.ood_train_mu = {j["ood"]["train_mu"].at(0).get<double>(), j["ood"]["train_mu"].at(1).get<double>()};
        if (variant == "ood" && !(j.contains("prior") && j["prior"].contains("ranges"))) {
          c.prior.ranges.bounds[0] = c.ood_train_mu;
        }
      }
    }
    if (j.contains("train_sizes")) c.train_sizes = j["train_sizes"].get<std::vector<std::size_t>>();
    if (j.contains("regions")) {
      c.regions.clear();
      for (const auto& r : j["regions"]) c.regions.push_back(region_from_json(r));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

// --- priors -------------------------------------------------------------------

std::string prior_key(const PriorSpec& spec) {
  const json j = {{"layout", layout_to_json(spec.layout)}, {"ranges", ranges_to_json(spec.ranges)},
                  {"samples", spec.samples},               {"cap", optional_number(spec.cap)},
                  {"data_seed", spec.data_seed},           {"gan", gan_config_to_json(spec.gan)}};
  return hex64(fnv1a(j.dump()));
}

funcprior::TrainedPrior obtain_prior(const PriorSpec& spec, const fs::path& cache, const Log& log) {
  if (!spec.checkpoint.empty()) {
    say(log, "loading prior from " + spec.checkpoint.string());
    auto p = funcprior::load_prior(spec.checkpoint);
    if (!(p.layout == spec.layout)) throw std::invalid_argument("checkpoint layout differs from the configured layout");
    return p;
  }
  const auto data = generate_dataset(spec.ranges, spec.layout, spec.samples, spec.cap, spec.data_seed);
  const fs::path dir = cache / ("prior-" + prior_key(spec));
  if (fs::exists(dir / "manifest.json")) {
    auto p = funcprior::load_prior(dir);
    if (p.dataset_checksum == data.checksum()) {
      say(log, "using cached prior " + dir.string());
      return p;
    }
    say(log, "cached prior " + dir.string() + " was trained on different data; retraining");
  }
  say(log, "training " + funcprior::to_string(spec.gan.mode) + " prior on " + std::to_string(spec.samples) +
               " samples for " + std::to_string(spec.gan.iterations) + " iterations");
  const long every = std::max<long>(1, spec.gan.iterations / 10);
  auto prior = funcprior::train(data, spec.gan, [&](const funcprior::LossRecord& r) {
    if (r.epoch % every == 0) {
      std::ostringstream s;
      s << "  iteration " << r.epoch << ": loss_g " << r.loss_g << ", loss_d " << r.loss_d << ", penalty "
        << r.penalty;
      say(log, s.str());
    }
  });
  funcprior::save_prior(prior, dir);
  say(log, "saved prior to " + dir.string());
  return prior;
}

// --- inference ----------------------------------------------------------------

const MethodResult& CaseResult::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw std::out_of_range("no result for method '" + name + "'");
}

std::vector<BiaxialStretch> evaluation_points(const ExperimentConfig& c) {
  if (c.prior.layout.kind == LayoutKind::Line1d) {
    std::vector<BiaxialStretch> pts;
    for (int i = 0; i <= 65; ++i) pts.push_back({1.0 + 0.01 * i, c.prior.layout.z_lo});
    return pts;
  }
  return SensorLayout::default_grid().points;
}

ParamVector truth_params(const ExperimentConfig& c) {
  if (c.truth) return *c.truth;
  if (c.case_id == "case1" || c.case_id == "sweep") return c.prior.ranges.midpoint();
  return ParamRanges::table1_base();
}

MeasurementSet draw_measurements(const MeasurementSpec& spec, const ParamVector& truth, std::uint64_t seed) {
  Rng loc_rng = stream_rng(seed, 1);
  std::vector<BiaxialStretch> locs;
  switch (spec.placement) {
    case Placement::Random: locs = sample_locations(spec.region, spec.count, loc_rng); break;
    case Placement::Line:
      locs = line_locations(spec.region.theta_lo, spec.region.theta_hi, spec.count, spec.lambda_z, loc_rng);
      break;
    case Placement::Equi: locs = equi_stretch_locations(spec.region.theta_lo, spec.region.theta_hi, spec.count); break;
  }
  Rng noise_rng = stream_rng(seed, 2);
  return make_measurements(from_vector(truth), locs, spec.noise, spec.mask, noise_rng());
}

namespace {

constexpr double kPredictionCap = 700.0;
constexpr int kFitStarts = 8;

bayes::FieldStats truth_field(const ParamVector& truth, const std::vector<BiaxialStretch>& pts, bool two_d) {
  const auto p = from_vector(truth);
  const ConstitutiveOptions opts{kPredictionCap};
  bayes::FieldStats st;
  st.points = pts;
  const auto n = static_cast<Eigen::Index>(pts.size());
  st.mean_theta.resize(n);
  if (two_d) {
    st.mean_z.resize(n);
    st.mean_w.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = pts[static_cast<std::size_t>(i)];
    const auto sig = cauchy_stress(p, s, opts);
    st.mean_theta[i] = sig.sigma_theta;
    if (two_d) {
      st.mean_z[i] = sig.sigma_z;
      st.mean_w[i] = strain_energy(p, s, opts);
    }
  }
  st.sd_theta = Vector::Zero(n);
  if (two_d) st.sd_z = st.sd_w = Vector::Zero(n);
  return st;
}

std::uint64_t method_stream(const std::string& m) {
  if (m == "gan") return 3;
  if (m == "4ff") return 4;
  if (m == "gp") return 5;
  return 6;
}

}  // namespace

MethodResult run_method(const std::string& name, const ExperimentConfig& c, const funcprior::TrainedPrior* prior,
                        const MeasurementSet& data, std::uint64_t seed) {
  const bool two_d = c.prior.layout.kind == LayoutKind::Grid2d;
  const auto pts = evaluation_points(c);
  const double sd = c.effective_sd();
  MethodResult r;
  r.method = name;
  Rng rng = stream_rng(seed, method_stream(name));
  auto keep_chain = [&](const bayes::Chain& chain) {
    r.draws = chain.draws;
    r.log_density = chain.log_density;
    r.accept_rate = chain.accept_rate;
    r.step_size = chain.step_size;
  };
  if (name == "gan") {
    if (!prior) throw std::invalid_argument("the gan method needs a trained prior");
    const bayes::GanPosterior post(prior->generator, data, sd);
    const auto chain = bayes::hmc_sample([&](const Vector& x, Vector& g) { return post(x, g); },
                                         Vector::Zero(static_cast<Eigen::Index>(post.dim())), c.hmc, rng);
    r.stats = bayes::gan_field_stats(prior->generator, chain.draws, pts);
    keep_chain(chain);
    for (int k = 0; k < prior->generator.latent_dim(); ++k) r.draw_names.push_back("xi_" + std::to_string(k));
  } else if (name == "4ff") {
    const bayes::FourFiberPosterior post(data, c.prior.ranges, sd);
    const auto chain = bayes::hmc_sample([&](const Vector& x, Vector& g) { return post(x, g); },
                                         Vector::Zero(static_cast<Eigen::Index>(post.dim())), c.hmc, rng);
    r.stats = bayes::fourfiber_field_stats(chain.draws, c.prior.ranges, pts, kPredictionCap);
    keep_chain(chain);
    for (Eigen::Index i = 0; i < r.draws.rows(); ++i) {
      const auto p = bayes::latent_to_params(r.draws.row(i).transpose(), c.prior.ranges);
      for (Eigen::Index k = 0; k < r.draws.cols(); ++k) r.draws(i, k) = p[static_cast<std::size_t>(k)];
    }
    for (const auto& n : param_names()) r.draw_names.push_back(n);
  } else if (name == "gp") {
    auto g = c.gp;
    g.noise_variance = data.noise_scale * data.noise_scale;
    g.seed = rng();
    r.stats = baselines::gp_field_stats(data, pts, two_d, g);
  } else if (name == "nlreg") {
    baselines::FitConfig f;
    f.starts = kFitStarts;
    f.seed = rng();
    r.fit = baselines::nonlinear_fit(data, c.prior.ranges, f);
    r.stats = baselines::fit_field_stats(*r.fit, pts, kPredictionCap);
  } else {
    throw std::invalid_argument("unknown method '" + name + "'");
  }
  return r;
}

CaseResult run_methods(const ExperimentConfig& c, const funcprior::TrainedPrior* prior, const MeasurementSet& data,
                       const ParamVector& truth, std::uint64_t seed) {
  const bool two_d = c.prior.layout.kind == LayoutKind::Grid2d;
  CaseResult out;
  out.case_id = c.case_id;
  out.variant = c.variant;
  out.seed = seed;
  out.measurements = data;
  out.truth = truth_field(truth, evaluation_points(c), two_d);
  out.training_samples = c.prior.samples;
  for (const auto& name : c.methods) {
    auto r = run_method(name, c, prior, data, seed);
    r.err_theta = relative_error(r.stats.mean_theta, out.truth.mean_theta);
    if (two_d && r.stats.has_z()) r.err_z = relative_error(r.stats.mean_z, out.truth.mean_z);
    out.methods.push_back(std::move(r));
  }
  return out;
}

CaseResult run_case1(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed) {
  const auto truth = truth_params(c);
  return run_methods(c, &prior, draw_measurements(c.measurements, truth, seed), truth, seed);
}

CaseResult run_case2(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed) {
  if (c.variant == "ood") throw std::invalid_argument("run_case2: use run_ood for the ood variant");
  return run_case1(c, prior, seed);
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& c, const funcprior::TrainedPrior& prior) {
  std::vector<SweepCell> cells;
  const auto seeds = c.seed_list();
  for (double noise : c.sweep_noise) {
    for (std::size_t points : c.sweep_points) {
      SweepCell cell{noise, points, {}};
      auto cc = c;
      cc.measurements.noise = noise;
      cc.measurements.count = points;
      for (auto s : seeds) {
        const auto r = run_case1(cc, prior, s);
        for (const auto& m : r.methods) cell.mean_error[m.method] += m.err_theta / static_cast<double>(seeds.size());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::set<std::string> methods;
  for (const auto& c : cells) {
    for (const auto& [k, v] : c.mean_error) methods.insert(k);
  }
  std::string s = "noise,points";
  for (const auto& m : methods) s += ",mean_err_" + m;
  s += '\n';
  for (const auto& c : cells) {
    s += format_double(c.noise) + ',' + std::to_string(c.points);
    for (const auto& m : methods) {
      const auto it = c.mean_error.find(m);
      s += ',' + (it == c.mean_error.end() ? std::string() : format_double(it->second));
    }
    s += '\n';
  }
  return s;
}

namespace {

void add_errors(CurveRow& row, const CaseResult& r) {
  for (const auto& m : r.methods) {
    row.errors[m.method + "_theta"] = m.err_theta;
    if (m.err_z) row.errors[m.method + "_z"] = *m.err_z;
  }
}

std::string region_label(const StretchRegion& r) {
  return "[" + format_double(r.theta_lo) + "," + format_double(r.theta_hi) + "]x[" + format_double(r.z_lo) + "," +
         format_double(r.z_hi) + "]";
}

}  // namespace

std::vector<CurveRow> run_ood(const ExperimentConfig& c, const funcprior::TrainedPrior& prior, std::uint64_t seed) {
  std::vector<CurveRow> rows;
  for (double mu : c.ood_mu) {
    auto truth = truth_params(c);
    truth[0] = mu;
    const auto r = run_methods(c, &prior, draw_measurements(c.measurements, truth, seed), truth, seed);
    CurveRow row{format_double(mu), mu, {}};
    add_errors(row, r);
    rows.push_back(std::move(row));
  }
  return rows;
}

double monotonicity_violation(const bayes::FieldStats& stats, std::size_t n_theta) {
  const auto n = static_cast<std::size_t>(stats.mean_theta.size());
  if (n_theta < 2 || n % n_theta != 0) throw std::invalid_argument("monotonicity_violation: not a grid");
  std::size_t bad = 0, pairs = 0;
  for (std::size_t row = 0; row < n / n_theta; ++row) {
    for (std::size_t i = 0; i + 1 < n_theta; ++i) {
      const auto a = static_cast<Eigen::Index>(row * n_theta + i);
      bad += stats.mean_theta[a + 1] < stats.mean_theta[a] ? 1 : 0;
      ++pairs;
    }
  }
  return static_cast<double>(bad) / static_cast<double>(pairs);
}

std::vector<CurveRow> run_appendix_b(const ExperimentConfig& c,
                                     const std::vector<const funcprior::TrainedPrior*>& priors, std::uint64_t seed) {
  if (priors.size() != c.train_sizes.size()) throw std::invalid_argument("run_appendix_b: one prior per size");
  const auto truth = truth_params(c);
  const auto data = draw_measurements(c.measurements, truth, seed);
  std::vector<CurveRow> rows;
  for (std::size_t k = 0; k < priors.size(); ++k) {
    auto cc = c;
    cc.prior.samples = c.train_sizes[k];
    const auto r = run_methods(cc, priors[k], data, truth, seed);
    CurveRow row{std::to_string(c.train_sizes[k]), static_cast<double>(c.train_sizes[k]), {}};
    add_errors(row, r);
    for (const auto& m : r.methods) {
      row.errors[m.method + "_theta_monotonicity_violation"] =
          monotonicity_violation(m.stats, SensorLayout::default_grid().n_theta);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CurveRow> run_appendix_c(const ExperimentConfig& c, const funcprior::TrainedPrior& prior,
                                     std::uint64_t seed) {
  const auto truth = truth_params(c);
  std::vector<CurveRow> rows;
  for (std::size_t k = 0; k < c.regions.size(); ++k) {
    auto cc = c;
    cc.measurements.region = c.regions[k];
    const auto r = run_methods(cc, &prior, draw_measurements(cc.measurements, truth, seed), truth, seed);
    CurveRow row{region_label(c.regions[k]), static_cast<double>(k), {}};
    add_errors(row, r);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string curve_csv(const std::string& first_column, const std::vector<CurveRow>& rows) {
  std::set<std::string> keys;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.errors) keys.insert(k);
  }
  std::string s = first_column;
  for (const auto& k : keys) s += ',' + k;
  s += '\n';
  for (const auto& r : rows) {
    s += r.label.find(',') == std::string::npos ? r.label : '"' + r.label + '"';
    for (const auto& k : keys) {
      const auto it = r.errors.find(k);
      s += ',' + (it == r.errors.end() ? std::string() : format_double(it->second));
    }
    s += '\n';
  }
  return s;
}

// --- artifacts ----------------------------------------------------------------

std::string error_report_json(const CaseResult& r) {
  json j;
  j["case"] = r.case_id;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["unit"] = "0.1MPa";
  j["data"] = {{"measurement_points", r.measurements.points.size()},
               {"observations", r.measurements.observation_count()},
               {"noise_scale", r.measurements.noise_scale},
               {"training_samples", r.training_samples}};
  json errors = json::object(), diag = json::object();
  for (const auto& m : r.methods) {
    json e = {{"sigma_theta", m.err_theta}};
    if (m.err_z) e["sigma_z"] = *m.err_z;
    errors[m.method] = e;
    json d = json::object();
    d["mean_sd_sigma_theta"] = m.stats.sd_theta.size() ? m.stats.sd_theta.mean() : 0.0;
    if (m.stats.has_z()) d["mean_sd_sigma_z"] = m.stats.sd_z.mean();
    if (m.accept_rate) d["accept_rate"] = *m.accept_rate;
    if (m.step_size) d["step_size"] = *m.step_size;
    diag[m.method] = d;
  }
  j["errors"] = errors;
  j["diagnostics"] = diag;
  return j.dump(2) + "\n";
}

void write_case(const CaseResult& r, const fs::path& dir) {
  write_file_atomic(dir / "error_report.json", error_report_json(r));
  write_file_atomic(dir / "measurements.csv", measurements_csv(r.measurements));
  write_file_atomic(dir / "truth.csv", bayes::stats_csv(r.truth));
  for (const auto& m : r.methods) write_file_atomic(dir / (m.method + "_stats.csv"), bayes::stats_csv(m.stats));
}

IngestResult ingest_measurements(const fs::path& path, double noise_scale, const StretchRegion& domain) {
  if (!(noise_scale > 0.0)) throw std::invalid_argument("ingest: the likelihood SD must be given and positive");
  IngestResult r;
  r.data = read_measurements_csv(path, noise_scale);
  if (r.data.points.empty()) throw FormatError("ingest: " + path.string() + " contains no measurements");
  for (std::size_t i = 0; i < r.data.points.size(); ++i) {
    const auto& s = r.data.points[i].stretch;
    if (!domain.contains(s)) {
      r.warnings.push_back("row " + std::to_string(i + 1) + ": stretch (" + format_double(s.lambda_theta) + ", " +
                           format_double(s.lambda_z) + ") lies outside the prior domain " + region_label(domain));
    }
  }
  return r;
}

// --- orchestration ------------------------------------------------------------

namespace {

std::vector<CurveRow> mean_rows(const std::vector<std::vector<CurveRow>>& per_seed) {
  std::vector<CurveRow> mean = per_seed.front();
  for (auto& row : mean) {
    for (auto& [k, v] : row.errors) v = 0.0;
  }
  for (const auto& rows : per_seed) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& [k, v] : rows[i].errors) mean[i].errors[k] += v / static_cast<double>(per_seed.size());
    }
  }
  return mean;
}

std::string seed_dir(std::uint64_t s) { return "seed-" + std::to_string(s); }

std::string summarize_cases(const std::vector<CaseResult>& results) {
  std::set<std::string> keys;
  for (const auto& r : results) {
    for (const auto& m : r.methods) {
      keys.insert(m.method + "_theta");
      if (m.err_z) keys.insert(m.method + "_z");
    }
  }
  std::string s = "seed";
  for (const auto& k : keys) s += ",err_" + k;
  s += '\n';
  for (const auto& r : results) {
    s += std::to_string(r.seed);
    for (const auto& k : keys) {
      std::string cell;
      for (const auto& m : r.methods) {
        if (k == m.method + "_theta") cell = format_double(m.err_theta);
        if (m.err_z && k == m.method + "_z") cell = format_double(*m.err_z);
      }
      s += ',' + cell;
    }
    s += '\n';
  }
  return s;
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg, const Log& log) {
  cfg.validate();
  ExperimentConfig c = cfg;
  if (c.prior_cache.empty()) c.prior_cache = c.out / "priors";
  write_file_atomic(c.out / "resolved_config.json", config_to_json(c));
  const auto seeds = c.seed_list();
  const bool needs_prior = std::find(c.methods.begin(), c.methods.end(), "gan") != c.methods.end();

  if (c.case_id == "appendix-b") {
    std::vector<funcprior::TrainedPrior> priors;
    for (auto n : c.train_sizes) {
      auto spec = c.prior;
      spec.samples = n;
      priors.push_back(obtain_prior(spec, c.prior_cache, log));
    }
    std::vector<const funcprior::TrainedPrior*> ptrs;
    for (const auto& p : priors) ptrs.push_back(&p);
    std::vector<std::vector<CurveRow>> all;
    for (auto s : seeds) {
      all.push_back(run_appendix_b(c, ptrs, s));
      write_file_atomic(c.out / seed_dir(s) / "appendix_b.csv", curve_csv("training_samples", all.back()));
    }
    const auto csv = curve_csv("training_samples", mean_rows(all));
    write_file_atomic(c.out / "appendix_b.csv", csv);
    return csv;
  }

  std::optional<funcprior::TrainedPrior> prior;
  if (needs_prior) {
    prior = obtain_prior(c.prior, c.prior_cache, log);
    write_file_atomic(c.out / "loss_history.csv", funcprior::loss_history_csv(prior->history));
  }
  const funcprior::TrainedPrior* pp = prior ? &*prior : nullptr;

  if (c.case_id == "sweep") {
    if (!pp) throw std::invalid_argument("sweep needs the gan method");
    const auto csv = sweep_csv(run_sweep(c, *pp));
    write_file_atomic(c.out / "sweep.csv", csv);
    return csv;
  }
  if (c.case_id == "appendix-c" || (c.case_id == "case2" && c.variant == "ood")) {
    const bool ood = c.case_id == "case2";
    const std::string name = ood ? "ood.csv" : "appendix_c.csv";
    const std::string col = ood ? "mu_kpa" : "region";
    std::vector<std::vector<CurveRow>> all;
    for (auto s : seeds) {
      all.push_back(ood ? run_ood(c, *pp, s) : run_appendix_c(c, *pp, s));
      write_file_atomic(c.out / seed_dir(s) / name, curve_csv(col, all.back()));
    }
    const auto csv = curve_csv(col, mean_rows(all));
    write_file_atomic(c.out / name, csv);
    return csv;
  }
  std::vector<CaseResult> results;
  for (auto s : seeds) {
    say(log, "seed " + std::to_string(s));
    const auto truth = truth_params(c);
    results.push_back(run_methods(c, pp, draw_measurements(c.measurements, truth, s), truth, s));
    write_case(results.back(), c.out / seed_dir(s));
  }
  const auto csv = summarize_cases(results);
  write_file_atomic(c.out / "summary.csv", csv);
  return csv;
}

}  // namespace fprior::harness

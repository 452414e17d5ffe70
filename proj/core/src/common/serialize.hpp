#pragma once

// nlohmann/json conversions for core value types. Private to the library.

#include <json.hpp>

#include "fprior/funcprior.hpp"
#include "fprior/synthgen.hpp"

namespace fprior {

inline nlohmann::json layout_to_json(const SensorLayout& l) {
  return {{"kind", l.kind == LayoutKind::Line1d ? "line1d" : "grid2d"},
          {"n_theta", l.n_theta},
          {"n_z", l.n_z},
          {"theta_range", {l.theta_lo, l.theta_hi}},
          {"z_range", {l.z_lo, l.z_hi}}};
}

inline SensorLayout layout_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  const auto tr = j.at("theta_range");
  const auto zr = j.at("z_range");
  if (kind == "line1d") {
    return SensorLayout::line(tr.at(0), tr.at(1), j.at("n_theta"), zr.at(0).get<double>());
  }
  if (kind == "grid2d") {
    const double lo = tr.at(0), hi = tr.at(1);
    if (zr.at(0).get<double>() != lo || zr.at(1).get<double>() != hi) {
      throw FormatError("grid2d layouts must use the same range on both axes");
    }
    return SensorLayout::grid(lo, hi, j.at("n_theta"), j.at("n_z"));
  }
  throw FormatError("unknown layout kind '" + kind + "'");
}

inline nlohmann::json ranges_to_json(const ParamRanges& r) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    j[param_names()[i]] = {r.bounds[i].lower, r.bounds[i].upper};
  }
  return j;
}

inline ParamRanges ranges_from_json(const nlohmann::json& j) {
  ParamRanges r;
  for (std::size_t i = 0; i < kNumFreeParams; ++i) {
    const auto& b = j.at(param_names()[i]);
    r.bounds[i] = {b.at(0).get<double>(), b.at(1).get<double>()};
  }
  return r;
}

inline nlohmann::json params_to_json(const FourFiberParams& p) {
  nlohmann::json j = nlohmann::json::object();
  const auto v = to_vector(p);
  for (std::size_t i = 0; i < kNumFreeParams; ++i) j[param_names()[i]] = v[i];
  return j;
}

inline FourFiberParams params_from_json(const nlohmann::json& j) {
  ParamVector v{};
  for (std::size_t i = 0; i < kNumFreeParams; ++i) v[i] = j.at(param_names()[i]).get<double>();
  return from_vector(v);
}

inline nlohmann::json shape_to_json(const funcprior::NetworkShape& s) {
  return {{"latent_dim", s.latent_dim},
          {"coefficients", s.coefficients},
          {"branch_hidden", s.branch_hidden},
          {"trunk_hidden", s.trunk_hidden},
          {"disc_hidden", s.disc_hidden}};
}

inline funcprior::NetworkShape shape_from_json(const nlohmann::json& j, funcprior::GeneratorMode mode) {
  auto s = funcprior::NetworkShape::defaults(mode);
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.coefficients = j.value("coefficients", s.coefficients);
  s.branch_hidden = j.value("branch_hidden", s.branch_hidden);
  s.trunk_hidden = j.value("trunk_hidden", s.trunk_hidden);
  s.disc_hidden = j.value("disc_hidden", s.disc_hidden);
  return s;
}

inline nlohmann::json gan_config_to_json(const funcprior::GanConfig& c) {
  return {{"mode", funcprior::to_string(c.mode)},
          {"shape", shape_to_json(c.shape)},
          {"iterations", c.iterations},
          {"n_critic", c.n_critic},
          {"batch", c.batch},
          {"beta_reg", c.beta_reg},
          {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline funcprior::GanConfig gan_config_from_json(const nlohmann::json& j) {
  funcprior::GanConfig c;
  if (j.contains("mode")) c.mode = funcprior::parse_generator_mode(j.at("mode").get<std::string>());
  c.shape = j.contains("shape") ? shape_from_json(j.at("shape"), c.mode) : funcprior::NetworkShape::defaults(c.mode);
  c.iterations = j.value("iterations", c.iterations);
  c.n_critic = j.value("n_critic", c.n_critic);
  c.batch = j.value("batch", c.batch);
  c.beta_reg = j.value("beta_reg", c.beta_reg);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace fprior

#include "fprior/funcprior.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "../common/serialize.hpp"
#include "fprior/diffnet/checkpoint.hpp"
#include "fprior/io.hpp"

namespace fprior::funcprior {

using diffnet::Index;

std::string to_string(GeneratorMode m) {
  switch (m) {
    case GeneratorMode::Direct1d: return "direct-1d";
    case GeneratorMode::Direct2d: return "direct-2d";
    case GeneratorMode::Energy2d: return "energy-2d";
  }
  return "direct-1d";
}

GeneratorMode parse_generator_mode(const std::string& s) {
  if (s == "direct-1d") return GeneratorMode::Direct1d;
  if (s == "direct-2d") return GeneratorMode::Direct2d;
  if (s == "energy-2d") return GeneratorMode::Energy2d;
  throw std::invalid_argument("unknown generator mode '" + s + "' (expected direct-1d|direct-2d|energy-2d)");
}

bool is_2d(GeneratorMode m) { return m != GeneratorMode::Direct1d; }

NetworkShape NetworkShape::defaults(GeneratorMode m) {
  NetworkShape s;
  if (is_2d(m)) {
    s.latent_dim = 100;
    s.disc_hidden = {250, 250, 250};
  }
  return s;
}

void NetworkShape::validate(GeneratorMode m) const {
  if (latent_dim < 1 || coefficients < 1) throw std::invalid_argument("NetworkShape: widths must be positive");
  if (m == GeneratorMode::Direct2d && coefficients < 2) {
    throw std::invalid_argument("NetworkShape: direct-2d needs at least two coefficients");
  }
}

std::vector<Var> DeepOnetGenerator::parameters() const {
  auto p = branch.parameters();
  for (auto& t : trunk.parameters()) p.push_back(t);
  return p;
}

void DeepOnetGenerator::set_requires_grad(bool on) {
  branch.set_requires_grad(on);
  trunk.set_requires_grad(on);
}

namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

DeepOnetGenerator make_generator(GeneratorMode mode, const NetworkShape& shape, Rng& rng) {
  shape.validate(mode);
  DeepOnetGenerator g;
  g.mode = mode;
  g.branch = DenseNet(chain(shape.latent_dim, shape.branch_hidden, shape.coefficients), rng);
  g.trunk = DenseNet(chain(is_2d(mode) ? 2 : 1, shape.trunk_hidden, shape.coefficients), rng);
  return g;
}

DenseNet make_discriminator(std::size_t input_width, const NetworkShape& shape, Rng& rng) {
  return DenseNet(chain(static_cast<int>(input_width), shape.disc_hidden, 1), rng);
}

Matrix trunk_inputs(GeneratorMode mode, std::span<const BiaxialStretch> points) {
  const auto n = static_cast<Index>(points.size());
  Matrix x(n, is_2d(mode) ? 2 : 1);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = points[static_cast<std::size_t>(i)].lambda_theta;
    if (is_2d(mode)) x(i, 1) = points[static_cast<std::size_t>(i)].lambda_z;
  }
  return x;
}

TrunkFeatures trunk_features(const DeepOnetGenerator& gen, std::span<const BiaxialStretch> points) {
  if (points.empty()) throw std::invalid_argument("trunk_features: no points");
  TrunkFeatures tf;
  tf.mode = gen.mode;
  const Matrix x = trunk_inputs(gen.mode, points);
  tf.lambda_theta.resize(x.rows());
  tf.lambda_z.resize(x.rows());
  for (std::size_t i = 0; i < points.size(); ++i) {
    tf.lambda_theta[static_cast<Index>(i)] = points[i].lambda_theta;
    tf.lambda_z[static_cast<Index>(i)] = points[i].lambda_z;
  }
  if (gen.mode == GeneratorMode::Energy2d) {
    auto vt = gen.trunk.evaluate_with_tangents(x, {0, 1});
    tf.t = std::move(vt.value);
    tf.dt_theta = std::move(vt.tangents[0]);
    tf.dt_z = std::move(vt.tangents[1]);
  } else {
    tf.t = gen.trunk.evaluate(x);
  }
  return tf;
}

GeneratedFields fields_from_coefficients(const Matrix& b, const TrunkFeatures& tf) {
  if (b.cols() != tf.t.cols()) throw diffnet::ShapeError("fields_from_coefficients: coefficient width mismatch");
  GeneratedFields f;
  switch (tf.mode) {
    case GeneratorMode::Direct1d:
      f.sigma_theta = (b * tf.t.transpose()).array().exp() - 1.0;
      break;
    case GeneratorMode::Direct2d: {
      const Index h = b.cols() / 2, rest = b.cols() - h;
      f.sigma_theta = (b.leftCols(h) * tf.t.leftCols(h).transpose()).array().exp() - 1.0;
      f.sigma_z = (b.rightCols(rest) * tf.t.rightCols(rest).transpose()).array().exp() - 1.0;
      break;
    }
    case GeneratorMode::Energy2d: {
      const Eigen::ArrayXXd e = (b * tf.t.transpose()).array().exp();
      f.energy = e - 1.0;
      f.sigma_theta = e * (b * tf.dt_theta.transpose()).array();
      f.sigma_z = e * (b * tf.dt_z.transpose()).array();
      f.sigma_theta.array().rowwise() *= tf.lambda_theta.transpose().array();
      f.sigma_z.array().rowwise() *= tf.lambda_z.transpose().array();
      break;
    }
  }
  return f;
}

GeneratedFields generate(const DeepOnetGenerator& gen, const Matrix& xi, std::span<const BiaxialStretch> points) {
  if (xi.cols() != gen.latent_dim()) {
    throw diffnet::ShapeError("generate: latent has " + std::to_string(xi.cols()) + " entries, expected " +
                              std::to_string(gen.latent_dim()));
  }
  return fields_from_coefficients(gen.branch.evaluate(xi), trunk_features(gen, points));
}

Matrix representation(const GeneratedFields& f, GeneratorMode mode) {
  if (!is_2d(mode)) return f.sigma_theta;
  Matrix r(f.sigma_theta.rows(), f.sigma_theta.cols() + f.sigma_z.cols());
  r << f.sigma_theta, f.sigma_z;
  return r;
}

namespace {

void check_layout(GeneratorMode mode, const SensorLayout& layout) {
  const bool line = layout.kind == LayoutKind::Line1d;
  if (line == is_2d(mode)) {
    throw std::invalid_argument("generator mode " + to_string(mode) + " does not match a " +
                                (line ? "line" : "grid") + " layout");
  }
}

Matrix rowwise_constant(const std::vector<BiaxialStretch>& points, Index rows, bool theta) {
  Matrix m(rows, static_cast<Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.col(static_cast<Index>(i)).setConstant(theta ? points[i].lambda_theta : points[i].lambda_z);
  }
  return m;
}

}  // namespace

Var generate_representation(const DeepOnetGenerator& gen, const Matrix& xi, const SensorLayout& layout) {
  check_layout(gen.mode, layout);
  if (xi.cols() != gen.latent_dim()) throw diffnet::ShapeError("generate_representation: latent width mismatch");
  const Var b = gen.branch.forward(Var::constant(xi));
  const Var x = Var::constant(trunk_inputs(gen.mode, layout.points));
  switch (gen.mode) {
    case GeneratorMode::Direct1d: {
      const Var t = gen.trunk.forward(x);
      return exp(matmul_nt(b, t)) - 1.0;
    }
    case GeneratorMode::Direct2d: {
      const Var t = gen.trunk.forward(x);
      const Index h = gen.coefficients() / 2, rest = gen.coefficients() - h;
      const Var st = exp(matmul_nt(slice_cols(b, 0, h), slice_cols(t, 0, h))) - 1.0;
      const Var sz = exp(matmul_nt(slice_cols(b, h, rest), slice_cols(t, h, rest))) - 1.0;
      return concat_cols(st, sz);
    }
    case GeneratorMode::Energy2d: {
      const auto ft = gen.trunk.forward_with_tangents(x, {0, 1});
      const Var e = exp(matmul_nt(b, ft.value));
      const Var lt = Var::constant(rowwise_constant(layout.points, xi.rows(), true));
      const Var lz = Var::constant(rowwise_constant(layout.points, xi.rows(), false));
      const Var st = hadamard(hadamard(e, matmul_nt(b, ft.tangents[0])), lt);
      const Var sz = hadamard(hadamard(e, matmul_nt(b, ft.tangents[1])), lz);
      return concat_cols(st, sz);
    }
  }
  throw std::logic_error("unreachable generator mode");
}

double discriminator_score(const DenseNet& disc, const Eigen::VectorXd& rep) {
  if (rep.size() != disc.input_width()) {
    throw diffnet::ShapeError("discriminator_score: representation has " + std::to_string(rep.size()) +
                              " entries, expected " + std::to_string(disc.input_width()));
  }
  return disc.evaluate(rep.transpose())(0, 0);
}

Var generator_loss(const DeepOnetGenerator& gen, const DenseNet& disc, const Matrix& xi, const SensorLayout& layout) {
  return -mean(disc.forward(generate_representation(gen, xi, layout)));
}

DiscriminatorLoss discriminator_loss(const DenseNet& disc, const Matrix& fake, const Matrix& real,
                                     const Eigen::VectorXd& u, double beta_reg) {
  if (fake.rows() != real.rows() || fake.cols() != real.cols() || u.size() != real.rows()) {
    throw diffnet::ShapeError("discriminator_loss: real and fake batches differ in shape");
  }
  if (beta_reg < 0.0) throw std::invalid_argument("discriminator_loss: beta_reg must be >= 0");
  const Var w = mean(disc.forward(Var::constant(fake))) - mean(disc.forward(Var::constant(real)));
  const Matrix x_hat = (real.array().colwise() * u.array() + fake.array().colwise() * (1.0 - u.array())).matrix();
  const Var g = diffnet::input_gradient(disc, Var::parameter(x_hat), true);
  // the tiny offset keeps sqrt differentiable at a zero gradient
  const Var norms = sqrt(sum_cols(square(g)) + 1e-12);
  const Var penalty = mean(square(norms - 1.0));
  return {w + penalty * beta_reg, w.item(), penalty.item()};
}

DiscriminatorLoss discriminator_loss(const DeepOnetGenerator& gen, const DenseNet& disc, const Matrix& xi,
                                     const Matrix& real, const SensorLayout& layout, double beta_reg, Rng& rng) {
  check_layout(gen.mode, layout);
  const Matrix fake = representation(generate(gen, xi, layout.points), gen.mode);
  Eigen::VectorXd u(real.rows());
  for (Index i = 0; i < u.size(); ++i) u[i] = uniform01(rng);
  return discriminator_loss(disc, fake, real, u, beta_reg);
}

void GanConfig::validate() const {
  shape.validate(mode);
  if (iterations < 1) throw std::invalid_argument("GanConfig: iterations must be >= 1");
  if (n_critic < 1) throw std::invalid_argument("GanConfig: n_critic must be >= 1");
  if (batch < 1) throw std::invalid_argument("GanConfig: batch must be >= 1");
  if (beta_reg < 0.0) throw std::invalid_argument("GanConfig: beta_reg must be >= 0");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("GanConfig: learning rate must be positive");
}

TrainingDiverged::TrainingDiverged(long epoch, std::string component)
    : std::runtime_error("training diverged: non-finite " + component + " loss at epoch " + std::to_string(epoch)),
      epoch_(epoch),
      component_(std::move(component)) {}

namespace {

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  }
  return m;
}

Matrix sample_rows(const RowMatrix& data, Index count, Rng& rng) {
  std::uniform_int_distribution<Index> pick(0, data.rows() - 1);
  Matrix out(count, data.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = data.row(pick(rng));
  return out;
}

}  // namespace

TrainedPrior train(const PriorDataset& data, const GanConfig& config, const TrainProgress& progress) {
  config.validate();
  check_layout(config.mode, data.layout);
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (static_cast<std::size_t>(data.samples.cols()) != data.layout.representation_size()) {
    throw std::invalid_argument("train: dataset rows do not match the layout");
  }

  Rng rng(mix_seed(config.seed));
  TrainedPrior out;
  out.layout = data.layout;
  out.config = config;
  out.dataset_checksum = data.checksum();
  out.generator = make_generator(config.mode, config.shape, rng);
  out.discriminator = make_discriminator(data.layout.representation_size(), config.shape, rng);
  auto& gen = out.generator;
  auto& disc = out.discriminator;

  diffnet::Adam opt_g(config.adam, gen.parameters());
  diffnet::Adam opt_d(config.adam, disc.parameters());
  const Index batch = config.batch;
  out.history.reserve(static_cast<std::size_t>(config.iterations));

  for (long epoch = 1; epoch <= config.iterations; ++epoch) {
    LossRecord rec{epoch, 0.0, 0.0, 0.0};
    for (int c = 0; c < config.n_critic; ++c) {
      const Matrix real = sample_rows(data.samples, batch, rng);
      const Matrix xi = normal_matrix(batch, gen.latent_dim(), rng);
      const auto loss = discriminator_loss(gen, disc, xi, real, data.layout, config.beta_reg, rng);
      const double total = loss.total.item();
      if (!std::isfinite(total)) throw TrainingDiverged(epoch, "discriminator");
      try {
        opt_d.step(diffnet::grad_values(loss.total, disc.parameters()));
      } catch (const diffnet::NonFiniteGradient&) {
        throw TrainingDiverged(epoch, "discriminator");
      }
      rec.loss_d = total;
      rec.penalty = loss.penalty;
    }
    const Matrix xi = normal_matrix(batch, gen.latent_dim(), rng);
    const Var lg = generator_loss(gen, disc, xi, data.layout);
    rec.loss_g = lg.item();
    if (!std::isfinite(rec.loss_g)) throw TrainingDiverged(epoch, "generator");
    try {
      opt_g.step(diffnet::grad_values(lg, gen.parameters()));
    } catch (const diffnet::NonFiniteGradient&) {
      throw TrainingDiverged(epoch, "generator");
    }
    out.history.push_back(rec);
    if (progress) progress(rec);
  }
  return out;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::string s = "epoch,loss_g,loss_d,penalty\n";
  for (const auto& r : history) {
    s += std::to_string(r.epoch) + ',' + format_double(r.loss_g) + ',' + format_double(r.loss_d) + ',' +
         format_double(r.penalty) + '\n';
  }
  return s;
}

std::vector<LossRecord> parse_loss_history(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,loss_g,loss_d,penalty") {
    throw FormatError("loss history: unexpected header");
  }
  std::vector<LossRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    char* end = nullptr;
    const char* c = line.c_str();
    r.epoch = std::strtol(c, &end, 10);
    double* fields[] = {&r.loss_g, &r.loss_d, &r.penalty};
    for (double* f : fields) {
      if (*end != ',') throw FormatError("loss history: malformed row '" + line + "'");
      *f = std::strtod(end + 1, &end);
    }
    if (*end != '\0') throw FormatError("loss history: malformed row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

namespace {
constexpr const char* kManifestFormat = "fprior.prior";
constexpr int kManifestVersion = 1;
}  // namespace

void save_prior(const TrainedPrior& prior, const std::filesystem::path& dir) {
  diffnet::save_checkpoint(prior.generator.branch, dir / "branch.json");
  diffnet::save_checkpoint(prior.generator.trunk, dir / "trunk.json");
  diffnet::save_checkpoint(prior.discriminator, dir / "discriminator.json");
  nlohmann::json m;
  m["format"] = kManifestFormat;
  m["version"] = kManifestVersion;
  m["mode"] = to_string(prior.generator.mode);
  m["layout"] = layout_to_json(prior.layout);
  m["config"] = gan_config_to_json(prior.config);
  m["dataset_checksum"] = hex64(prior.dataset_checksum);
  m["networks"] = {
      {"branch", {{"file", "branch.json"}, {"checksum", diffnet::checkpoint_checksum(prior.generator.branch)}}},
      {"trunk", {{"file", "trunk.json"}, {"checksum", diffnet::checkpoint_checksum(prior.generator.trunk)}}},
      {"discriminator",
       {{"file", "discriminator.json"}, {"checksum", diffnet::checkpoint_checksum(prior.discriminator)}}}};
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
  write_file_atomic(dir / "loss_history.csv", loss_history_csv(prior.history));
}

TrainedPrior load_prior(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw diffnet::CheckpointError("prior manifest is not valid JSON: " + std::string(e.what()));
  }
  if (m.value("format", "") != kManifestFormat || m.value("version", 0) != kManifestVersion) {
    throw diffnet::CheckpointError("not a prior manifest: " + (dir / "manifest.json").string());
  }
  try {
    TrainedPrior p;
    p.config = gan_config_from_json(m.at("config"));
    p.layout = layout_from_json(m.at("layout"));
    p.generator.mode = parse_generator_mode(m.at("mode").get<std::string>());
    p.dataset_checksum = std::stoull(m.at("dataset_checksum").get<std::string>(), nullptr, 16);
    auto load = [&](const char* key) {
      const auto& e = m.at("networks").at(key);
      DenseNet net = diffnet::load_checkpoint(dir / e.at("file").get<std::string>());
      if (diffnet::checkpoint_checksum(net) != e.at("checksum").get<std::string>()) {
        throw diffnet::CheckpointError(std::string("manifest checksum mismatch for ") + key);
      }
      return net;
    };
    p.generator.branch = load("branch");
    p.generator.trunk = load("trunk");
    p.discriminator = load("discriminator");
    if (std::filesystem::exists(dir / "loss_history.csv")) p.history = parse_loss_history(read_file(dir / "loss_history.csv"));
    if (p.generator.branch.output_width() != p.generator.trunk.output_width() ||
        p.generator.trunk.input_width() != (is_2d(p.generator.mode) ? 2 : 1) ||
        static_cast<std::size_t>(p.discriminator.input_width()) != p.layout.representation_size()) {
      throw diffnet::CheckpointError("prior networks are inconsistent with the manifest");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw diffnet::CheckpointError("malformed prior manifest: " + std::string(e.what()));
  }
}

}  // namespace fprior::funcprior

#pragma once

// Functional prior: a DeepONet generator G(lambda, xi) = exp(b(xi) . t(lambda)) - 1
// trained adversarially (WGAN-GP) against a dense discriminator on stress
// representations from a PriorDataset.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fprior/diffnet/adam.hpp"
#include "fprior/diffnet/dense_net.hpp"
#include "fprior/synthgen.hpp"

namespace fprior::funcprior {

using diffnet::DenseNet;
using diffnet::Matrix;
using diffnet::Var;

/// direct-1d: sigma_theta along a line, trunk input lambda_theta.
/// direct-2d: coefficient halves give sigma_theta and sigma_z.
/// energy-2d: the network predicts W; stresses follow from dW/dlambda.
enum class GeneratorMode { Direct1d, Direct2d, Energy2d };

std::string to_string(GeneratorMode m);
GeneratorMode parse_generator_mode(const std::string& s);
bool is_2d(GeneratorMode m);

struct NetworkShape {
  int latent_dim = 50;
  int coefficients = 50;
  std::vector<int> branch_hidden{64, 64, 64};
  std::vector<int> trunk_hidden{64, 64, 64};
  std::vector<int> disc_hidden{64, 64, 64};

  /// Reference architectures: [50|64^3|50] branch, [1|64^3|50] trunk and
  /// [15|64^3|1] discriminator for lines; [100|64^3|50], [2|64^3|50] and
  /// [1250|250^3|1] for grids.
  static NetworkShape defaults(GeneratorMode m);
  void validate(GeneratorMode m) const;
  bool operator==(const NetworkShape&) const = default;
};

struct DeepOnetGenerator {
  GeneratorMode mode = GeneratorMode::Direct1d;
  DenseNet branch;
  DenseNet trunk;

  int latent_dim() const { return branch.input_width(); }
  int coefficients() const { return branch.output_width(); }
  std::vector<Var> parameters() const;
  void set_requires_grad(bool on);
};

DeepOnetGenerator make_generator(GeneratorMode mode, const NetworkShape& shape, Rng& rng);
DenseNet make_discriminator(std::size_t input_width, const NetworkShape& shape, Rng& rng);

/// Trunk input rows: lambda_theta (lines) or (lambda_theta, lambda_z).
Matrix trunk_inputs(GeneratorMode mode, std::span<const BiaxialStretch> points);

/// Fields at the queried points, one row per latent sample. sigma_z and
/// energy are empty when the mode does not produce them.
struct GeneratedFields {
  Matrix sigma_theta;
  Matrix sigma_z;
  Matrix energy;
};

/// Trunk features at fixed points, reusable across many latent samples.
struct TrunkFeatures {
  GeneratorMode mode = GeneratorMode::Direct1d;
  Matrix t;        // n x p
  Matrix dt_theta;  // energy mode: d t / d lambda_theta
  Matrix dt_z;      // energy mode: d t / d lambda_z
  Eigen::VectorXd lambda_theta;
  Eigen::VectorXd lambda_z;

  std::size_t size() const { return static_cast<std::size_t>(t.rows()); }
};

TrunkFeatures trunk_features(const DeepOnetGenerator& gen, std::span<const BiaxialStretch> points);

/// Fields from branch outputs b (batch x p) and precomputed trunk features.
GeneratedFields fields_from_coefficients(const Matrix& b, const TrunkFeatures& tf);

/// Graph-free generation; xi is (batch x latent_dim).
GeneratedFields generate(const DeepOnetGenerator& gen, const Matrix& xi, std::span<const BiaxialStretch> points);

/// Discriminator input rows: sigma_theta for lines, [sigma_theta, sigma_z] for grids.
Matrix representation(const GeneratedFields& f, GeneratorMode mode);

/// Recorded generation of the representation on a layout, differentiable
/// with respect to generator parameters.
Var generate_representation(const DeepOnetGenerator& gen, const Matrix& xi, const SensorLayout& layout);

double discriminator_score(const DenseNet& disc, const Eigen::VectorXd& rep);

/// -mean(D(G(xi))).
Var generator_loss(const DeepOnetGenerator& gen, const DenseNet& disc, const Matrix& xi,
                   const SensorLayout& layout);

struct DiscriminatorLoss {
  Var total;
  double wasserstein = 0.0;  // E[D(fake)] - E[D(real)]
  double penalty = 0.0;      // E[(|grad D(x_hat)| - 1)^2], before beta_reg
};

/// WGAN-GP critic loss. x_hat = u * real + (1 - u) * fake per row, u is (batch x 1).
DiscriminatorLoss discriminator_loss(const DenseNet& disc, const Matrix& fake, const Matrix& real,
                                     const Eigen::VectorXd& u, double beta_reg);
/// Draws u ~ U(0,1) per pair and generates the fake batch without a graph.
DiscriminatorLoss discriminator_loss(const DeepOnetGenerator& gen, const DenseNet& disc, const Matrix& xi,
                                     const Matrix& real, const SensorLayout& layout, double beta_reg, Rng& rng);

struct GanConfig {
  GeneratorMode mode = GeneratorMode::Direct1d;
  NetworkShape shape = NetworkShape::defaults(GeneratorMode::Direct1d);
  long iterations = 20000;  // generator updates
  int n_critic = 5;
  int batch = 50;
  double beta_reg = 0.1;
  diffnet::AdamConfig adam{};
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossRecord {
  long epoch = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double penalty = 0.0;
};

struct TrainedPrior {
  DeepOnetGenerator generator;
  DenseNet discriminator;
  SensorLayout layout;
  GanConfig config;
  std::uint64_t dataset_checksum = 0;
  std::vector<LossRecord> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(long epoch, std::string component);
  long epoch() const { return epoch_; }
  const std::string& component() const { return component_; }

 private:
  long epoch_;
  std::string component_;
};

/// Called after each generator update with the latest record.
using TrainProgress = std::function<void(const LossRecord&)>;

TrainedPrior train(const PriorDataset& data, const GanConfig& config, const TrainProgress& progress = {});

std::string loss_history_csv(const std::vector<LossRecord>& history);
std::vector<LossRecord> parse_loss_history(const std::string& text);

/// Writes branch.json, trunk.json, discriminator.json, manifest.json and
/// loss_history.csv into dir.
void save_prior(const TrainedPrior& prior, const std::filesystem::path& dir);
/// Loads the networks, manifest and, when present, the loss history.
TrainedPrior load_prior(const std::filesystem::path& dir);

}  // namespace fprior::funcprior

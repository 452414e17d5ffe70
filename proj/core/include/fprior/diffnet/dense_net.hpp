#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fprior/diffnet/autodiff.hpp"
#include "fprior/rng.hpp"

namespace fprior::diffnet {

enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Fully connected network: tanh on hidden layers, identity on the output.
/// Copies are deep; parameters are never shared between two DenseNet values.
class DenseNet {
 public:
  DenseNet() = default;
  /// Glorot-uniform weights, zero biases.
  DenseNet(std::vector<int> widths, Rng& rng);
  DenseNet(std::vector<int> widths, std::vector<Activation> activations, std::vector<Matrix> weights,
           std::vector<Matrix> biases);

  DenseNet(const DenseNet& other);
  DenseNet& operator=(const DenseNet& other);
  DenseNet(DenseNet&&) noexcept = default;
  DenseNet& operator=(DenseNet&&) noexcept = default;

  const std::vector<int>& widths() const { return widths_; }
  const std::vector<Activation>& activations() const { return activations_; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  /// x is (batch x input_width); returns (batch x output_width).
  Var forward(const Var& x) const;
  /// Graph-free evaluation.
  Matrix evaluate(const Matrix& x) const;

  struct WithTangents {
    Var value;
    std::vector<Var> tangents;  // d value / d x[:, k], one per direction
  };
  /// Forward mode with respect to selected input columns. Tangents are
  /// recorded ops, so parameter gradients flow through them.
  WithTangents forward_with_tangents(const Var& x, const std::vector<int>& directions) const;

  struct ValueWithTangents {
    Matrix value;
    std::vector<Matrix> tangents;
  };
  /// Graph-free counterpart of forward_with_tangents.
  ValueWithTangents evaluate_with_tangents(const Matrix& x, const std::vector<int>& directions) const;

  /// Graph-free vector-Jacobian product: rows of upstream are d loss / d output
  /// for the matching rows of x; returns d loss / d x.
  Matrix input_vjp(const Matrix& x, const Matrix& upstream) const;

  /// [W0, b0, W1, b1, ...]; weights are (in x out), biases (1 x out).
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;
  const Matrix& weight(std::size_t layer) const { return weights_[layer].value(); }
  const Matrix& bias(std::size_t layer) const { return biases_[layer].value(); }
  Matrix& weight(std::size_t layer) { return weights_[layer].mutable_value(); }
  Matrix& bias(std::size_t layer) { return biases_[layer].mutable_value(); }

  void set_requires_grad(bool on);

  Eigen::VectorXd flat_parameters() const;
  void set_flat_parameters(const Eigen::VectorXd& flat);

 private:
  void check_consistency() const;

  std::vector<int> widths_;
  std::vector<Activation> activations_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

/// Gradient of the (scalar-output) network with respect to its input, one row
/// per sample. With create_graph the result stays differentiable with respect
/// to the network parameters and to x.
Var input_gradient(const DenseNet& net, const Var& x, bool create_graph = true);

/// Gradient of a scalar loss with respect to each entry of params, as values.
std::vector<Matrix> grad_values(const Var& loss, const std::vector<Var>& params);

}  // namespace fprior::diffnet

#include "fprior/diffnet/dense_net.hpp"

#include <cmath>

namespace fprior::diffnet {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

DenseNet::DenseNet(std::vector<int> widths, Rng& rng) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("DenseNet needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l], out = widths_[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("DenseNet widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(in, out);
    for (Index j = 0; j < out; ++j) {
      for (Index i = 0; i < in; ++i) w(i, j) = u(rng);
    }
    weights_.push_back(Var::parameter(std::move(w)));
    biases_.push_back(Var::parameter(Matrix::Zero(1, out)));
    activations_.push_back(l + 2 == widths_.size() ? Activation::Identity : Activation::Tanh);
  }
}

DenseNet::DenseNet(std::vector<int> widths, std::vector<Activation> activations, std::vector<Matrix> weights,
                   std::vector<Matrix> biases)
    : widths_(std::move(widths)), activations_(std::move(activations)) {
  for (auto& w : weights) weights_.push_back(Var::parameter(std::move(w)));
  for (auto& b : biases) biases_.push_back(Var::parameter(std::move(b)));
  check_consistency();
}

DenseNet::DenseNet(const DenseNet& other) : widths_(other.widths_), activations_(other.activations_) {
  for (const auto& w : other.weights_) weights_.push_back(Var::parameter(w.value()));
  for (const auto& b : other.biases_) biases_.push_back(Var::parameter(b.value()));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l].set_requires_grad(other.weights_[l].requires_grad());
    biases_[l].set_requires_grad(other.biases_[l].requires_grad());
  }
}

DenseNet& DenseNet::operator=(const DenseNet& other) {
  if (this != &other) *this = DenseNet(other);
  return *this;
}

void DenseNet::check_consistency() const {
  const std::size_t layers = widths_.size() - 1;
  if (widths_.size() < 2 || weights_.size() != layers || biases_.size() != layers ||
      activations_.size() != layers) {
    throw ShapeError("DenseNet: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (weights_[l].rows() != widths_[l] || weights_[l].cols() != widths_[l + 1] || biases_[l].rows() != 1 ||
        biases_[l].cols() != widths_[l + 1]) {
      throw ShapeError("DenseNet: parameter shape mismatch at layer " + std::to_string(l));
    }
    if (!weights_[l].value().allFinite() || !biases_[l].value().allFinite()) {
      throw std::invalid_argument("DenseNet: non-finite parameter at layer " + std::to_string(l));
    }
  }
}

Var DenseNet::forward(const Var& x) const {
  if (x.cols() != input_width()) {
    throw ShapeError("DenseNet::forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_width()));
  }
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, weights_[l]), biases_[l]);
    if (activations_[l] == Activation::Tanh) h = tanh(h);
  }
  return h;
}

Matrix DenseNet::evaluate(const Matrix& x) const {
  if (x.cols() != input_width()) throw ShapeError("DenseNet::evaluate: input width mismatch");
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z(h.rows(), weights_[l].cols());
    z.noalias() = h * weights_[l].value();
    z.rowwise() += biases_[l].value().row(0);
    if (activations_[l] == Activation::Tanh) z = tanh_values(z);
    h = std::move(z);
  }
  return h;
}

DenseNet::WithTangents DenseNet::forward_with_tangents(const Var& x, const std::vector<int>& directions) const {
  if (x.cols() != input_width()) throw ShapeError("forward_with_tangents: input width mismatch");
  Var h = x;
  std::vector<Var> dh;
  for (int k : directions) {
    if (k < 0 || k >= input_width()) throw ShapeError("forward_with_tangents: bad direction");
    Matrix e = Matrix::Zero(x.rows(), x.cols());
    e.col(k).setOnes();
    dh.push_back(Var::constant(std::move(e)));
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, weights_[l]), biases_[l]);
    for (auto& d : dh) d = matmul(d, weights_[l]);
    if (activations_[l] == Activation::Tanh) {
      h = tanh(h);
      const Var slope = -square(h) + 1.0;
      for (auto& d : dh) d = hadamard(d, slope);
    }
  }
  return {h, dh};
}

DenseNet::ValueWithTangents DenseNet::evaluate_with_tangents(const Matrix& x,
                                                             const std::vector<int>& directions) const {
  if (x.cols() != input_width()) throw ShapeError("evaluate_with_tangents: input width mismatch");
  ValueWithTangents out;
  Matrix h = x;
  for (int k : directions) {
    if (k < 0 || k >= input_width()) throw ShapeError("evaluate_with_tangents: bad direction");
    Matrix e = Matrix::Zero(x.rows(), x.cols());
    e.col(k).setOnes();
    out.tangents.push_back(std::move(e));
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Matrix& w = weights_[l].value();
    Matrix z(h.rows(), w.cols());
    z.noalias() = h * w;
    z.rowwise() += biases_[l].value().row(0);
    for (auto& d : out.tangents) d = d * w;
    if (activations_[l] == Activation::Tanh) {
      z = tanh_values(z);
      const Eigen::ArrayXXd slope = 1.0 - z.array().square();
      for (auto& d : out.tangents) d.array() *= slope;
    }
    h = std::move(z);
  }
  out.value = std::move(h);
  return out;
}

Matrix DenseNet::input_vjp(const Matrix& x, const Matrix& upstream) const {
  if (x.cols() != input_width() || upstream.cols() != output_width() || upstream.rows() != x.rows()) {
    throw ShapeError("input_vjp: shape mismatch");
  }
  std::vector<Matrix> acts;  // post-activation output of each layer
  acts.reserve(weights_.size());
  const Matrix* h = &x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z(h->rows(), weights_[l].cols());
    z.noalias() = *h * weights_[l].value();
    z.rowwise() += biases_[l].value().row(0);
    if (activations_[l] == Activation::Tanh) z = tanh_values(z);
    acts.push_back(std::move(z));
    h = &acts.back();
  }
  Matrix g = upstream;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (activations_[l] == Activation::Tanh) g.array() *= 1.0 - acts[l].array().square();
    Matrix next(g.rows(), weights_[l].rows());
    next.noalias() = g * weights_[l].value().transpose();
    g = std::move(next);
  }
  return g;
}

std::vector<Var> DenseNet::parameters() const {
  std::vector<Var> p;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    p.push_back(weights_[l]);
    p.push_back(biases_[l]);
  }
  return p;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].value().size() + biases_[l].value().size());
  }
  return n;
}

void DenseNet::set_requires_grad(bool on) {
  for (auto& w : weights_) w.set_requires_grad(on);
  for (auto& b : biases_) b.set_requires_grad(on);
}

Eigen::VectorXd DenseNet::flat_parameters() const {
  Eigen::VectorXd flat(static_cast<Index>(parameter_count()));
  Index k = 0;
  for (const auto& p : parameters()) {
    flat.segment(k, p.value().size()) = p.value().reshaped();
    k += p.value().size();
  }
  return flat;
}

void DenseNet::set_flat_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Index>(parameter_count())) throw ShapeError("set_flat_parameters: size mismatch");
  Index k = 0;
  for (auto p : parameters()) {
    Matrix& m = p.mutable_value();
    m.reshaped() = flat.segment(k, m.size());
    k += m.size();
  }
}

Var input_gradient(const DenseNet& net, const Var& x, bool create_graph) {
  if (net.output_width() != 1) throw ShapeError("input_gradient: network output must be scalar");
  const Var xin = x.requires_grad() ? x : Var::parameter(x.value());
  const Var total = sum(net.forward(xin));
  return grad(total, std::vector<Var>{xin}, create_graph).front();
}

std::vector<Matrix> grad_values(const Var& loss, const std::vector<Var>& params) {
  auto g = grad(loss, params, false);
  std::vector<Matrix> out;
  out.reserve(g.size());
  for (auto& v : g) out.push_back(v.value());
  return out;
}

}  // namespace fprior::diffnet

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fprior/diffnet/adam.hpp"
#include "fprior/diffnet/checkpoint.hpp"
#include "fprior/diffnet/dense_net.hpp"
#include "fprior/io.hpp"

using namespace fprior;
using namespace fprior::diffnet;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) m(i, j) = 2.0 * uniform01(rng) - 1.0;
  }
  return m;
}

// Plain loops, no Eigen products: an independent forward pass.
std::vector<double> reference_forward(const DenseNet& net, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l);
    const Matrix& b = net.bias(l);
    std::vector<double> z(static_cast<std::size_t>(w.cols()));
    for (Index j = 0; j < w.cols(); ++j) {
      double acc = b(0, j);
      for (Index i = 0; i < w.rows(); ++i) acc += h[static_cast<std::size_t>(i)] * w(i, j);
      z[static_cast<std::size_t>(j)] = net.activations()[l] == Activation::Tanh ? std::tanh(acc) : acc;
    }
    h = std::move(z);
  }
  return h;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

Var scalar_loss_graph(const DenseNet& net, const Var& x) {
  const Var y = net.forward(x);
  return sum(square(y)) * 0.5 + sum(tanh(y));
}

double scalar_loss_value(const DenseNet& net, const Matrix& x) {
  const Matrix y = net.evaluate(x);
  return 0.5 * y.squaredNorm() + y.array().tanh().sum();
}

double penalty_value(const DenseNet& net, const Matrix& x) {
  // sum over rows of squared input-gradient norm, by central differences in x
  const double h = 1e-5;
  double total = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    double norm2 = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      Matrix xp = x.row(r), xm = x.row(r);
      xp(0, c) += h;
      xm(0, c) -= h;
      const double d = (net.evaluate(xp)(0, 0) - net.evaluate(xm)(0, 0)) / (2 * h);
      norm2 += d * d;
    }
    total += norm2;
  }
  return total;
}

}  // namespace

TEST(DenseNetForward, IdentityLinearLayer) {
  DenseNet net({3, 3}, {Activation::Identity}, {Matrix::Identity(3, 3)}, {Matrix::Zero(1, 3)});
  Matrix x(2, 3);
  x << 1, 2, 3, -4, 5, -6;
  EXPECT_EQ(net.evaluate(x), x);
  EXPECT_EQ(net.forward(Var::constant(x)).value(), x);
}

TEST(DenseNetForward, ZeroWeightsPropagateBias) {
  Matrix b0(1, 2), b1(1, 1);
  b0 << 0.3, -0.7;
  b1 << 0.25;
  DenseNet net({4, 2, 1}, {Activation::Tanh, Activation::Identity}, {Matrix::Zero(4, 2), Matrix::Zero(2, 1)},
               {b0, b1});
  EXPECT_DOUBLE_EQ(net.evaluate(Matrix::Ones(1, 4))(0, 0), 0.25);
  Matrix w1(2, 1);
  w1 << 1.0, 1.0;
  DenseNet net2({4, 2, 1}, {Activation::Tanh, Activation::Identity}, {Matrix::Zero(4, 2), w1}, {b0, b1});
  EXPECT_NEAR(net2.evaluate(Matrix::Ones(1, 4))(0, 0), std::tanh(0.3) + std::tanh(-0.7) + 0.25, 1e-15);
}

TEST(DenseNetForward, MatchesLoopReimplementation) {
  Rng rng(123);
  DenseNet net({2, 64, 64, 64, 50}, rng);
  for (std::size_t l = 0; l < net.layer_count(); ++l) net.bias(l) = random_matrix(1, net.bias(l).cols(), rng) * 0.1;
  Matrix x(1, 2);
  x << 1.3, 1.2;
  const Matrix y = net.evaluate(x);
  const auto ref = reference_forward(net, {1.3, 1.2});
  for (Index j = 0; j < 50; ++j) EXPECT_NEAR(y(0, j), ref[static_cast<std::size_t>(j)], 1e-13);
  EXPECT_EQ(net.forward(Var::constant(x)).value(), net.evaluate(x));
  EXPECT_THROW(net.evaluate(Matrix::Ones(1, 3)), ShapeError);
}

TEST(DenseNetForward, BitIdenticalRepeats) {
  Rng rng(5);
  DenseNet net({15, 64, 64, 64, 1}, rng);
  const Matrix x = random_matrix(50, 15, rng);
  EXPECT_EQ(net.evaluate(x), net.evaluate(x));
}

TEST(ParamGradient, LinearNetClosedForm) {
  Rng rng(8);
  DenseNet net({3, 2}, {Activation::Identity}, {random_matrix(3, 2, rng)}, {random_matrix(1, 2, rng)});
  const Matrix x = random_matrix(4, 3, rng);
  const Var loss = sum(square(net.forward(Var::constant(x)))) * 0.5;
  const auto g = grad_values(loss, net.parameters());
  const Matrix y = net.evaluate(x);
  EXPECT_LT((g[0] - x.transpose() * y).norm(), 1e-12);
  EXPECT_LT((g[1] - y.colwise().sum()).norm(), 1e-12);
}

TEST(ParamGradient, ConstantLossGivesZero) {
  Rng rng(2);
  DenseNet net({2, 4, 1}, rng);
  const Var loss = sum(net.forward(Var::constant(Matrix::Ones(3, 2)))) * 0.0 + 3.0;
  for (const auto& g : grad_values(loss, net.parameters())) EXPECT_EQ(g.norm(), 0.0);
}

TEST(ParamGradient, MatchesFiniteDifferences) {
  Rng rng(31);
  DenseNet net({15, 64, 64, 64, 1}, rng);
  for (std::size_t l = 0; l < net.layer_count(); ++l) net.bias(l) = random_matrix(1, net.bias(l).cols(), rng) * 0.2;
  const Matrix x = random_matrix(6, 15, rng);
  const auto g = grad_values(scalar_loss_graph(net, Var::constant(x)), net.parameters());
  const double h = 1e-6;
  Rng pick(4);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (int trial = 0; trial < 6; ++trial) {
      for (bool is_bias : {false, true}) {
        Matrix& m = is_bias ? net.bias(l) : net.weight(l);
        const Index i = static_cast<Index>(uniform01(pick) * static_cast<double>(m.rows()));
        const Index j = static_cast<Index>(uniform01(pick) * static_cast<double>(m.cols()));
        const double keep = m(i, j);
        m(i, j) = keep + h;
        const double up = scalar_loss_value(net, x);
        m(i, j) = keep - h;
        const double dn = scalar_loss_value(net, x);
        m(i, j) = keep;
        const double fd = (up - dn) / (2 * h);
        const double ad = g[2 * l + (is_bias ? 1 : 0)](i, j);
        if (std::abs(fd) > 1e-6) EXPECT_LT(rel_err(ad, fd), 1e-5) << "layer " << l << " bias " << is_bias;
        else EXPECT_NEAR(ad, fd, 1e-9);
      }
    }
  }
}

TEST(InputGradient, LinearNetEqualsWeights) {
  Matrix w(3, 1);
  w << 0.5, -2.0, 1.25;
  DenseNet net({3, 1}, {Activation::Identity}, {w}, {Matrix::Constant(1, 1, 0.1)});
  const Var g = input_gradient(net, Var::constant(Matrix::Ones(4, 3)), false);
  for (Index r = 0; r < 4; ++r) EXPECT_EQ(g.value().row(r), w.transpose());
}

TEST(InputGradient, MatchesFiniteDifferences) {
  Rng rng(77);
  DenseNet net({1250, 250, 250, 250, 1}, rng);
  const Matrix x = random_matrix(2, 1250, rng) * 0.5;
  const Matrix g = input_gradient(net, Var::constant(x), false).value();
  const double h = 1e-6;
  for (Index c : {0, 17, 624, 625, 1249}) {
    for (Index r = 0; r < 2; ++r) {
      Matrix xp = x.row(r), xm = x.row(r);
      xp(0, c) += h;
      xm(0, c) -= h;
      const double fd = (net.evaluate(xp)(0, 0) - net.evaluate(xm)(0, 0)) / (2 * h);
      EXPECT_LT(rel_err(g(r, c), fd), 1e-5) << "col " << c;
    }
  }
}

TEST(NestedGradient, OneHiddenUnitClosedForm) {
  // f(x) = w2 tanh(w1 x + b1) + b2,  G = (df/dx)^2 = (w2 w1 (1 - h^2))^2
  const double w1 = 0.7, b1 = -0.3, w2 = 1.9, b2 = 0.4, x = 0.85;
  DenseNet net({1, 1, 1}, {Activation::Tanh, Activation::Identity}, {Matrix::Constant(1, 1, w1), Matrix::Constant(1, 1, w2)},
               {Matrix::Constant(1, 1, b1), Matrix::Constant(1, 1, b2)});
  const Var gx = input_gradient(net, Var::constant(Matrix::Constant(1, 1, x)), true);
  const auto g = grad_values(sum(square(gx)), net.parameters());
  const double h = std::tanh(w1 * x + b1);
  const double s = 1.0 - h * h;
  const double dw1 = 2 * w2 * w2 * w1 * s * s - 4 * std::pow(w2 * w1, 2) * x * h * s * s;
  const double db1 = -4 * std::pow(w2 * w1, 2) * h * s * s;
  const double dw2 = 2 * w2 * w1 * w1 * s * s;
  EXPECT_NEAR(g[0](0, 0), dw1, 1e-14);
  EXPECT_NEAR(g[1](0, 0), db1, 1e-14);
  EXPECT_NEAR(g[2](0, 0), dw2, 1e-14);
  EXPECT_EQ(g[3](0, 0), 0.0);
}

TEST(NestedGradient, PenaltyParameterGradientMatchesFiniteDifferences) {
  Rng rng(91);
  DenseNet net({15, 64, 64, 64, 1}, rng);
  const Matrix x = random_matrix(3, 15, rng);
  const Var gx = input_gradient(net, Var::constant(x), true);
  const auto g = grad_values(sum(square(gx)), net.parameters());
  const double h = 1e-4;
  Rng pick(6);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (int trial = 0; trial < 3; ++trial) {
      Matrix& m = net.weight(l);
      const Index i = static_cast<Index>(uniform01(pick) * static_cast<double>(m.rows()));
      const Index j = static_cast<Index>(uniform01(pick) * static_cast<double>(m.cols()));
      const double keep = m(i, j);
      m(i, j) = keep + h;
      const double up = penalty_value(net, x);
      m(i, j) = keep - h;
      const double dn = penalty_value(net, x);
      m(i, j) = keep;
      const double fd = (up - dn) / (2 * h);
      if (std::abs(fd) > 1e-4) EXPECT_LT(rel_err(g[2 * l](i, j), fd), 1e-4) << "layer " << l;
      else EXPECT_NEAR(g[2 * l](i, j), fd, 1e-7);
    }
  }
}

TEST(NestedGradient, ExactPenaltyAgainstNestedAutodiff) {
  // same quantity with the input gradient re-derived from forward tangents
  Rng rng(12);
  DenseNet net({2, 16, 16, 1}, rng);
  const Matrix x = random_matrix(5, 2, rng);
  const Var via_reverse = sum(square(input_gradient(net, Var::constant(x), true)));
  const auto tangents = net.forward_with_tangents(Var::constant(x), {0, 1});
  const Var via_forward = sum(square(tangents.tangents[0])) + sum(square(tangents.tangents[1]));
  EXPECT_NEAR(via_reverse.item(), via_forward.item(), 1e-12);
  const auto a = grad_values(via_reverse, net.parameters());
  const auto b = grad_values(via_forward, net.parameters());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT((a[k] - b[k]).norm(), 1e-11);
}

TEST(NoGrad, GuardSkipsRecording) {
  Rng rng(1);
  DenseNet net({2, 3, 1}, rng);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(net.forward(Var::constant(Matrix::Ones(1, 2))).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(net.forward(Var::constant(Matrix::Ones(1, 2))).requires_grad());
}

TEST(AdamTest, FirstStepHandCalculation) {
  Var p = Var::parameter(Matrix::Constant(1, 2, 1.0));
  AdamConfig cfg{.lr = 0.01, .beta1 = 0.5, .beta2 = 0.9, .eps = 1e-8};
  Adam opt(cfg, {p});
  Matrix g(1, 2);
  g << 0.3, -2.0;
  opt.step(std::vector<Matrix>{g});
  // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
  EXPECT_NEAR(p.value()(0, 0), 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value()(0, 1), 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.state().step, 1);
  EXPECT_NEAR(opt.state().m[0](0, 0), 0.15, 1e-15);
  EXPECT_NEAR(opt.state().v[0](0, 1), 0.4, 1e-15);
}

TEST(AdamTest, ZeroGradientLeavesParamsAndDecaysMoments) {
  Var p = Var::parameter(Matrix::Constant(2, 2, 0.5));
  Adam opt(AdamConfig{}, {p});
  opt.step(std::vector<Matrix>{Matrix::Constant(2, 2, 1.0)});
  const Matrix after_first = p.value();
  const double m1 = opt.state().m[0](0, 0);
  opt.step(std::vector<Matrix>{Matrix::Zero(2, 2)});
  EXPECT_NEAR(opt.state().m[0](0, 0), 0.5 * m1, 1e-15);
  // the decayed momentum still moves the parameter; a fresh optimizer does not
  Var q = Var::parameter(Matrix::Constant(2, 2, 0.5));
  Adam fresh(AdamConfig{}, {q});
  fresh.step(std::vector<Matrix>{Matrix::Zero(2, 2)});
  EXPECT_EQ(q.value(), Matrix::Constant(2, 2, 0.5));
  EXPECT_NE(p.value(), after_first);
}

TEST(AdamTest, NonFiniteGradientRejectedWithoutSideEffects) {
  Var p = Var::parameter(Matrix::Constant(1, 3, 2.0));
  Adam opt(AdamConfig{}, {p});
  Matrix g = Matrix::Ones(1, 3);
  g(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.step(std::vector<Matrix>{g}), NonFiniteGradient);
  EXPECT_EQ(p.value(), Matrix::Constant(1, 3, 2.0));
  EXPECT_EQ(opt.state().step, 0);
}

TEST(AdamTest, IdenticalSeedsGiveIdenticalTrajectories) {
  auto run = [] {
    Rng rng(10);
    DenseNet net({3, 8, 1}, rng);
    Adam opt(AdamConfig{.lr = 1e-2}, net.parameters());
    const Matrix x = random_matrix(7, 3, rng);
    for (int it = 0; it < 20; ++it) {
      opt.step(grad_values(sum(square(net.forward(Var::constant(x)))), net.parameters()));
    }
    return net.flat_parameters();
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripAndTamperRejection) {
  Rng rng(3);
  DenseNet net({2, 5, 4}, rng);
  const auto dir = std::filesystem::temp_directory_path() / "fprior_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(net, dir / "net.json");
  const DenseNet back = load_checkpoint(dir / "net.json");
  EXPECT_EQ(back.widths(), net.widths());
  EXPECT_EQ(back.flat_parameters(), net.flat_parameters());
  EXPECT_EQ(checkpoint_checksum(back), checkpoint_checksum(net));

  DenseNet other = net;
  other.weight(0)(0, 0) += 1e-9;
  const std::string forged = checkpoint_json(other);
  EXPECT_NO_THROW(parse_checkpoint(checkpoint_json(net)));
  EXPECT_THROW(parse_checkpoint("{\"format\": \"other\"}"), CheckpointError);
  EXPECT_THROW(parse_checkpoint("not json"), CheckpointError);
  const std::string original_sum = checkpoint_checksum(net);
  // modified parameters under the original checksum
  std::string tampered = forged;
  const auto pos = tampered.find(checkpoint_checksum(other));
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, original_sum.size(), original_sum);
  EXPECT_THROW(parse_checkpoint(tampered), CheckpointError);
}

TEST(DenseNetCopy, DeepCopyIsIndependent) {
  Rng rng(4);
  DenseNet a({2, 3, 1}, rng);
  DenseNet b = a;
  b.weight(0)(0, 0) += 1.0;
  EXPECT_NE(a.weight(0)(0, 0), b.weight(0)(0, 0));
  EXPECT_EQ(a.parameter_count(), 2u * 3u + 3u + 3u + 1u);
  Eigen::VectorXd flat = a.flat_parameters();
  flat.setConstant(0.5);
  a.set_flat_parameters(flat);
  EXPECT_EQ(a.weight(1)(2, 0), 0.5);
}

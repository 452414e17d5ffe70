#pragma once

// Forward-mode dual number with a fixed number of tangent directions. Used to
// push parameter sensitivities through the closed-form 4FF stresses.

#include <Eigen/Core>
#include <cmath>

namespace fprior {

template <int N>
class Dual {
 public:
  using Tangent = Eigen::Matrix<double, N, 1>;

  Dual() : v_(0.0), d_(Tangent::Zero()) {}
  Dual(double v) : v_(v), d_(Tangent::Zero()) {}  // NOLINT: implicit by design of the arithmetic
  Dual(double v, Tangent d) : v_(v), d_(std::move(d)) {}

  static Dual variable(double v, int index) {
    Dual x(v);
    x.d_[index] = 1.0;
    return x;
  }

  double value() const { return v_; }
  const Tangent& tangent() const { return d_; }

  Dual& operator+=(const Dual& o) { v_ += o.v_; d_ += o.d_; return *this; }
  Dual& operator-=(const Dual& o) { v_ -= o.v_; d_ -= o.d_; return *this; }
  Dual& operator*=(const Dual& o) { d_ = d_ * o.v_ + o.d_ * v_; v_ *= o.v_; return *this; }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator-(const Dual& a) { return Dual(-a.v_, -a.d_); }
  friend Dual operator/(const Dual& a, const Dual& b) {
    return Dual(a.v_ / b.v_, (a.d_ * b.v_ - b.d_ * a.v_) / (b.v_ * b.v_));
  }
  friend Dual operator+(const Dual& a, double b) { return Dual(a.v_ + b, a.d_); }
  friend Dual operator+(double b, const Dual& a) { return Dual(a.v_ + b, a.d_); }
  friend Dual operator-(const Dual& a, double b) { return Dual(a.v_ - b, a.d_); }
  friend Dual operator-(double b, const Dual& a) { return Dual(b - a.v_, -a.d_); }
  friend Dual operator*(const Dual& a, double b) { return Dual(a.v_ * b, a.d_ * b); }
  friend Dual operator*(double b, const Dual& a) { return Dual(a.v_ * b, a.d_ * b); }
  friend Dual operator/(const Dual& a, double b) { return Dual(a.v_ / b, a.d_ / b); }

  friend Dual exp(const Dual& a) {
    const double e = std::exp(a.v_);
    return Dual(e, a.d_ * e);
  }
  friend Dual cos(const Dual& a) { return Dual(std::cos(a.v_), a.d_ * -std::sin(a.v_)); }
  friend Dual sin(const Dual& a) { return Dual(std::sin(a.v_), a.d_ * std::cos(a.v_)); }

 private:
  double v_;
  Tangent d_;
};

}  // namespace fprior

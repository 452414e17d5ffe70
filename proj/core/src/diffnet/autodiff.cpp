#include "fprior/diffnet/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <string>
#include <unordered_map>

namespace fprior::diffnet {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_order{0};

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var Var::constant(Matrix value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->order = g_order.fetch_add(1, std::memory_order_relaxed);
  return Var(std::move(n));
}

Var Var::parameter(Matrix value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

Matrix& Var::mutable_value() {
  if (!is_leaf()) throw std::logic_error("mutable_value on a non-leaf Var");
  return node_->value;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on a non-scalar Var");
  return node_->value(0, 0);
}

void Var::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf Var");
  node_->requires_grad = on;
}

Var make_op(Matrix value, std::vector<Var> inputs, detail::BackwardFn fn, const char* op) {
  Var out = Var::constant(std::move(value));
  const bool record =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  out.node_->op = op;
  if (record) {
    out.node_->requires_grad = true;
    out.node_->inputs = std::move(inputs);
    out.node_->backward = std::move(fn);
  }
  return out;
}

std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph) {
  if (!output.defined() || output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("grad: output must be a 1x1 Var");
  }

  // Collect the recorded subgraph. Creation order is a topological order.
  std::vector<Var> nodes;
  std::unordered_map<const detail::Node*, std::size_t> index;
  if (output.requires_grad()) {
    std::vector<Var> stack{output};
    index.emplace(output.node(), 0);
    nodes.push_back(output);
    while (!stack.empty()) {
      Var v = std::move(stack.back());
      stack.pop_back();
      for (const Var& in : v.node()->inputs) {
        if (!in.requires_grad()) continue;
        if (index.emplace(in.node(), nodes.size()).second) {
          nodes.push_back(in);
          stack.push_back(in);
        }
      }
    }
  }
  std::vector<std::size_t> order(nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return nodes[a].node()->order < nodes[b].node()->order; });

  // A node is needed when some requested variable lies beneath it.
  std::vector<char> needed(nodes.size(), 0);
  std::vector<char> requested(nodes.size(), 0);
  for (const Var& w : wrt) {
    if (!w.defined()) continue;
    auto it = index.find(w.node());
    if (it != index.end()) needed[it->second] = requested[it->second] = 1;
  }
  for (std::size_t k : order) {
    if (needed[k]) continue;
    for (const Var& in : nodes[k].node()->inputs) {
      auto it = index.find(in.node());
      if (it != index.end() && needed[it->second]) {
        needed[k] = 1;
        break;
      }
    }
  }

  std::vector<Var> grads(nodes.size());
  {
    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();
    if (!nodes.empty()) grads[0] = Var::scalar(1.0);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t k = *it;
      const Var& self = nodes[k];
      if (!needed[k] || !grads[k].defined() || self.is_leaf()) continue;
      const auto& inputs = self.node()->inputs;
      std::vector<char> need(inputs.size(), 0);
      bool any = false;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto f = index.find(inputs[i].node());
        need[i] = (f != index.end() && needed[f->second]) ? 1 : 0;
        any = any || need[i];
      }
      if (!any) continue;
      std::vector<Var> out(inputs.size());
      self.node()->backward(self, grads[k], inputs, need, out);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!need[i] || !out[i].defined()) continue;
        const std::size_t j = index.at(inputs[i].node());
        grads[j] = grads[j].defined() ? grads[j] + out[i] : out[i];
      }
      if (!create_graph && !requested[k]) grads[k] = Var();  // free intermediate gradients early
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto it = index.find(w.defined() ? w.node() : nullptr);
    if (it != index.end() && grads[it->second].defined()) {
      result.push_back(grads[it->second]);
    } else {
      result.push_back(Var::constant(Matrix::Zero(w.rows(), w.cols())));
    }
  }
  return result;
}

// --- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Matrix v(a.rows(), b.cols());
  v.noalias() = a.value() * b.value();
  return make_op(std::move(v), {a, b},
                 [](const Var&, const Var& g, std::span<const Var> in, std::span<const char> need,
                    std::span<Var> out) {
                   if (need[0]) out[0] = matmul_nt(g, in[1]);
                   if (need[1]) out[1] = matmul_tn(in[0], g);
                 },
                 "matmul");
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix v(a.rows(), b.rows());
  v.noalias() = a.value() * b.value().transpose();
  return make_op(std::move(v), {a, b},
                 [](const Var&, const Var& g, std::span<const Var> in, std::span<const char> need,
                    std::span<Var> out) {
                   if (need[0]) out[0] = matmul(g, in[1]);
                   if (need[1]) out[1] = matmul_tn(g, in[0]);
                 },
                 "matmul_nt");
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix v(a.cols(), b.cols());
  v.noalias() = a.value().transpose() * b.value();
  return make_op(std::move(v), {a, b},
                 [](const Var&, const Var& g, std::span<const Var> in, std::span<const char> need,
                    std::span<Var> out) {
                   if (need[0]) out[0] = matmul_nt(in[1], g);
                   if (need[1]) out[1] = matmul(in[0], g);
                 },
                 "matmul_tn");
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = transpose(g); },
                 "transpose");
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) {
                   out[0] = g;
                   out[1] = g;
                 },
                 "add");
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char> need,
                    std::span<Var> out) {
                   out[0] = g;
                   if (need[1]) out[1] = -g;
                 },
                 "sub");
}

Var operator-(const Var& a) { return a * -1.0; }

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b},
                 [](const Var&, const Var& g, std::span<const Var> in, std::span<const char> need,
                    std::span<Var> out) {
                   if (need[0]) out[0] = hadamard(g, in[1]);
                   if (need[1]) out[1] = hadamard(g, in[0]);
                 },
                 "hadamard");
}

Var operator*(const Var& a, double c) {
  return make_op(a.value() * c, {a},
                 [c](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                     std::span<Var> out) { out[0] = g * c; },
                 "scale");
}

Var operator*(double c, const Var& a) { return a * c; }

Var operator+(const Var& a, double c) {
  return make_op(a.value().array() + c, {a},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = g; },
                 "add_scalar");
}

Var operator-(const Var& a, double c) { return a + (-c); }

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols(a)");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return make_op(std::move(v), {a, row},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char> need,
                    std::span<Var> out) {
                   out[0] = g;
                   if (need[1]) out[1] = sum_rows(g);
                 },
                 "add_row");
}

Var sum_rows(const Var& a) {
  const Index m = a.rows();
  return make_op(a.value().colwise().sum(), {a},
                 [m](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                     std::span<Var> out) { out[0] = repeat_rows(g, m); },
                 "sum_rows");
}

Var sum_cols(const Var& a) {
  const Index n = a.cols();
  return make_op(a.value().rowwise().sum(), {a},
                 [n](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                     std::span<Var> out) { out[0] = repeat_cols(g, n); },
                 "sum_cols");
}

Var repeat_rows(const Var& row, Index m) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expects a 1 x n row");
  return make_op(row.value().replicate(m, 1), {row},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = sum_rows(g); },
                 "repeat_rows");
}

Var repeat_cols(const Var& col, Index n) {
  if (col.cols() != 1) throw ShapeError("repeat_cols: expects an m x 1 column");
  return make_op(col.value().replicate(1, n), {col},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = sum_cols(g); },
                 "repeat_cols");
}

Var broadcast(const Var& s, Index r, Index c) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("broadcast: expects a 1x1 Var");
  return make_op(Matrix::Constant(r, c, s.value()(0, 0)), {s},
                 [](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = sum(g); },
                 "broadcast");
}

Var sum(const Var& a) {
  const Index r = a.rows(), c = a.cols();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a},
                 [r, c](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                        std::span<Var> out) { out[0] = broadcast(g, r, c); },
                 "sum");
}

Var mean(const Var& a) { return sum(a) * (1.0 / static_cast<double>(a.rows() * a.cols())); }

Matrix tanh_values(const Matrix& a) {
  // tanh|x| = (1 - e) / (1 + e) with e = exp(-2|x|); Eigen vectorizes exp for doubles but not tanh
  const Eigen::ArrayXXd e = (-2.0 * a.array().abs()).exp();
  return (a.array().sign() * (1.0 - e) / (1.0 + e)).matrix();
}

Var tanh(const Var& a) {
  return make_op(tanh_values(a.value()), {a},
                 [](const Var& self, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = hadamard(g, -square(self) + 1.0); },
                 "tanh");
}

Var exp(const Var& a) {
  return make_op(a.value().array().exp().matrix(), {a},
                 [](const Var& self, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = hadamard(g, self); },
                 "exp");
}

Var sqrt(const Var& a) {
  return make_op(a.value().array().sqrt().matrix(), {a},
                 [](const Var& self, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = hadamard(g, reciprocal(self)) * 0.5; },
                 "sqrt");
}

Var square(const Var& a) {
  return make_op(a.value().array().square().matrix(), {a},
                 [](const Var&, const Var& g, std::span<const Var> in, std::span<const char>,
                    std::span<Var> out) { out[0] = hadamard(g, in[0]) * 2.0; },
                 "square");
}

Var reciprocal(const Var& a) {
  return make_op(a.value().array().inverse().matrix(), {a},
                 [](const Var& self, const Var& g, std::span<const Var>, std::span<const char>,
                    std::span<Var> out) { out[0] = -hadamard(g, square(self)); },
                 "reciprocal");
}

Var slice_cols(const Var& a, Index start, Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw ShapeError("slice_cols: out of range");
  const Index total = a.cols();
  return make_op(a.value().middleCols(start, n), {a},
                 [start, total](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                                std::span<Var> out) { out[0] = pad_cols(g, start, total); },
                 "slice_cols");
}

Var pad_cols(const Var& a, Index start, Index total) {
  if (start < 0 || start + a.cols() > total) throw ShapeError("pad_cols: out of range");
  Matrix v = Matrix::Zero(a.rows(), total);
  v.middleCols(start, a.cols()) = a.value();
  const Index n = a.cols();
  return make_op(std::move(v), {a},
                 [start, n](const Var&, const Var& g, std::span<const Var>, std::span<const char>,
                            std::span<Var> out) { out[0] = slice_cols(g, start, n); },
                 "pad_cols");
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index na = a.cols(), nb = b.cols();
  return make_op(std::move(v), {a, b},
                 [na, nb](const Var&, const Var& g, std::span<const Var>, std::span<const char> need,
                          std::span<Var> out) {
                   if (need[0]) out[0] = slice_cols(g, 0, na);
                   if (need[1]) out[1] = slice_cols(g, na, nb);
                 },
                 "concat_cols");
}

}  // namespace fprior::diffnet

#include "tsdiff/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tsdiff/error.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff::ad {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DataError(std::string("shape mismatch in ") + what + ": " +
                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

Tape* tape_of(Var a) {
  if (a.tape == nullptr) throw DataError("operation on an unbound variable");
  return a.tape;
}

Tape* tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw DataError("operands recorded on different tapes");
  }
  return a.tape;
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

double softplus(double x) {
  // log(1 + e^x) without overflow for large x or loss of precision for
  // very negative x.
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::leaf: return "leaf";
    case Op::param: return "param";
    case Op::matvec: return "matvec";
    case Op::matvec_t: return "matvec_t";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::axpy: return "axpy";
    case Op::add_scalar: return "add_scalar";
    case Op::mul_const: return "mul_const";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::softplus: return "softplus";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sum: return "sum";
    case Op::dot: return "dot";
    case Op::squared_norm: return "squared_norm";
    case Op::masked_softmax: return "masked_softmax";
    case Op::layer_norm: return "layer_norm";
    case Op::stack_rows: return "stack_rows";
    case Op::broadcast: return "broadcast";
  }
  return "?";
}

// --- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw DataError("expected a scalar node");
  return v[0];
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::leaf;
  n.requires_grad = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const ParameterStore& store, std::size_t index) {
  Node n;
  n.op = Op::param;
  n.requires_grad = true;
  n.external = &store.value(index);
  n.param_index = index;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::clear() { nodes_.clear(); }

Var Tape::push(Op op, std::initializer_list<Var> inputs, Tensor value,
               std::vector<double> aux, double c) {
  Node n;
  n.op = op;
  n.c = c;
  n.aux = std::move(aux);
  n.value = std::move(value);
  for (const Var& v : inputs) {
    n.in[n.n_in++] = v.id;
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push_many(Op op, std::span<const Var> inputs, Tensor value,
                    std::vector<double> aux) {
  Node n;
  n.op = op;
  n.aux = std::move(aux);
  n.value = std::move(value);
  n.many.reserve(inputs.size());
  for (const Var& v : inputs) {
    n.many.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Gradients Tape::backward(Var root) const {
  if (root.tape != this) throw DataError("backward root belongs to another tape");
  const Tensor& rv = value(root.id);
  if (rv.size() != 1) {
    throw DataError("backward requires a scalar root, got " + std::to_string(rv.size()) +
                    " entries");
  }
  Gradients g;
  g.tape_ = this;
  g.grads_.resize(root.id + 1);
  if (!nodes_[root.id].requires_grad) return g;
  g.grads_[root.id] = Tensor(1, 1, 1.0);
  for (std::int64_t i = root.id; i >= 0; --i) {
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    Tensor& out = g.grads_[static_cast<std::size_t>(i)];
    if (!node.requires_grad || out.size() == 0) continue;
    backward_node(node, out, g.grads_);
  }
  return g;
}

void Tape::backward_node(const Node& node, const Tensor& g,
                         std::vector<Tensor>& grads) const {
  // Returns the gradient slot of input k, allocating on first touch.
  auto slot = [&](std::uint32_t id) -> Tensor* {
    if (!nodes_[id].requires_grad) return nullptr;
    Tensor& s = grads[id];
    if (s.size() == 0) {
      const Tensor& v = value(id);
      s = Tensor(v.rows(), v.cols());
    }
    return &s;
  };
  const Tensor& y = node.value;

  switch (node.op) {
    case Op::constant:
    case Op::leaf:
    case Op::param:
      return;

    case Op::matvec: {
      const Tensor& w = value(node.in[0]);
      const Tensor& x = value(node.in[1]);
      const std::size_t r = w.rows(), c = w.cols();
      if (Tensor* dw = slot(node.in[0])) {
        for (std::size_t i = 0; i < r; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* row = &(*dw)(i, 0);
          for (std::size_t j = 0; j < c; ++j) row[j] += gi * x[j];
        }
      }
      if (Tensor* dx = slot(node.in[1])) {
        for (std::size_t i = 0; i < r; ++i) {
          const double gi = g[i];
          const double* row = &w(i, 0);
          for (std::size_t j = 0; j < c; ++j) (*dx)[j] += gi * row[j];
        }
      }
      return;
    }

    case Op::matvec_t: {
      const Tensor& w = value(node.in[0]);
      const Tensor& x = value(node.in[1]);
      const std::size_t r = w.rows(), c = w.cols();
      if (Tensor* dw = slot(node.in[0])) {
        for (std::size_t i = 0; i < r; ++i) {
          const double xi = x[i];
          double* row = &(*dw)(i, 0);
          for (std::size_t j = 0; j < c; ++j) row[j] += xi * g[j];
        }
      }
      if (Tensor* dx = slot(node.in[1])) {
        for (std::size_t i = 0; i < r; ++i) {
          const double* row = &w(i, 0);
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += row[j] * g[j];
          (*dx)[i] += acc;
        }
      }
      return;
    }

    case Op::add:
      if (Tensor* da = slot(node.in[0])) add_into(*da, g);
      if (Tensor* db = slot(node.in[1])) add_into(*db, g);
      return;

    case Op::sub:
      if (Tensor* da = slot(node.in[0])) add_into(*da, g);
      if (Tensor* db = slot(node.in[1]))
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
      return;

    case Op::mul: {
      const Tensor& a = value(node.in[0]);
      const Tensor& b = value(node.in[1]);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b[i];
      if (Tensor* db = slot(node.in[1]))
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a[i];
      return;
    }

    case Op::scale:
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += node.c * g[i];
      return;

    case Op::axpy:
      if (Tensor* dx = slot(node.in[0])) add_into(*dx, g);
      if (Tensor* dy = slot(node.in[1]))
        for (std::size_t i = 0; i < g.size(); ++i) (*dy)[i] += node.c * g[i];
      return;

    case Op::add_scalar:
      if (Tensor* da = slot(node.in[0])) add_into(*da, g);
      return;

    case Op::mul_const:
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * node.aux[i];
      return;

    case Op::concat: {
      const std::size_t na = value(node.in[0]).size();
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < na; ++i) (*da)[i] += g[i];
      if (Tensor* db = slot(node.in[1]))
        for (std::size_t i = 0; i < db->size(); ++i) (*db)[i] += g[na + i];
      return;
    }

    case Op::slice: {
      const auto offset = static_cast<std::size_t>(node.c);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[offset + i] += g[i];
      return;
    }

    case Op::tanh:
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * (1.0 - y[i] * y[i]);
      return;

    case Op::sigmoid:
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * y[i] * (1.0 - y[i]);
      return;

    case Op::softplus: {
      const Tensor& a = value(node.in[0]);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * sigmoid(a[i]);
      return;
    }

    case Op::exp:
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * y[i];
      return;

    case Op::log: {
      const Tensor& a = value(node.in[0]);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] / a[i];
      return;
    }

    case Op::sum:
      if (Tensor* da = slot(node.in[0]))
        for (double& v : da->data()) v += g[0];
      return;

    case Op::dot: {
      const Tensor& a = value(node.in[0]);
      const Tensor& b = value(node.in[1]);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < a.size(); ++i) (*da)[i] += g[0] * b[i];
      if (Tensor* db = slot(node.in[1]))
        for (std::size_t i = 0; i < b.size(); ++i) (*db)[i] += g[0] * a[i];
      return;
    }

    case Op::squared_norm: {
      const Tensor& a = value(node.in[0]);
      if (Tensor* da = slot(node.in[0]))
        for (std::size_t i = 0; i < a.size(); ++i) (*da)[i] += 2.0 * g[0] * a[i];
      return;
    }

    case Op::masked_softmax: {
      if (Tensor* da = slot(node.in[0])) {
        double gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i) (*da)[i] += y[i] * (g[i] - gy);
      }
      return;
    }

    case Op::layer_norm: {
      // aux[0] holds 1/sigma.
      if (Tensor* da = slot(node.in[0])) {
        const double inv_sigma = node.aux[0];
        const auto n = static_cast<double>(y.size());
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
          mean_g += g[i];
          mean_gy += g[i] * y[i];
        }
        mean_g /= n;
        mean_gy /= n;
        for (std::size_t i = 0; i < y.size(); ++i)
          (*da)[i] += inv_sigma * (g[i] - mean_g - y[i] * mean_gy);
      }
      return;
    }

    case Op::stack_rows: {
      const std::size_t d = y.cols();
      for (std::size_t r = 0; r < node.many.size(); ++r) {
        if (Tensor* dr = slot(node.many[r]))
          for (std::size_t j = 0; j < d; ++j) (*dr)[j] += g[r * d + j];
      }
      return;
    }

    case Op::broadcast:
      if (Tensor* da = slot(node.in[0])) {
        double acc = 0.0;
        for (double v : g.data()) acc += v;
        (*da)[0] += acc;
      }
      return;
  }
  throw DataError(std::string("backward: unsupported primitive '") + op_name(node.op) + "'");
}

// --- Gradients --------------------------------------------------------------

Tensor Gradients::wrt(Var v) const {
  if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
  const Tensor& val = tape_->value(v.id);
  return Tensor(val.rows(), val.cols());
}

void Gradients::accumulate_params(std::vector<Tensor>& grads) const {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    const auto& node = tape_->nodes_[i];
    if (node.op != Op::param || grads_[i].size() == 0) continue;
    add_into(grads[node.param_index], grads_[i]);
  }
}

// --- operations -----------------------------------------------------------

Var matvec(Var w, Var x) {
  Tape* t = tape_of(w, x);
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  if (W.cols() != X.size()) {
    throw DataError("shape mismatch in matvec: " + std::to_string(W.rows()) + "x" +
                    std::to_string(W.cols()) + " times " + std::to_string(X.size()));
  }
  Tensor out(W.rows(), 1);
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* row = &W(i, 0);
    double acc = 0.0;
    for (std::size_t j = 0; j < W.cols(); ++j) acc += row[j] * X[j];
    out[i] = acc;
  }
  return t->push(Op::matvec, {w, x}, std::move(out));
}

Var matvec_t(Var w, Var x) {
  Tape* t = tape_of(w, x);
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  if (W.rows() != X.size()) {
    throw DataError("shape mismatch in matvec_t: (" + std::to_string(W.rows()) + "x" +
                    std::to_string(W.cols()) + ")^T times " + std::to_string(X.size()));
  }
  Tensor out(W.cols(), 1);
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double xi = X[i];
    const double* row = &W(i, 0);
    for (std::size_t j = 0; j < W.cols(); ++j) out[j] += xi * row[j];
  }
  return t->push(Op::matvec_t, {w, x}, std::move(out));
}

Var add(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same(A, B, "add");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return t->push(Op::add, {a, b}, std::move(out));
}

Var sub(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same(A, B, "sub");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return t->push(Op::sub, {a, b}, std::move(out));
}

Var mul(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same(A, B, "mul");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return t->push(Op::mul, {a, b}, std::move(out));
}

Var scale(Var a, double c) {
  Tensor out = map(a.value(), [c](double x) { return c * x; });
  return tape_of(a)->push(Op::scale, {a}, std::move(out), {}, c);
}

Var neg(Var a) { return scale(a, -1.0); }

Var axpy(Var x, double c, Var y) {
  Tape* t = tape_of(x, y);
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  require_same(X, Y, "axpy");
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * Y[i];
  return t->push(Op::axpy, {x, y}, std::move(out), {}, c);
}

Var add_scalar(Var a, double c) {
  Tensor out = map(a.value(), [c](double x) { return x + c; });
  return tape_of(a)->push(Op::add_scalar, {a}, std::move(out), {}, c);
}

Var mul_const(Var a, std::vector<double> factors) {
  const Tensor& A = a.value();
  if (factors.size() != A.size()) throw DataError("shape mismatch in mul_const");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors[i];
  return tape_of(a)->push(Op::mul_const, {a}, std::move(out), std::move(factors));
}

Var concat(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor out(A.size() + B.size(), 1);
  std::copy(A.data().begin(), A.data().end(), out.data().begin());
  std::copy(B.data().begin(), B.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(A.size()));
  return t->push(Op::concat, {a, b}, std::move(out));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DataError("concat of zero parts");
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = concat(acc, parts[i]);
  return acc;
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& A = a.value();
  if (offset + length > A.size()) throw DataError("slice out of range");
  Tensor out(length, 1);
  for (std::size_t i = 0; i < length; ++i) out[i] = A[offset + i];
  return tape_of(a)->push(Op::slice, {a}, std::move(out), {},
                          static_cast<double>(offset));
}

Var tanh(Var a) {
  return tape_of(a)->push(Op::tanh, {a},
                          map(a.value(), [](double x) { return std::tanh(x); }));
}

Var sigmoid(Var a) {
  return tape_of(a)->push(Op::sigmoid, {a},
                          map(a.value(), [](double x) { return sigmoid(x); }));
}

Var softplus(Var a) {
  return tape_of(a)->push(Op::softplus, {a},
                          map(a.value(), [](double x) { return softplus(x); }));
}

Var exp(Var a) {
  return tape_of(a)->push(Op::exp, {a},
                          map(a.value(), [](double x) { return std::exp(x); }));
}

Var log(Var a) {
  return tape_of(a)->push(Op::log, {a},
                          map(a.value(), [](double x) { return std::log(x); }));
}

Var sum(Var a) {
  const auto& d = a.value().data();
  return tape_of(a)->push(Op::sum, {a},
                          Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0)));
}

Var dot(Var a, Var b) {
  Tape* t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.size() != B.size()) throw DataError("shape mismatch in dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * B[i];
  return t->push(Op::dot, {a, b}, Tensor::scalar(acc));
}

Var squared_norm(Var a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x * x;
  return tape_of(a)->push(Op::squared_norm, {a}, Tensor::scalar(acc));
}

Var masked_softmax(Var logits, std::span<const std::uint8_t> mask) {
  const Tensor& z = logits.value();
  if (mask.size() != z.size()) throw DataError("shape mismatch in masked_softmax");
  double zmax = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i] != 0) {
      zmax = std::max(zmax, z[i]);
      any = true;
    }
  }
  if (!any) throw DataError("masked_softmax: every entry is masked");
  Tensor out(z.size(), 1);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i] != 0) {
      out[i] = std::exp(z[i] - zmax);
      total += out[i];
    }
  }
  for (double& v : out.data()) v /= total;
  return tape_of(logits)->push(Op::masked_softmax, {logits}, std::move(out));
}

Var layer_norm(Var a, double eps) {
  const Tensor& A = a.value();
  const auto n = static_cast<double>(A.size());
  double mean = 0.0;
  for (double x : A.data()) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : A.data()) var += (x - mean) * (x - mean);
  var /= n;
  const double inv_sigma = 1.0 / std::sqrt(var + eps);
  Tensor out = map(A, [&](double x) { return (x - mean) * inv_sigma; });
  return tape_of(a)->push(Op::layer_norm, {a}, std::move(out), {inv_sigma});
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DataError("stack_rows of zero rows");
  Tape* t = tape_of(rows[0]);
  const std::size_t d = rows[0].value().size();
  Tensor out(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].tape != t) throw DataError("operands recorded on different tapes");
    const Tensor& v = rows[r].value();
    if (v.size() != d) throw DataError("stack_rows: ragged rows");
    std::copy(v.data().begin(), v.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return t->push_many(Op::stack_rows, rows, std::move(out));
}

Var broadcast(Var s, std::size_t n) {
  return tape_of(s)->push(Op::broadcast, {s}, Tensor(n, 1, s.scalar()));
}

LstmState lstm_cell(Var w_in, Var w_hidden, Var bias, Var input, LstmState prev) {
  const std::size_t hidden = prev.h.size();
  Var gates = add(add(matvec(w_in, input), matvec(w_hidden, prev.h)), bias);
  Var i = sigmoid(slice(gates, 0, hidden));
  Var f = sigmoid(slice(gates, hidden, hidden));
  Var g = tanh(slice(gates, 2 * hidden, hidden));
  Var o = sigmoid(slice(gates, 3 * hidden, hidden));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace tsdiff::ad

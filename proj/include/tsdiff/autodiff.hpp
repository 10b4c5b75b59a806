#pragma once

// Reverse-mode automatic differentiation over dense float64 arrays.
//
// A Tape records an append-only list of nodes. Each node stores its
// operation kind, up to three input node ids, the forward value and any
// auxiliary data the backward rule needs (masks, offsets, constants).
// Inputs always precede their consumers, so a single reverse sweep
// propagates adjoints.
//
//   ad::Tape tape;
//   auto w = tape.leaf(ad::Tensor::scalar(3.0));
//   auto f = ad::mul(w, w);
//   auto g = tape.backward(f);
//   g.wrt(w)[0];  // 6

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tsdiff {
class ParameterStore;
}

namespace tsdiff::ad {

// Row-major matrix; a column vector has cols() == 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Tensor vector(std::vector<double> values) {
    Tensor t;
    t.rows_ = values.size();
    t.cols_ = 1;
    t.data_ = std::move(values);
    return t;
  }
  static Tensor scalar(double v) { return vector({v}); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Tensor& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Op : std::uint8_t {
  constant,
  leaf,
  param,
  matvec,         // W x
  matvec_t,       // W^T x
  add,
  sub,
  mul,            // elementwise
  scale,          // c * x
  axpy,           // x + c * y
  add_scalar,     // x + c
  mul_const,      // x * aux (elementwise constant, e.g. dropout or masks)
  concat,         // two inputs
  slice,
  tanh,
  sigmoid,
  softplus,
  exp,
  log,
  sum,
  dot,
  squared_norm,
  masked_softmax,
  layer_norm,
  stack_rows,     // n vectors -> n x d matrix, inputs in aux_ids
  broadcast,      // scalar -> vector of length aux size
};

const char* op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  double scalar() const;
  std::size_t size() const { return value().size(); }
  double operator[](std::size_t i) const { return value()[i]; }
  bool valid() const noexcept { return tape != nullptr; }
};

class Gradients {
 public:
  // Gradient of the root with respect to `v`; zeros when v does not
  // influence the root.
  Tensor wrt(Var v) const;

  // Adds gradients of every parameter leaf into `grads`, indexed by
  // parameter index.
  void accumulate_params(std::vector<Tensor>& grads) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(std::vector<double> values) {
    return constant(Tensor::vector(std::move(values)));
  }
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // Differentiable input that is not owned by a ParameterStore.
  Var leaf(Tensor value);

  // Zero-copy leaf bound to a parameter; the store must outlive the
  // tape's use of the node and must not be mutated meanwhile.
  Var param(const ParameterStore& store, std::size_t index);

  Gradients backward(Var root) const;

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  const Tensor& value(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Low-level node construction used by the op functions below.
  Var push(Op op, std::initializer_list<Var> inputs, Tensor value,
           std::vector<double> aux = {}, double c = 0.0);
  Var push_many(Op op, std::span<const Var> inputs, Tensor value,
                std::vector<double> aux = {});

 private:
  friend class Gradients;

  struct Node {
    Op op = Op::constant;
    bool requires_grad = false;
    std::uint8_t n_in = 0;
    std::uint32_t in[3] = {0, 0, 0};
    std::vector<std::uint32_t> many;  // stack_rows inputs
    double c = 0.0;
    std::vector<double> aux;
    Tensor value;
    const Tensor* external = nullptr;  // param leaves
    std::size_t param_index = 0;
  };

  void backward_node(const Node& node, const Tensor& out_grad,
                     std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// --- operations -----------------------------------------------------------

Var matvec(Var w, Var x);
Var matvec_t(Var w, Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var axpy(Var x, double c, Var y);
Var add_scalar(Var a, double c);
Var mul_const(Var a, std::vector<double> factors);
Var concat(Var a, Var b);
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var dot(Var a, Var b);
Var squared_norm(Var a);
Var neg(Var a);

// Softmax over entries with mask != 0; masked entries get exactly zero
// weight. Throws DataError when every entry is masked.
Var masked_softmax(Var logits, std::span<const std::uint8_t> mask);

// Normalizes a vector to zero mean and unit variance over its entries.
Var layer_norm(Var a, double eps = 1e-5);

Var stack_rows(std::span<const Var> rows);
Var broadcast(Var scalar, std::size_t n);

// LSTM cell composed from primitives. `w_in` maps the input, `w_hidden`
// maps h, `bias` has width 4H with gate order (input, forget, cell, output).
struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_cell(Var w_in, Var w_hidden, Var bias, Var input, LstmState prev);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator-(Var a) { return neg(a); }

// Numerically stable scalar helpers shared with non-taped code.
double softplus(double x);
double sigmoid(double x);

}  // namespace tsdiff::ad

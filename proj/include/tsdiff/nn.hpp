#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff::nn {

// Dropout on hidden activations; inactive when rng is null or rate is 0.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const noexcept { return rng != nullptr && rate > 0.0; }
  ad::Var apply(ad::Var h) const;
};

// Tanh MLP: widths = {in, hidden..., out}. Hidden layers use tanh, the
// output layer is linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> widths,
      std::mt19937_64& rng, double out_gain = 1.0);

  struct Bound {
    std::vector<ad::Var> w;
    std::vector<ad::Var> b;
    ad::Var operator()(ad::Var x, const Dropout& dropout = {}) const;
  };
  Bound bind(ad::Tape& tape, const ParameterStore& store) const;

  std::size_t in() const { return widths_.front(); }
  std::size_t out() const { return widths_.back(); }
  const std::vector<std::size_t>& weight_indices() const { return w_; }
  const std::vector<std::size_t>& bias_indices() const { return b_; }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> w_;
  std::vector<std::size_t> b_;
};

// Constant column vector filled with `value`.
inline ad::Var filled(ad::Tape& tape, std::size_t n, double value) {
  return tape.constant(ad::Tensor(n, 1, value));
}

}  // namespace tsdiff::nn

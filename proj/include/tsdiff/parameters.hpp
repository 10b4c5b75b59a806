#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsdiff/autodiff.hpp"

namespace tsdiff {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named learnable arrays with matching gradient slots and Adam moments.
class ParameterStore {
 public:
  // Registers a parameter; names must be unique.
  std::size_t add(const std::string& name, ad::Tensor init);

  // Glorot-uniform matrix of shape rows x cols, scaled by `gain`.
  std::size_t add_glorot(const std::string& name, std::size_t rows,
                         std::size_t cols, std::mt19937_64& rng, double gain = 1.0);
  std::size_t add_zeros(const std::string& name, std::size_t rows, std::size_t cols = 1);

  std::size_t size() const noexcept { return values_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  const std::string& name(std::size_t i) const { return names_[i]; }

  const ad::Tensor& value(std::size_t i) const { return values_[i]; }
  ad::Tensor& value(std::size_t i) { return values_[i]; }
  const ad::Tensor& grad(std::size_t i) const { return grads_[i]; }
  ad::Tensor& grad(std::size_t i) { return grads_[i]; }
  std::vector<ad::Tensor>& grads() { return grads_; }

  // Fresh zero gradient buffers shaped like the parameters.
  std::vector<ad::Tensor> zero_like() const;

  void zero_grad();
  double grad_norm() const;
  // Rescales gradients so their global norm is at most max_norm; returns
  // the norm before clipping.
  double clip_grad_norm(double max_norm);

  // One bias-corrected Adam update. Throws NumericalError naming the first
  // parameter whose gradient is not finite; no parameter is modified then.
  void adam_step(const AdamOptions& opts);

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }
  const ad::Tensor& adam_m(std::size_t i) const { return m_[i]; }
  const ad::Tensor& adam_v(std::size_t i) const { return v_[i]; }
  ad::Tensor& adam_m(std::size_t i) { return m_[i]; }
  ad::Tensor& adam_v(std::size_t i) { return v_[i]; }

  std::size_t total_count() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<ad::Tensor> values_;
  std::vector<ad::Tensor> grads_;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace tsdiff

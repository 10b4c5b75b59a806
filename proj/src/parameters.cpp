#include "tsdiff/parameters.hpp"

#include <cmath>

#include "tsdiff/error.hpp"

namespace tsdiff {

std::size_t ParameterStore::add(const std::string& name, ad::Tensor init) {
  if (index_.count(name) != 0) {
    throw DataError("duplicate parameter name '" + name + "'");
  }
  const std::size_t i = values_.size();
  index_.emplace(name, i);
  names_.push_back(name);
  grads_.emplace_back(init.rows(), init.cols());
  m_.emplace_back(init.rows(), init.cols());
  v_.emplace_back(init.rows(), init.cols());
  values_.push_back(std::move(init));
  return i;
}

std::size_t ParameterStore::add_glorot(const std::string& name, std::size_t rows,
                                       std::size_t cols, std::mt19937_64& rng,
                                       double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  ad::Tensor t(rows, cols);
  for (auto& x : t.data()) x = dist(rng);
  return add(name, std::move(t));
}

std::size_t ParameterStore::add_zeros(const std::string& name, std::size_t rows,
                                      std::size_t cols) {
  return add(name, ad::Tensor(rows, cols));
}

std::size_t ParameterStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<ad::Tensor> ParameterStore::zero_like() const {
  std::vector<ad::Tensor> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.emplace_back(v.rows(), v.cols());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& g : grads_) std::fill(g.data().begin(), g.data().end(), 0.0);
}

double ParameterStore::grad_norm() const {
  double acc = 0.0;
  for (const auto& g : grads_)
    for (double x : g.data()) acc += x * x;
  return std::sqrt(acc);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& g : grads_)
      for (double& x : g.data()) x *= f;
  }
  return norm;
}

void ParameterStore::adam_step(const AdamOptions& opts) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    for (double x : grads_[i].data()) {
      if (!std::isfinite(x)) {
        throw NumericalError("non-finite gradient in parameter '" + names_[i] + "'");
      }
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(opts.beta1, t);
  const double bc2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    auto& w = values_[i].data();
    const auto& g = grads_[i].data();
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = opts.beta1 * m[k] + (1.0 - opts.beta1) * g[k];
      v[k] = opts.beta2 * v[k] + (1.0 - opts.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

}  // namespace tsdiff

#pragma once

// Shared helpers for unit and acceptance tests: finite differences, the
// Kolmogorov-Smirnov statistic and small fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/diffusion.hpp"
#include "tsdiff/model.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff::testing {

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Directional check on parameter `index`: compares grad . v with the
// central difference of f along a random unit direction v. `f` must be a
// deterministic function of the store contents.
inline double directional_fd(ParameterStore& store, std::size_t index, const ad::Tensor& grad,
                             const std::function<double()>& f, std::mt19937_64& rng,
                             double eps = 1e-5) {
  ad::Tensor& p = store.value(index);
  std::normal_distribution<double> normal;
  std::vector<double> v(p.size());
  double norm = 0.0;
  for (double& x : v) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  double analytic = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) analytic += grad[i] * v[i];
  const std::vector<double> saved = p.data();
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = saved[i] + eps * v[i];
  const double up = f();
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = saved[i] - eps * v[i];
  const double down = f();
  p.data() = saved;
  return rel_err(analytic, (up - down) / (2.0 * eps));
}

// Gradient check for a function of plain leaf tensors built on a tape.
// Returns the largest relative error over all inputs (directional).
inline double leaf_fd(std::vector<ad::Tensor> inputs,
                      const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& f,
                      std::uint64_t seed = 7, double eps = 1e-6) {
  auto eval = [&](const std::vector<ad::Tensor>& xs, std::vector<ad::Tensor>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    ad::Var out = f(tape, vars);
    if (grads) {
      auto g = tape.backward(out);
      for (const auto& v : vars) grads->push_back(g.wrt(v));
    }
    return out.scalar();
  };
  std::vector<ad::Tensor> grads;
  eval(inputs, &grads);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> v(inputs[k].size());
    for (double& x : v) x = normal(rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) analytic += grads[k][i] * v[i];
    auto up = inputs, down = inputs;
    for (std::size_t i = 0; i < v.size(); ++i) {
      up[k][i] += eps * v[i];
      down[k][i] -= eps * v[i];
    }
    const double numeric = (eval(up, nullptr) - eval(down, nullptr)) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic, numeric));
  }
  return worst;
}

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  ad::Tensor t(rows, cols);
  for (double& x : t.data()) x = normal(rng);
  return t;
}

// Two-sided one-sample KS statistic against a CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic Kolmogorov distribution p-value with the Stephens correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline EventSequence make_sequence(double t_max, std::vector<double> times,
                                   std::vector<std::vector<double>> xs,
                                   std::vector<std::vector<std::uint8_t>> masks = {}) {
  EventSequence s;
  s.t_max = t_max;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Event e;
    e.t = times[i];
    e.x = xs[i];
    e.mask = masks.empty() ? std::vector<std::uint8_t>(e.x.size(), 1) : masks[i];
    for (std::size_t j = 0; j < e.x.size(); ++j)
      if (e.mask[j] == 0) e.x[j] = 0.0;
    s.events.push_back(std::move(e));
  }
  return s;
}

// Small model for fast tests; the solver step is explicit so the grids
// stay coarse.
inline Model small_model(std::size_t dim, std::size_t hidden = 4, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.model.dim = dim;
  cfg.model.hidden = hidden;
  cfg.model.attention_layers = 2;
  cfg.model.noise_hidden = 6;
  cfg.model.step_embedding = 4;
  cfg.model.diffusion_steps = 20;
  cfg.model.solver_step = 0.25;
  cfg.model.time_scale = 2.0;
  cfg.seed = seed;
  return Model::create(cfg);
}

// Zeroes every parameter whose name starts with `prefix`.
inline void zero_params(ParameterStore& store, const std::string& prefix) {
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.name(i).rfind(prefix, 0) == 0)
      for (double& v : store.value(i).data()) v = 0.0;
}

// Fits a noise net alone on draws from `sample`, averaging the diffusion
// loss over `batch` draws per Adam step.
inline void fit_noise_net(const NoiseNet& net, ParameterStore& store, const DiffusionSchedule& sched,
                          const std::function<std::vector<double>(std::mt19937_64&)>& sample,
                          std::size_t iterations, std::size_t batch, double lr, std::mt19937_64& rng,
                          bool decay = false) {
  AdamOptions opts;
  opts.lr = lr;
  for (std::size_t it = 0; it < iterations; ++it) {
    // Linear decay to zero settles the last iterates.
    if (decay) opts.lr = lr * (1.0 - static_cast<double>(it) / static_cast<double>(iterations));
    store.zero_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      ad::Tape tape;
      auto bound = net.bind(tape, store);
      NoisePredictor pred = [&](ad::Tape& t, ad::Var h, std::size_t k) {
        return net.predict(bound, t, h, k);
      };
      ad::Var h0 = tape.constant(sample(rng));
      ad::Var loss = ad::scale(diffusion_loss(tape, h0, sched, pred, rng), 1.0 / batch);
      tape.backward(loss).accumulate_params(store.grads());
    }
    store.adam_step(opts);
  }
}

}  // namespace tsdiff::testing

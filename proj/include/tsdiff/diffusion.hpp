#pragma once

// DDPM over the latent vector: closed-form forward noising, the noise
// predictor eps_q(h, k) and ancestral reverse sampling.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/nn.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff {

// Index k runs over 1..L; slot 0 holds the alpha_bar_0 = 1 convention.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  static DiffusionSchedule linear(std::size_t steps, double beta_start, double beta_end);
  static DiffusionSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const noexcept { return beta_.empty() ? 0 : beta_.size() - 1; }
  double beta(std::size_t k) const { return beta_.at(check(k)); }
  double alpha(std::size_t k) const { return alpha_.at(check(k)); }
  double alpha_bar(std::size_t k) const { return alpha_bar_.at(k); }
  // beta_k (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k)
  double posterior_variance(std::size_t k) const;

 private:
  std::size_t check(std::size_t k) const;
  std::vector<double> beta_, alpha_, alpha_bar_;
};

// sin/cos features of the step index, `width` even.
std::vector<double> step_embedding(std::size_t k, std::size_t width);

// eps_q(h_k, k) evaluated on a tape.
using NoisePredictor = std::function<ad::Var(ad::Tape&, ad::Var, std::size_t)>;

class NoiseNet {
 public:
  NoiseNet() = default;
  NoiseNet(ParameterStore& store, std::size_t width, std::size_t hidden, std::size_t embed,
           std::mt19937_64& rng, const std::string& prefix = "eps");

  struct Bound {
    nn::Mlp::Bound mlp;
    nn::Dropout dropout;
  };
  Bound bind(ad::Tape& tape, const ParameterStore& store, nn::Dropout dropout = {}) const;
  ad::Var predict(const Bound& b, ad::Tape& tape, ad::Var h, std::size_t k) const;
  // Deterministic predictor reading parameters from `store` on each call.
  NoisePredictor predictor(const ParameterStore& store) const;

  std::size_t width() const { return width_; }
  const nn::Mlp& mlp() const { return mlp_; }

 private:
  std::size_t width_ = 0, embed_ = 0;
  nn::Mlp mlp_;
};

std::vector<double> q_sample(std::span<const double> h0, std::size_t k,
                             std::span<const double> eps, const DiffusionSchedule& sched);
ad::Var q_sample(ad::Var h0, std::size_t k, std::span<const double> eps,
                 const DiffusionSchedule& sched);

// || eps - eps_q(sqrt(ab_k) h0 + sqrt(1 - ab_k) eps, k) ||^2 with
// k ~ U{1..L} and eps ~ N(0, I) drawn from `rng`.
ad::Var diffusion_loss(ad::Tape& tape, ad::Var h0, const DiffusionSchedule& sched,
                       const NoisePredictor& net, std::mt19937_64& rng);

std::vector<double> denoise_step(std::span<const double> h_k, std::size_t k,
                                 const DiffusionSchedule& sched, const NoisePredictor& net,
                                 std::mt19937_64& rng);

// h_L ~ N(0, I), then denoise_step for k = L..1.
std::vector<double> sample_latent(std::size_t width, const DiffusionSchedule& sched,
                                  const NoisePredictor& net, std::mt19937_64& rng);

}  // namespace tsdiff

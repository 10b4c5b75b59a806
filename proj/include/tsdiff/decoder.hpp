#pragma once

// Continuous-time decoder: o_0 = f_o(s), do/dt = g(o' (+) a_t), where a_t
// attends from the time-sensitive query o'_t over keys x'_i of the events
// already seen (t_i < t). The intensity integral Lambda is carried as one
// extra state coordinate and integrated by the same RK4 steps.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/config.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/nn.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff {

inline constexpr double kHorizonFloor = 1e-3;

struct DecodedPath {
  std::vector<double> breakpoints;
  std::vector<ad::Var> states;             // o on arrival at each breakpoint
  std::vector<double> integral_at;         // Lambda at each breakpoint
  std::vector<ad::Var> event_states;       // o(t_i-) per event
  std::vector<ad::Var> event_intensity;    // lambda(t_i)
  std::vector<ad::Var> event_obs_logprob;  // log p(x_i | t_i, m_i)
  ad::Var integral;                        // Lambda(T)
};

// Sums entering the sequence log-likelihood. temporal = sum log lambda_i
// - Lambda(T), feature = sum log p_i. Training (L1) and evaluation both
// go through this function.
struct LogLikTerms {
  ad::Var temporal;
  ad::Var feature;
};
LogLikTerms sequence_loglik(ad::Tape& tape, const DecodedPath& path);
// L1 = -(temporal + feature).
ad::Var sequence_nll(ad::Tape& tape, const DecodedPath& path);

class Decoder {
 public:
  Decoder() = default;
  Decoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

  struct Bound {
    ad::Tape* tape = nullptr;
    nn::Mlp::Bound f_o, query, key, dynamics, missing, horizon;
    ad::Var w_lambda;  // H
    ad::Var w_p;       // D x H; the mean of x is w_p * o
    nn::Dropout dropout;
  };
  Bound bind(ad::Tape& tape, const ParameterStore& store, nn::Dropout dropout = {}) const;

  ad::Var initial_state(const Bound& b, ad::Var s) const;
  // x'_i from the encoder representation x~_i and its time.
  ad::Var key(const Bound& b, ad::Var x_repr, double t) const;
  // do/dt given the stacked keys (N x H) and which of them are visible.
  // `keys` may be invalid when no event has been seen.
  ad::Var dynamics(const Bound& b, ad::Var o, double t, ad::Var keys,
                   std::span<const std::uint8_t> visible) const;
  ad::Var intensity(const Bound& b, ad::Var o) const;
  ad::Var predicted_mean(const Bound& b, ad::Var o) const;
  ad::Var obs_logprob(const Bound& b, std::span<const double> x,
                      std::span<const std::uint8_t> mask, ad::Var o) const;
  // Pre-sigmoid missingness logits z; m^ = sigmoid(z).
  ad::Var missing_logits(const Bound& b, ad::Var o, double t) const;
  ad::Var horizon_mean(const Bound& b, ad::Var s) const;

  // Teacher-forced decoding over [0, seq.t_max]. `event_repr` holds x~_i
  // for every event of `seq`.
  DecodedPath decode_path(const Bound& b, ad::Var s, const EventSequence& seq,
                          std::span<const ad::Var> event_repr, double step = 0.0) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  nn::Mlp f_o_, query_, key_, dynamics_, missing_, horizon_;
  std::size_t w_lambda_ = 0, w_p_ = 0;
};

// Masked Gaussian log-density with identity covariance over observed
// coordinates. Throws DataError when every coordinate is masked.
double obs_logprob_value(std::span<const double> x, std::span<const std::uint8_t> mask,
                         std::span<const double> mean);

// T^ ~ N(mu, sigma) redrawn until it reaches the floor; after `max_tries`
// rejections the floor itself is returned. `sigma` is a variance when
// `sigma_is_variance`, otherwise a standard deviation.
double sample_horizon(double mu, double sigma, bool sigma_is_variance, std::mt19937_64& rng,
                      std::size_t max_tries = 1000);

}  // namespace tsdiff

#pragma once

// Self-attentive jump-ODE encoder.
//
// Each event is turned into D feature tokens (one per dimension), mixed by
// a stack of masked attention layers and pooled into one representation
// x~_i. A backward-in-time neural ODE, started at t_max from a learned
// vector, absorbs the events through LSTM jumps; its state at t = 0 is the
// latent s. Missing cells are multiplied by their zero mask before any
// arithmetic and receive zero attention weight, so s depends on observed
// cells and masks only.

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

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

  struct Bound {
    ad::Tape* tape = nullptr;
    ad::Var embeddings;  // D x U, row j is u_j
    nn::Mlp::Bound combine;
    std::vector<ad::Var> q, k, v;
    ad::Var initial_state;
    nn::Mlp::Bound dynamics;
    ad::Var lstm_in, lstm_hidden, lstm_bias;
    nn::Dropout dropout;
  };
  Bound bind(ad::Tape& tape, const ParameterStore& store, nn::Dropout dropout = {}) const;

  // Per-dimension tokens e2_j; masked slots see a zero value.
  std::vector<ad::Var> embed_and_combine(const Bound& b, std::span<const double> x,
                                         std::span<const std::uint8_t> mask) const;

  // Runs the attention stack and returns the pooled event vector x~.
  ad::Var attention_stack(const Bound& b, std::vector<ad::Var> tokens,
                          std::span<const std::uint8_t> mask) const;

  ad::Var represent(const Bound& b, std::span<const double> x,
                    std::span<const std::uint8_t> mask) const;

  struct Encoding {
    ad::Var latent;                     // s = state at t = 0
    std::vector<ad::Var> event_repr;    // x~_i in event order
  };
  // `step` <= 0 selects the default grid step for the sequence.
  Encoding encode(const Bound& b, const EventSequence& seq, double step = 0.0) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::size_t embeddings_ = 0;
  nn::Mlp combine_;
  std::vector<std::size_t> q_, k_, v_;
  std::size_t initial_state_ = 0;
  nn::Mlp dynamics_;
  std::size_t lstm_in_ = 0, lstm_hidden_ = 0, lstm_bias_ = 0;
};

}  // namespace tsdiff

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/model.hpp"

namespace tsdiff {

struct LossBreakdown {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, total = 0.0;
};

double weighted_total(const std::array<double, 4>& weights, const LossBreakdown& l);

// Taped loss terms for one sequence. Terms whose weight is zero are still
// evaluated for logging but left out of `total`.
struct HybridLoss {
  ad::Var l1, l2, l3, l4, total;
  LossBreakdown values;
};

// L3 = (t_N (1 + delta) - mu)^2.
ad::Var horizon_loss(ad::Var mu, double t_last, double delta);
// Bernoulli cross-entropy sum_j m_j softplus(-z_j) + (1 - m_j) softplus(z_j),
// i.e. minus the log-likelihood of the observed mask under sigmoid(z).
ad::Var missingness_loss(ad::Var logits, std::span<const std::uint8_t> mask);

// `training` enables dropout and the k_reg noising of s. Randomness (the
// diffusion step and noise, the k_reg noise, dropout) comes from `rng`.
HybridLoss hybrid_loss(const Model& model, ad::Tape& tape, const EventSequence& seq,
                       std::mt19937_64& rng, bool training = true);

struct TrainOptions {
  std::filesystem::path checkpoint;  // empty: no checkpoints
  std::filesystem::path metrics;     // empty: no CSV
  // Called after each epoch with the epoch number (1-based) and the mean
  // losses over its sequences.
  std::function<void(std::size_t, const LossBreakdown&)> on_epoch;
  // Stop after this epoch even if config.epochs is larger (0: no limit).
  std::size_t stop_after = 0;
};

// Per-sequence rng for (seed, epoch, batch, index in batch).
std::mt19937_64 sequence_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch,
                             std::size_t item);

// Gradient of the mean batch loss, summed over sequences in a fixed order.
// Returns the per-term means. Throws NumericalError naming the sequence
// whose loss is not finite.
LossBreakdown batch_gradient(Model& model, const Dataset& ds,
                             std::span<const std::size_t> batch, std::size_t epoch,
                             std::size_t batch_index);

// One clipped Adam update from the gradients currently in the store.
void apply_update(Model& model);

// Runs epochs model.epoch + 1 .. config.epochs on a standardized dataset.
// Returns the per-epoch losses of this call.
std::vector<LossBreakdown> train(Model& model, const Dataset& ds, const TrainOptions& opts = {});

// CSV header and row for the metrics log.
const char* metrics_header();
std::string metrics_row(std::size_t epoch, const LossBreakdown& l);

}  // namespace tsdiff

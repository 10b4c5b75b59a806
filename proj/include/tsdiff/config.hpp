#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace tsdiff {

// Intermediate encoder attention layers: `cross` is masked attention
// across the feature tokens; `pooled` broadcasts the self-gated pooled
// vector (the final-layer form) back onto every observed token.
enum class AttentionForm { cross, pooled };
enum class NormKind { instance, none };

struct ModelConfig {
  std::size_t dim = 0;       // D, taken from the data
  std::size_t hidden = 128;  // H: encoder state, decoder state, latent width
  std::size_t embed = 0;     // width of the per-dimension embeddings; 0 means H
  std::size_t attention_layers = 3;
  AttentionForm attention_form = AttentionForm::cross;
  NormKind norm = NormKind::instance;
  bool encoder_jumps = true;

  std::size_t diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t noise_hidden = 128;
  std::size_t step_embedding = 32;
  std::size_t k_reg = 5;
  // (k, eps) draws averaged into the diffusion term per sequence.
  std::size_t diffusion_draws = 1;

  double delta = 0.05;
  // Read the horizon spread as a variance (true) or a standard deviation.
  bool horizon_sigma_is_variance = true;

  double solver_step = 0.0;  // 0 selects the per-sequence default rule
  double dropout = 0.1;
  // Time inputs to networks are divided by this; 0 means the mean t_max of
  // the training data, resolved once when the model is built.
  double time_scale = 0.0;

  std::size_t embed_width() const { return embed == 0 ? hidden : embed; }
  double time_unit() const { return time_scale > 0.0 ? time_scale : 1.0; }
};

struct TrainConfig {
  ModelConfig model;
  std::array<double, 4> loss_weights{0.4, 0.4, 0.1, 0.1};
  std::size_t batch_size = 8;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
  std::size_t threads = 1;
};

// Parses `key = value` lines; '#' starts a comment. Unknown keys and
// malformed values throw UsageError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

// Flat key/value view of a config, parseable by parse_config.
std::map<std::string, std::string> config_entries(const TrainConfig& cfg);
std::string format_config(const TrainConfig& cfg);

}  // namespace tsdiff

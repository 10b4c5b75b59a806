#pragma once

#include <cstdint>
#include <filesystem>

#include "tsdiff/config.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/decoder.hpp"
#include "tsdiff/diffusion.hpp"
#include "tsdiff/encoder.hpp"
#include "tsdiff/parameters.hpp"

namespace tsdiff {

// Everything a checkpoint restores: configuration, weights, optimizer
// moments and the data statistics needed at synthesis time.
struct Model {
  TrainConfig config;
  ParameterStore store;
  Encoder encoder;
  Decoder decoder;
  NoiseNet noise;
  DiffusionSchedule schedule;
  Standardization standardization;
  double horizon_variance = 0.0;
  std::size_t epoch = 0;  // completed training epochs

  // Parameters are initialized from `config.seed`. config.model.dim and a
  // positive time_scale must already be set.
  static Model create(const TrainConfig& config);

  // Fills dim, time_scale (when 0), standardization and horizon variance
  // from a standardized training set, then creates the model.
  static Model for_dataset(TrainConfig config, const Dataset& standardized);

  const ModelConfig& model_config() const { return config.model; }
  NoisePredictor noise_predictor() const { return noise.predictor(store); }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace tsdiff

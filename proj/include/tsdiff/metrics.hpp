#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/decoder.hpp"
#include "tsdiff/model.hpp"

namespace tsdiff {

// --- log-likelihood scores ----------------------------------------------------

struct Scores {
  double temporal = 0.0;  // (sum log lambda_i - Lambda(T)) / N
  double feature = 0.0;   // sum log p(x_i | t_i) / N
};

// Per-observation scores of one decoded sequence (N >= 1).
Scores path_scores(ad::Tape& tape, const DecodedPath& path);

// Mean over sequences with at least one event of the per-observation
// scores. `standardized` must use the model's standardization table.
// The latent is the encoder output without noise or dropout.
Scores eval_scores(const Model& model, const Dataset& standardized);

// --- PRD ----------------------------------------------------------------------

struct PrdOptions {
  std::size_t clusters = 20;
  std::size_t restarts = 5;
  std::size_t lambdas = 51;
  double lambda_min = 1e-2;
  double lambda_max = 1e2;
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;
};

struct PrdCurve {
  std::vector<double> lambda;
  std::vector<double> precision;  // alpha(lambda)
  std::vector<double> recall;     // beta(lambda)
  double max_precision() const;
  double max_recall() const;
  // Largest min(precision, recall) along the curve.
  double balanced() const;
};

// Summary vector per sequence: event count, mean inter-arrival time
// (t_N / N, or t_max without events) and per-dimension mean of observed
// marks (0 when a dimension is never observed).
std::vector<std::vector<double>> prd_features(const Dataset& ds);

PrdCurve prd_curve(const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake, const PrdOptions& opts = {});

// Best-of-restarts Lloyd k-means; returns labels for `points`.
std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                                std::size_t restarts, std::size_t max_iterations,
                                std::uint64_t seed, double* inertia = nullptr);

// --- TFC ------------------------------------------------------------------------

struct TfcResult {
  double score = 0.0;
  std::vector<std::string> warnings;
};
// Mean over dimensions of |Pearson(t, x_j)| on observed cells. A dimension
// with zero variance contributes 0 and a warning.
TfcResult tfc_score(const Dataset& ds);

// --- durations --------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;  // bins + 1 ascending edges
  std::vector<std::size_t> counts;
  std::size_t total() const;
};

// Values outside the edges fall into the first or last bin.
Histogram histogram(std::span<const double> values, std::vector<double> edges);
std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);
double total_variation(const Histogram& a, const Histogram& b);

struct DurationStats {
  std::vector<double> durations;  // t_N - t_0 per sequence with events
  double mean = 0.0;
  double variance = 0.0;
  Histogram histogram;
};
DurationStats duration_stats(const Dataset& ds, std::size_t bins);
DurationStats duration_stats(const Dataset& ds, std::vector<double> edges);

// --- report ---------------------------------------------------------------------

struct EvalReport {
  Scores scores;
  std::size_t sequences = 0;
  std::size_t events = 0;
  TfcResult tfc;
  DurationStats durations;
  std::optional<PrdCurve> prd;
  std::optional<TfcResult> synth_tfc;
  std::optional<DurationStats> synth_durations;
  std::optional<double> duration_tv;
};

std::string report_json(const EvalReport& report);
std::string prd_csv(const PrdCurve& curve);
std::string durations_csv(const EvalReport& report);

}  // namespace tsdiff

#pragma once

// Synthesis by thinning. The thinning loop only talks to an
// IntensityProcess, so it runs unchanged over the trained decoder and over
// closed-form stubs.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tsdiff/data.hpp"
#include "tsdiff/model.hpp"

namespace tsdiff {

class IntensityProcess {
 public:
  virtual ~IntensityProcess() = default;
  virtual double time() const = 0;
  // Moves the state forward to t >= time() with no event in between.
  virtual void advance_to(double t) = 0;
  virtual double intensity() = 0;
  // lambda at each of `times` (ascending, >= time()); the state is unchanged.
  virtual std::vector<double> lookahead(std::span<const double> times) = 0;
  // Records an event at time() and conditions the process on it.
  virtual void accept(std::mt19937_64& rng) = 0;
};

struct ThinningOptions {
  double window_fraction = 1.0 / 20.0;  // W = horizon * window_fraction
  std::size_t bound_points = 64;
  double safety = 1.5;
  std::size_t max_events = 100000;
};

struct ThinningStats {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t violations = 0;  // proposals where lambda exceeded the bound
  ThinningStats& operator+=(const ThinningStats& o) {
    proposed += o.proposed;
    accepted += o.accepted;
    violations += o.violations;
    return *this;
  }
  double violation_rate() const {
    return proposed == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(proposed);
  }
};

inline constexpr double kMaxViolationRate = 1e-3;

// Thinning over [process.time(), horizon]: homogeneous proposals at the
// window bound, accepted with probability lambda(t*) / bound. The bound is
// recomputed at each window start and after every accepted event.
ThinningStats thinning_generate(IntensityProcess& process, double horizon, std::mt19937_64& rng,
                                const ThinningOptions& opts = {});

// Constant-rate stub; accepted times are collected in `times`.
class ConstantIntensity : public IntensityProcess {
 public:
  explicit ConstantIntensity(double rate) : rate_(rate) {}
  double time() const override { return t_; }
  void advance_to(double t) override { t_ = t; }
  double intensity() override { return rate_; }
  std::vector<double> lookahead(std::span<const double> times) override {
    return std::vector<double>(times.size(), rate_);
  }
  void accept(std::mt19937_64&) override { times.push_back(t_); }
  std::vector<double> times;

 private:
  double rate_;
  double t_ = 0.0;
};

// The trained decoder driven forward in time from latent h0. Marks are
// drawn in standardized space; every accepted event is complete (all-ones
// mask) for conditioning, while the emitted mask is drawn from m^.
class DecoderProcess : public IntensityProcess {
 public:
  DecoderProcess(const Model& model, std::span<const double> latent, double horizon,
                 bool emit_missing);
  double time() const override { return t_; }
  void advance_to(double t) override;
  double intensity() override;
  std::vector<double> lookahead(std::span<const double> times) override;
  void accept(std::mt19937_64& rng) override;

  // Accepted events so far (standardized marks).
  EventSequence sequence() const;

 private:
  std::vector<double> rhs(const std::vector<double>& o, double t, ad::Tape& tape) const;
  std::vector<double> integrate(std::vector<double> o, double from, double to,
                                ad::Tape& tape) const;
  double intensity_of(const std::vector<double>& o, ad::Tape& tape) const;

  const Model& model_;
  double horizon_, step_, t_ = 0.0;
  bool emit_missing_;
  std::vector<double> o_;
  std::vector<double> keys_;  // accepted events' x' rows, row-major
  std::size_t n_keys_ = 0;
  std::vector<Event> events_;
  ad::Tape tape_;
};

struct SynthesisResult {
  Dataset data;  // raw units (standardization undone)
  ThinningStats stats;
};

// n samples: latent draw -> horizon draw -> thinning. Sample i uses its own
// rng seeded from (seed, i). Throws NumericalError when the bound-violation
// rate exceeds kMaxViolationRate.
SynthesisResult synthesize(const Model& model, std::size_t n, std::uint64_t seed,
                           bool emit_missing, std::size_t threads = 1);

}  // namespace tsdiff

#pragma once

// Ground-truth marked point processes with closed-form likelihoods.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/decoder.hpp"

namespace tsdiff {

enum class OracleKind { homogeneous, sinusoidal, hawkes };

OracleKind parse_oracle_kind(const std::string& name);
const char* oracle_kind_name(OracleKind kind);

struct OracleSpec {
  OracleKind kind = OracleKind::homogeneous;
  double rate = 2.0;  // homogeneous c
  double mu = 2.0;    // sinusoidal base
  double amplitude = 1.0;
  double period = 10.0;
  double hawkes_mu = 1.0;
  double hawkes_alpha = 0.5;
  double hawkes_beta = 1.0;
  double horizon = 10.0;
  std::size_t dim = 2;
  // Designed correlation between t and dimension j; missing entries are 0.
  std::vector<double> rho{0.6};
  double missing_rate = 0.0;

  // Throws UsageError on an unstable or malformed specification.
  void validate() const;
  double rho_at(std::size_t j) const { return j < rho.size() ? rho[j] : 0.0; }
};

// lambda(t) given the events strictly before t.
double oracle_intensity(const OracleSpec& spec, double t, std::span<const double> before);
// int_0^T lambda for the given event times.
double oracle_compensator(const OracleSpec& spec, std::span<const double> times, double horizon);
// sum log lambda(t_i) - int_0^T lambda.
double oracle_loglik(const OracleSpec& spec, const EventSequence& seq);

// Event times on [0, horizon]: exponential gaps, exact thinning with bound
// mu + a, or Ogata thinning for Hawkes.
std::vector<double> oracle_times(const OracleSpec& spec, std::mt19937_64& rng);

// n sequences. Marks: x_j = rho_j z(t) + sqrt(1 - rho_j^2) eps, with z the
// time standardized by the pooled moments of all generated times, so the
// pooled Pearson correlation of (t, x_j) is rho_j in expectation. MCAR
// masking at spec.missing_rate follows.
Dataset gen_oracle(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng);
Dataset gen_homogeneous(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng);
Dataset gen_sinusoidal(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng);
Dataset gen_hawkes(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng);

// A decoded path whose intensity is a known function instead of the
// network: lambda_i at each event's left limit and Lambda(T) by the same
// RK4 runtime with the events as breakpoints. The feature terms are left
// empty. Used to check the likelihood code against closed forms.
using IntensityFn = std::function<double(double, std::span<const double>)>;
DecodedPath stub_path(ad::Tape& tape, const EventSequence& seq, const IntensityFn& lambda,
                      double step);

}  // namespace tsdiff

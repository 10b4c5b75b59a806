#include "tsdiff/oracles.hpp"

#include <cmath>
#include <numbers>

#include "tsdiff/error.hpp"
#include "tsdiff/ode.hpp"

namespace tsdiff {

OracleKind parse_oracle_kind(const std::string& name) {
  if (name == "homogeneous") return OracleKind::homogeneous;
  if (name == "sinusoidal") return OracleKind::sinusoidal;
  if (name == "hawkes") return OracleKind::hawkes;
  throw UsageError("unknown oracle '" + name + "' (homogeneous, sinusoidal, hawkes)");
}

const char* oracle_kind_name(OracleKind kind) {
  switch (kind) {
    case OracleKind::homogeneous: return "homogeneous";
    case OracleKind::sinusoidal: return "sinusoidal";
    case OracleKind::hawkes: return "hawkes";
  }
  return "?";
}

void OracleSpec::validate() const {
  if (!(horizon > 0.0)) throw UsageError("oracle horizon must be positive");
  if (dim == 0) throw UsageError("oracle dimension must be positive");
  for (double r : rho)
    if (!(std::abs(r) <= 1.0)) throw UsageError("oracle rho values must lie in [-1, 1]");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
    throw UsageError("missing rate must lie in [0, 1)");
  }
  switch (kind) {
    case OracleKind::homogeneous:
      if (!(rate > 0.0)) throw UsageError("homogeneous rate must be positive");
      break;
    case OracleKind::sinusoidal:
      if (!(mu > 0.0) || !(amplitude >= 0.0) || !(amplitude < mu)) {
        throw UsageError("sinusoidal oracle needs 0 <= a < mu");
      }
      if (!(period > 0.0)) throw UsageError("sinusoidal period must be positive");
      break;
    case OracleKind::hawkes:
      if (!(hawkes_mu > 0.0) || !(hawkes_alpha >= 0.0) || !(hawkes_beta > 0.0)) {
        throw UsageError("hawkes oracle needs mu > 0, alpha >= 0, beta > 0");
      }
      if (!(hawkes_alpha < hawkes_beta)) {
        throw UsageError("hawkes oracle is unstable: alpha must be below beta");
      }
      break;
  }
}

double oracle_intensity(const OracleSpec& spec, double t, std::span<const double> before) {
  switch (spec.kind) {
    case OracleKind::homogeneous:
      return spec.rate;
    case OracleKind::sinusoidal:
      return spec.mu + spec.amplitude * std::sin(2.0 * std::numbers::pi * t / spec.period);
    case OracleKind::hawkes: {
      double l = spec.hawkes_mu;
      for (double ti : before) l += spec.hawkes_alpha * std::exp(-spec.hawkes_beta * (t - ti));
      return l;
    }
  }
  return 0.0;
}

double oracle_compensator(const OracleSpec& spec, std::span<const double> times, double T) {
  switch (spec.kind) {
    case OracleKind::homogeneous:
      return spec.rate * T;
    case OracleKind::sinusoidal: {
      const double w = 2.0 * std::numbers::pi / spec.period;
      return spec.mu * T + spec.amplitude / w * (1.0 - std::cos(w * T));
    }
    case OracleKind::hawkes: {
      double c = spec.hawkes_mu * T;
      for (double ti : times)
        c += spec.hawkes_alpha / spec.hawkes_beta * (1.0 - std::exp(-spec.hawkes_beta * (T - ti)));
      return c;
    }
  }
  return 0.0;
}

double oracle_loglik(const OracleSpec& spec, const EventSequence& seq) {
  const auto times = seq.times();
  double ll = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    ll += std::log(oracle_intensity(spec, times[i], std::span<const double>(times.data(), i)));
  return ll - oracle_compensator(spec, times, seq.t_max);
}

std::vector<double> oracle_times(const OracleSpec& spec, std::mt19937_64& rng) {
  const double T = spec.horizon;
  std::vector<double> out;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double t = 0.0;
  switch (spec.kind) {
    case OracleKind::homogeneous: {
      std::exponential_distribution<double> gap(spec.rate);
      while ((t += gap(rng)) < T) out.push_back(t);
      break;
    }
    case OracleKind::sinusoidal: {
      const double bound = spec.mu + spec.amplitude;
      std::exponential_distribution<double> gap(bound);
      while ((t += gap(rng)) < T)
        if (unif(rng) * bound < oracle_intensity(spec, t, {})) out.push_back(t);
      break;
    }
    case OracleKind::hawkes: {
      // Excitation decays between events, so lambda(t+) bounds the future
      // until the next accepted event.
      double excite = 0.0, last = 0.0;
      while (true) {
        const double bound = spec.hawkes_mu + excite * std::exp(-spec.hawkes_beta * (t - last));
        t += std::exponential_distribution<double>(bound)(rng);
        if (t >= T) break;
        const double ex_t = excite * std::exp(-spec.hawkes_beta * (t - last));
        if (unif(rng) * bound < spec.hawkes_mu + ex_t) {
          excite = ex_t + spec.hawkes_alpha;
          last = t;
          out.push_back(t);
        } else {
          excite = ex_t;
          last = t;
        }
      }
      break;
    }
  }
  return out;
}

Dataset gen_oracle(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng) {
  spec.validate();
  std::vector<std::vector<double>> times(n);
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (auto& ts : times) {
    ts = oracle_times(spec, rng);
    for (double t : ts) {
      sum += t;
      sum2 += t * t;
      ++count;
    }
  }
  const double mean = count ? sum / static_cast<double>(count) : 0.0;
  const double var = count ? sum2 / static_cast<double>(count) - mean * mean : 0.0;
  const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;

  std::normal_distribution<double> normal;
  Dataset ds;
  ds.sequences.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    ds.sequences[s].t_max = spec.horizon;
    for (double t : times[s]) {
      Event e;
      e.t = t;
      e.x.resize(spec.dim);
      e.mask.assign(spec.dim, 1);
      const double z = (t - mean) / sd;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double r = spec.rho_at(j);
        e.x[j] = r * z + std::sqrt(1.0 - r * r) * normal(rng);
      }
      ds.sequences[s].events.push_back(std::move(e));
    }
  }
  if (spec.missing_rate > 0.0) ds = inject_missing_mcar(ds, spec.missing_rate, rng());
  ds.horizon_variance = horizon_variance(ds.sequences);
  return ds;
}

Dataset gen_homogeneous(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng) {
  OracleSpec s = spec;
  s.kind = OracleKind::homogeneous;
  return gen_oracle(s, n, rng);
}

Dataset gen_sinusoidal(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng) {
  OracleSpec s = spec;
  s.kind = OracleKind::sinusoidal;
  return gen_oracle(s, n, rng);
}

Dataset gen_hawkes(const OracleSpec& spec, std::size_t n, std::mt19937_64& rng) {
  OracleSpec s = spec;
  s.kind = OracleKind::hawkes;
  return gen_oracle(s, n, rng);
}

DecodedPath stub_path(ad::Tape& tape, const EventSequence& seq, const IntensityFn& lambda,
                      double step) {
  const auto times = seq.times();
  const auto grid = ode::IntegrationGrid::make(0.0, seq.t_max, times, step);
  const auto& bp = grid.breakpoints;
  std::vector<std::size_t> seen(grid.intervals(), 0);
  for (std::size_t k = 0; k < grid.intervals(); ++k)
    while (seen[k] < times.size() && times[seen[k]] <= bp[k]) ++seen[k];

  auto rhs = [&](const std::vector<double>&, double t, std::size_t k) {
    return std::vector<double>{lambda(t, std::span<const double>(times.data(), seen[k]))};
  };
  auto traj = ode::integrate_with_jumps<std::vector<double>>({0.0}, rhs, {}, grid);

  DecodedPath path;
  path.breakpoints = bp;
  for (const auto& st : traj.arrival) path.integral_at.push_back(st[0]);
  path.integral = tape.scalar(traj.final_state()[0]);
  for (std::size_t i = 0; i < times.size(); ++i)
    path.event_intensity.push_back(
        tape.scalar(lambda(times[i], std::span<const double>(times.data(), i))));
  return path;
}

}  // namespace tsdiff

#include "tsdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "tsdiff/error.hpp"
#include "tsdiff/ode.hpp"

namespace tsdiff {

ThinningStats thinning_generate(IntensityProcess& process, double horizon, std::mt19937_64& rng,
                                const ThinningOptions& opts) {
  ThinningStats stats;
  if (!(horizon > 0.0)) return stats;
  const double window = horizon * opts.window_fraction;
  const std::size_t m = std::max<std::size_t>(2, opts.bound_points);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> grid(m);

  double t = process.time();
  while (t < horizon) {
    const double w_end = std::min(t + window, horizon);
    for (std::size_t i = 0; i < m; ++i)
      grid[i] = t + (w_end - t) * static_cast<double>(i) / static_cast<double>(m - 1);
    grid.back() = w_end;
    const auto lam = process.lookahead(grid);
    double bound = opts.safety * *std::max_element(lam.begin(), lam.end());

    if (!(bound > 0.0)) {
      process.advance_to(w_end);
      t = w_end;
      continue;
    }
    std::exponential_distribution<double> gap(bound);
    bool accepted = false;
    while (true) {
      const double cand = t + gap(rng);
      if (cand >= w_end) {
        process.advance_to(w_end);
        t = w_end;
        break;
      }
      process.advance_to(cand);
      t = cand;
      ++stats.proposed;
      const double l = process.intensity();
      if (l > bound) {
        // Bound too low: the draw is kept and the bound raised for the rest
        // of the window.
        ++stats.violations;
        bound = opts.safety * l;
        gap = std::exponential_distribution<double>(bound);
        accepted = true;
      } else {
        accepted = unif(rng) * bound < l;
      }
      if (accepted) break;
    }
    if (accepted) {
      process.accept(rng);
      if (++stats.accepted > opts.max_events) {
        throw NumericalError("thinning exceeded " + std::to_string(opts.max_events) +
                             " events; intensity is running away");
      }
    }
  }
  return stats;
}

// --- decoder process --------------------------------------------------------

DecoderProcess::DecoderProcess(const Model& model, std::span<const double> latent,
                               double horizon, bool emit_missing)
    : model_(model), horizon_(horizon), emit_missing_(emit_missing) {
  const ModelConfig& cfg = model.model_config();
  step_ = cfg.solver_step > 0.0 ? cfg.solver_step : 0.01 * horizon;
  auto db = model.decoder.bind(tape_, model.store);
  ad::Var s = tape_.constant(std::vector<double>(latent.begin(), latent.end()));
  o_ = model.decoder.initial_state(db, s).value().data();
  tape_.clear();
}

std::vector<double> DecoderProcess::rhs(const std::vector<double>& o, double t,
                                        ad::Tape& tape) const {
  tape.clear();
  auto db = model_.decoder.bind(tape, model_.store);
  ad::Var keys;
  std::vector<std::uint8_t> visible(n_keys_, 1);
  if (n_keys_ > 0) {
    ad::Tensor k(n_keys_, model_.model_config().hidden);
    k.data() = keys_;
    keys = tape.constant(std::move(k));
  }
  return model_.decoder.dynamics(db, tape.constant(o), t, keys, visible).value().data();
}

std::vector<double> DecoderProcess::integrate(std::vector<double> o, double from, double to,
                                              ad::Tape& tape) const {
  if (!(to > from)) return o;
  const auto grid = ode::IntegrationGrid::make(from, to, {}, step_);
  auto f = [&](const std::vector<double>& s, double t, std::size_t) { return rhs(s, t, tape); };
  return ode::integrate_with_jumps<std::vector<double>>(std::move(o), f, {}, grid).final_state();
}

double DecoderProcess::intensity_of(const std::vector<double>& o, ad::Tape& tape) const {
  tape.clear();
  auto db = model_.decoder.bind(tape, model_.store);
  return model_.decoder.intensity(db, tape.constant(o)).scalar();
}

void DecoderProcess::advance_to(double t) {
  if (t < t_) throw DataError("decoder process cannot move backward in time");
  o_ = integrate(std::move(o_), t_, t, tape_);
  t_ = t;
}

double DecoderProcess::intensity() { return intensity_of(o_, tape_); }

std::vector<double> DecoderProcess::lookahead(std::span<const double> times) {
  std::vector<double> out;
  out.reserve(times.size());
  std::vector<double> o = o_;
  double at = t_;
  for (double t : times) {
    o = integrate(std::move(o), at, t, tape_);
    at = std::max(at, t);
    out.push_back(intensity_of(o, tape_));
  }
  return out;
}

void DecoderProcess::accept(std::mt19937_64& rng) {
  const ModelConfig& cfg = model_.model_config();
  const std::size_t d = cfg.dim;
  tape_.clear();
  auto db = model_.decoder.bind(tape_, model_.store);
  ad::Var o = tape_.constant(o_);
  const ad::Tensor mean = model_.decoder.predicted_mean(db, o).value();
  const ad::Tensor logits = model_.decoder.missing_logits(db, o, t_).value();

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Event e;
  e.t = t_;
  e.x.resize(d);
  e.mask.assign(d, 1);
  for (std::size_t j = 0; j < d; ++j) e.x[j] = mean[j] + normal(rng);
  // m^_j is the probability that cell j is observed, as in the training loss.
  std::vector<std::uint8_t> drawn(d);
  std::size_t best = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const double p = ad::sigmoid(logits[j]);
    drawn[j] = unif(rng) < p ? 1 : 0;
    if (logits[j] > logits[best]) best = j;
  }
  if (std::find(drawn.begin(), drawn.end(), 1) == drawn.end()) drawn[best] = 1;

  // Condition later dynamics on the complete event.
  auto eb = model_.encoder.bind(tape_, model_.store);
  ad::Var repr = model_.encoder.represent(eb, e.x, e.mask);
  const std::vector<double> key = model_.decoder.key(db, repr, t_).value().data();
  keys_.insert(keys_.end(), key.begin(), key.end());
  ++n_keys_;

  if (emit_missing_) {
    e.mask = drawn;
    for (std::size_t j = 0; j < d; ++j)
      if (e.mask[j] == 0) e.x[j] = 0.0;
  }
  if (!events_.empty() && !(events_.back().t < e.t)) return;  // measure-zero tie
  events_.push_back(std::move(e));
}

EventSequence DecoderProcess::sequence() const { return {horizon_, events_}; }

// --- end-to-end synthesis ---------------------------------------------------

SynthesisResult synthesize(const Model& model, std::size_t n, std::uint64_t seed,
                           bool emit_missing, std::size_t threads) {
  const ModelConfig& cfg = model.model_config();
  std::vector<EventSequence> seqs(n);
  std::vector<ThinningStats> stats(n);
  std::vector<std::exception_ptr> errors(n);
  const NoisePredictor net = model.noise_predictor();

  auto work = [&](std::size_t i) {
    try {
      std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(i), 0x51u};
      std::mt19937_64 rng(ss);
      const auto h0 = sample_latent(cfg.hidden, model.schedule, net, rng);
      ad::Tape tape;
      auto db = model.decoder.bind(tape, model.store);
      const double mu = model.decoder.horizon_mean(db, tape.constant(h0)).scalar();
      const double horizon =
          sample_horizon(mu, model.horizon_variance, cfg.horizon_sigma_is_variance, rng);
      DecoderProcess proc(model, h0, horizon, emit_missing);
      stats[i] = thinning_generate(proc, horizon, rng);
      seqs[i] = proc.sequence();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) work(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SynthesisResult out;
  for (const auto& s : stats) out.stats += s;
  if (out.stats.violation_rate() > kMaxViolationRate) {
    std::ostringstream os;
    os << "thinning bound violated on " << out.stats.violations << " of " << out.stats.proposed
       << " proposals (rate " << out.stats.violation_rate() << " > " << kMaxViolationRate << ")";
    throw NumericalError(os.str());
  }
  Dataset ds;
  ds.sequences = std::move(seqs);
  ds.standardization = model.standardization;
  out.data = inverse_standardize(ds);
  out.data.horizon_variance = horizon_variance(out.data.sequences);
  return out;
}

}  // namespace tsdiff

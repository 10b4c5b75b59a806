#include "tsdiff/decoder.hpp"

#include <cmath>
#include <numbers>

#include "tsdiff/error.hpp"
#include "tsdiff/ode.hpp"

namespace tsdiff {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

LogLikTerms sequence_loglik(ad::Tape& tape, const DecodedPath& path) {
  if (!path.integral.valid()) throw DataError("decoded path has no intensity integral");
  ad::Var temporal = ad::neg(path.integral);
  ad::Var feature = tape.scalar(0.0);
  for (const auto& lam : path.event_intensity) temporal = ad::add(temporal, ad::log(lam));
  for (const auto& lp : path.event_obs_logprob) feature = ad::add(feature, lp);
  return {temporal, feature};
}

ad::Var sequence_nll(ad::Tape& tape, const DecodedPath& path) {
  auto terms = sequence_loglik(tape, path);
  return ad::neg(ad::add(terms.temporal, terms.feature));
}

Decoder::Decoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const std::size_t h = cfg.hidden, d = cfg.dim;
  f_o_ = nn::Mlp(store, "dec.f_o", {h, h, h}, rng);
  query_ = nn::Mlp(store, "dec.query", {h + 1, h, h}, rng);
  key_ = nn::Mlp(store, "dec.key", {h + 1, h, h}, rng);
  dynamics_ = nn::Mlp(store, "dec.g", {2 * h, h, h}, rng, 0.1);
  w_lambda_ = store.add_glorot("dec.w_lambda", h, 1, rng, 0.5);
  w_p_ = store.add_glorot("dec.w_p", d, h, rng);
  missing_ = nn::Mlp(store, "dec.missing", {h + 1, h, d}, rng);
  horizon_ = nn::Mlp(store, "dec.horizon", {h, h, 1}, rng);
}

Decoder::Bound Decoder::bind(ad::Tape& tape, const ParameterStore& store,
                             nn::Dropout dropout) const {
  Bound b;
  b.tape = &tape;
  b.f_o = f_o_.bind(tape, store);
  b.query = query_.bind(tape, store);
  b.key = key_.bind(tape, store);
  b.dynamics = dynamics_.bind(tape, store);
  b.missing = missing_.bind(tape, store);
  b.horizon = horizon_.bind(tape, store);
  b.w_lambda = tape.param(store, w_lambda_);
  b.w_p = tape.param(store, w_p_);
  b.dropout = dropout;
  return b;
}

ad::Var Decoder::initial_state(const Bound& b, ad::Var s) const { return b.f_o(s, b.dropout); }

ad::Var Decoder::key(const Bound& b, ad::Var x_repr, double t) const {
  return b.key(ad::concat(x_repr, b.tape->scalar(t / cfg_.time_unit())), b.dropout);
}

ad::Var Decoder::dynamics(const Bound& b, ad::Var o, double t, ad::Var keys,
                          std::span<const std::uint8_t> visible) const {
  ad::Var q = b.query(ad::concat(o, b.tape->scalar(t / cfg_.time_unit())));
  bool any = false;
  for (auto v : visible) any = any || v != 0;
  ad::Var a = any ? ad::matvec_t(keys, ad::masked_softmax(ad::matvec(keys, q), visible))
                  : nn::filled(*b.tape, cfg_.hidden, 0.0);
  return b.dynamics(ad::concat(q, a));
}

ad::Var Decoder::intensity(const Bound& b, ad::Var o) const {
  return ad::softplus(ad::dot(b.w_lambda, o));
}

ad::Var Decoder::predicted_mean(const Bound& b, ad::Var o) const { return ad::matvec(b.w_p, o); }

ad::Var Decoder::obs_logprob(const Bound& b, std::span<const double> x,
                             std::span<const std::uint8_t> mask, ad::Var o) const {
  if (x.size() != cfg_.dim || mask.size() != cfg_.dim) {
    throw DataError("observation has the wrong dimension");
  }
  std::vector<double> xm(x.size()), m(x.size());
  double observed = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    m[j] = mask[j] != 0 ? 1.0 : 0.0;
    xm[j] = mask[j] != 0 ? x[j] : 0.0;
    observed += m[j];
  }
  if (observed == 0.0) throw DataError("observation with every dimension missing");
  ad::Var resid = ad::mul_const(ad::sub(b.tape->constant(xm), predicted_mean(b, o)), m);
  return ad::add_scalar(ad::scale(ad::squared_norm(resid), -0.5), -0.5 * observed * kLog2Pi);
}

ad::Var Decoder::missing_logits(const Bound& b, ad::Var o, double t) const {
  return b.missing(ad::concat(b.tape->scalar(t / cfg_.time_unit()), o), b.dropout);
}

ad::Var Decoder::horizon_mean(const Bound& b, ad::Var s) const {
  // Output in units of time_unit so the head starts on the data's scale.
  return ad::scale(b.horizon(s, b.dropout), cfg_.time_unit());
}

DecodedPath Decoder::decode_path(const Bound& b, ad::Var s, const EventSequence& seq,
                                 std::span<const ad::Var> event_repr, double step) const {
  ad::Tape& tape = *b.tape;
  if (event_repr.size() != seq.size()) throw DataError("one representation per event required");
  if (!(seq.t_max > 0.0)) throw DataError("decoding horizon must be positive");
  const std::size_t h = cfg_.hidden, n = seq.size();
  const std::vector<double> times = seq.times();
  if (!(step > 0.0)) step = cfg_.solver_step > 0.0 ? cfg_.solver_step
                                                   : ode::default_step(seq.t_max, times);
  const auto grid = ode::IntegrationGrid::make(0.0, seq.t_max, times, step);
  const auto& bp = grid.breakpoints;

  ad::Var keys;
  if (n > 0) {
    std::vector<ad::Var> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rows.push_back(key(b, event_repr[i], times[i]));
    keys = ad::stack_rows(rows);
  }
  // Events visible while traversing interval k: those with t_i <= bp[k].
  std::vector<std::vector<std::uint8_t>> visible(grid.intervals(), std::vector<std::uint8_t>(n, 0));
  for (std::size_t k = 0; k < grid.intervals(); ++k)
    for (std::size_t i = 0; i < n && times[i] <= bp[k]; ++i) visible[k][i] = 1;

  auto rhs = [&](ad::Var state, double t, std::size_t k) {
    ad::Var o = ad::slice(state, 0, h);
    return ad::concat(dynamics(b, o, t, keys, visible[k]), intensity(b, o));
  };

  ad::Var state0 = ad::concat(initial_state(b, s), tape.scalar(0.0));
  auto traj = ode::integrate_with_jumps<ad::Var>(state0, rhs, {}, grid);

  DecodedPath path;
  path.breakpoints = bp;
  for (const auto& st : traj.arrival) {
    path.states.push_back(ad::slice(st, 0, h));
    path.integral_at.push_back(st.value()[h]);
  }
  path.integral = ad::slice(traj.final_state(), h, 1);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (bp[k] != times[i]) ++k;
    ad::Var o = path.states[k];
    path.event_states.push_back(o);
    path.event_intensity.push_back(intensity(b, o));
    path.event_obs_logprob.push_back(obs_logprob(b, seq.events[i].x, seq.events[i].mask, o));
  }
  return path;
}

double obs_logprob_value(std::span<const double> x, std::span<const std::uint8_t> mask,
                         std::span<const double> mean) {
  double observed = 0.0, ss = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (mask[j] == 0) continue;
    observed += 1.0;
    const double r = x[j] - mean[j];
    ss += r * r;
  }
  if (observed == 0.0) throw DataError("observation with every dimension missing");
  return -0.5 * ss - 0.5 * observed * kLog2Pi;
}

double sample_horizon(double mu, double sigma, bool sigma_is_variance, std::mt19937_64& rng,
                      std::size_t max_tries) {
  if (!(sigma >= 0.0) || !std::isfinite(mu)) throw NumericalError("invalid horizon distribution");
  const double sd = sigma_is_variance ? std::sqrt(sigma) : sigma;
  if (sd == 0.0) return std::max(mu, kHorizonFloor);
  std::normal_distribution<double> normal(mu, sd);
  for (std::size_t i = 0; i < max_tries; ++i) {
    const double t = normal(rng);
    if (t >= kHorizonFloor) return t;
  }
  return kHorizonFloor;
}

}  // namespace tsdiff

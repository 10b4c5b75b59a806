#include "tsdiff/encoder.hpp"

#include <cmath>

#include "tsdiff/error.hpp"
#include "tsdiff/ode.hpp"

namespace tsdiff {

Encoder::Encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const std::size_t d = cfg.dim, h = cfg.hidden, u = cfg.embed_width();
  if (d == 0 || h == 0) throw DataError("encoder needs positive dim and hidden size");
  embeddings_ = store.add_glorot("enc.embed", d, u, rng);
  combine_ = nn::Mlp(store, "enc.combine", {4 * u, h, h}, rng);
  for (std::size_t l = 0; l < cfg.attention_layers; ++l) {
    const std::string tag = "enc.attn" + std::to_string(l);
    q_.push_back(store.add_glorot(tag + ".q", h, h, rng));
    k_.push_back(store.add_glorot(tag + ".k", h, h, rng));
    v_.push_back(store.add_glorot(tag + ".v", h, h, rng));
  }
  initial_state_ = store.add_glorot("enc.s_init", h, 1, rng, 0.5);
  dynamics_ = nn::Mlp(store, "enc.f_s", {h + 1, h, h}, rng, 0.1);
  lstm_in_ = store.add_glorot("enc.g_s.w_in", 4 * h, h + 1, rng);
  lstm_hidden_ = store.add_glorot("enc.g_s.w_hidden", 4 * h, h, rng);
  ad::Tensor bias(4 * h, 1);
  for (std::size_t i = h; i < 2 * h; ++i) bias[i] = 1.0;  // forget gate
  lstm_bias_ = store.add("enc.g_s.bias", std::move(bias));
}

Encoder::Bound Encoder::bind(ad::Tape& tape, const ParameterStore& store,
                             nn::Dropout dropout) const {
  Bound b;
  b.tape = &tape;
  b.embeddings = tape.param(store, embeddings_);
  b.combine = combine_.bind(tape, store);
  for (std::size_t l = 0; l < q_.size(); ++l) {
    b.q.push_back(tape.param(store, q_[l]));
    b.k.push_back(tape.param(store, k_[l]));
    b.v.push_back(tape.param(store, v_[l]));
  }
  b.initial_state = tape.param(store, initial_state_);
  b.dynamics = dynamics_.bind(tape, store);
  b.lstm_in = tape.param(store, lstm_in_);
  b.lstm_hidden = tape.param(store, lstm_hidden_);
  b.lstm_bias = tape.param(store, lstm_bias_);
  b.dropout = dropout;
  return b;
}

std::vector<ad::Var> Encoder::embed_and_combine(const Bound& b, std::span<const double> x,
                                                std::span<const std::uint8_t> mask) const {
  const std::size_t d = cfg_.dim, u = cfg_.embed_width();
  if (x.size() != d || mask.size() != d) {
    throw DataError("encoder input has " + std::to_string(x.size()) + " values, expected " +
                    std::to_string(d));
  }
  std::vector<ad::Var> tokens;
  tokens.reserve(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double value = mask[j] != 0 ? x[j] : 0.0;
    ad::Var y = ad::slice(b.embeddings, j * u, u);
    ad::Var z = nn::filled(*b.tape, u, value);
    ad::Var parts[] = {y, z, ad::sub(y, z), ad::mul(y, z)};
    tokens.push_back(b.combine(ad::concat(parts), b.dropout));
  }
  return tokens;
}

ad::Var Encoder::attention_stack(const Bound& b, std::vector<ad::Var> tokens,
                                 std::span<const std::uint8_t> mask) const {
  const std::size_t d = tokens.size();
  bool any = false;
  for (auto m : mask) any = any || m != 0;
  if (!any) throw DataError("attention over an event with every dimension missing");

  auto normalize = [&](ad::Var v) {
    return cfg_.norm == NormKind::instance ? ad::layer_norm(v) : v;
  };
  // Self-gated pooling: weights proportional to m_j * exp(q_j . k_j).
  auto pooled = [&](std::size_t l, const std::vector<ad::Var>& e) {
    std::vector<ad::Var> logits, values;
    logits.reserve(d);
    values.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
      logits.push_back(ad::dot(ad::matvec(b.q[l], e[j]), ad::matvec(b.k[l], e[j])));
      values.push_back(ad::matvec(b.v[l], e[j]));
    }
    ad::Var w = ad::masked_softmax(ad::stack_rows(logits), mask);
    return ad::matvec_t(ad::stack_rows(values), w);
  };

  const std::size_t layers = b.q.size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    std::vector<ad::Var> next = tokens;
    if (cfg_.attention_form == AttentionForm::cross) {
      std::vector<ad::Var> keys, values;
      for (std::size_t j = 0; j < d; ++j) {
        keys.push_back(ad::matvec(b.k[l], tokens[j]));
        values.push_back(ad::matvec(b.v[l], tokens[j]));
      }
      ad::Var key_mat = ad::stack_rows(keys);
      ad::Var value_mat = ad::stack_rows(values);
      for (std::size_t j = 0; j < d; ++j) {
        if (mask[j] == 0) continue;
        ad::Var logits = ad::scale(ad::matvec(key_mat, ad::matvec(b.q[l], tokens[j])), inv_sqrt);
        ad::Var attended = ad::matvec_t(value_mat, ad::masked_softmax(logits, mask));
        next[j] = normalize(ad::add(tokens[j], attended));
      }
    } else {
      ad::Var p = pooled(l, tokens);
      for (std::size_t j = 0; j < d; ++j)
        if (mask[j] != 0) next[j] = normalize(ad::add(tokens[j], p));
    }
    tokens = std::move(next);
  }
  return pooled(layers - 1, tokens);
}

ad::Var Encoder::represent(const Bound& b, std::span<const double> x,
                           std::span<const std::uint8_t> mask) const {
  return attention_stack(b, embed_and_combine(b, x, mask), mask);
}

Encoder::Encoding Encoder::encode(const Bound& b, const EventSequence& seq, double step) const {
  ad::Tape& tape = *b.tape;
  Encoding out;
  out.event_repr.reserve(seq.size());
  for (const auto& e : seq.events) out.event_repr.push_back(represent(b, e.x, e.mask));

  const std::vector<double> times = seq.times();
  if (!(step > 0.0)) step = cfg_.solver_step > 0.0 ? cfg_.solver_step
                                                   : ode::default_step(seq.t_max, times);
  const auto grid = ode::IntegrationGrid::make(seq.t_max, 0.0, times, step);
  const double inv_scale = 1.0 / cfg_.time_unit();

  auto rhs = [&](ad::Var s, double t, std::size_t) {
    return b.dynamics(ad::concat(s, tape.scalar(t * inv_scale)));
  };

  ad::Var cell = nn::filled(tape, cfg_.hidden, 0.0);
  std::vector<ode::Jump<ad::Var>> jumps;
  if (cfg_.encoder_jumps) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      ad::Var xr = out.event_repr[i];
      jumps.push_back({times[i], [&, xr](const ad::Var& s, double t) {
                         ad::Var input = ad::concat(xr, tape.scalar(t * inv_scale));
                         auto next = ad::lstm_cell(b.lstm_in, b.lstm_hidden, b.lstm_bias,
                                                   input, {s, cell});
                         cell = next.c;
                         return next.h;
                       }});
    }
  }
  auto traj = ode::integrate_with_jumps<ad::Var>(b.initial_state, rhs, jumps, grid);
  out.latent = traj.final_state();
  return out;
}

}  // namespace tsdiff

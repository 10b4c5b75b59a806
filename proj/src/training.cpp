#include "tsdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "tsdiff/error.hpp"

namespace tsdiff {

double weighted_total(const std::array<double, 4>& w, const LossBreakdown& l) {
  return w[0] * l.l1 + w[1] * l.l2 + w[2] * l.l3 + w[3] * l.l4;
}

ad::Var horizon_loss(ad::Var mu, double t_last, double delta) {
  ad::Var r = ad::add_scalar(mu, -t_last * (1.0 + delta));
  return ad::mul(r, r);
}

ad::Var missingness_loss(ad::Var logits, std::span<const std::uint8_t> mask) {
  if (logits.size() != mask.size()) throw DataError("mask and logits differ in size");
  std::vector<double> m(mask.size()), not_m(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) {
    m[j] = mask[j] != 0 ? 1.0 : 0.0;
    not_m[j] = 1.0 - m[j];
  }
  ad::Var observed = ad::mul_const(ad::softplus(ad::neg(logits)), std::move(m));
  ad::Var missing = ad::mul_const(ad::softplus(logits), std::move(not_m));
  return ad::sum(ad::add(observed, missing));
}

HybridLoss hybrid_loss(const Model& model, ad::Tape& tape, const EventSequence& seq,
                       std::mt19937_64& rng, bool training) {
  const ModelConfig& cfg = model.config.model;
  const auto& w = model.config.loss_weights;
  nn::Dropout drop;
  if (training) drop = {cfg.dropout, &rng};

  auto eb = model.encoder.bind(tape, model.store, drop);
  auto db = model.decoder.bind(tape, model.store, drop);
  auto nb = model.noise.bind(tape, model.store, drop);

  auto enc = model.encoder.encode(eb, seq);
  ad::Var s = enc.latent;

  HybridLoss out;
  // The diffusion term trains eps_q on s but does not pull s itself.
  NoisePredictor pred = [&](ad::Tape& t, ad::Var h, std::size_t k) {
    return model.noise.predict(nb, t, h, k);
  };
  const ad::Var s_fixed = tape.constant(s.value());
  const std::size_t draws = std::max<std::size_t>(1, cfg.diffusion_draws);
  out.l2 = diffusion_loss(tape, s_fixed, model.schedule, pred, rng);
  for (std::size_t d = 1; d < draws; ++d)
    out.l2 = ad::add(out.l2, diffusion_loss(tape, s_fixed, model.schedule, pred, rng));
  if (draws > 1) out.l2 = ad::scale(out.l2, 1.0 / static_cast<double>(draws));

  ad::Var s_dec = s;
  if (training && cfg.k_reg > 0) {
    std::normal_distribution<double> normal;
    std::vector<double> eps(s.size());
    for (double& e : eps) e = normal(rng);
    s_dec = q_sample(s, std::min(cfg.k_reg, model.schedule.steps()), eps, model.schedule);
  }

  DecodedPath path = model.decoder.decode_path(db, s_dec, seq, enc.event_repr);
  out.l1 = sequence_nll(tape, path);

  out.l3 = seq.empty() ? tape.scalar(0.0)
                       : horizon_loss(model.decoder.horizon_mean(db, s_dec),
                                      seq.events.back().t, cfg.delta);

  out.l4 = tape.scalar(0.0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ad::Var z = model.decoder.missing_logits(db, path.event_states[i], seq.events[i].t);
    out.l4 = ad::add(out.l4, missingness_loss(z, seq.events[i].mask));
  }

  const ad::Var terms[] = {out.l1, out.l2, out.l3, out.l4};
  out.total = tape.scalar(0.0);
  for (std::size_t i = 0; i < 4; ++i)
    if (w[i] != 0.0) out.total = ad::axpy(out.total, w[i], terms[i]);

  out.values = {out.l1.scalar(), out.l2.scalar(), out.l3.scalar(), out.l4.scalar(),
                out.total.scalar()};
  return out;
}

std::mt19937_64 sequence_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch,
                             std::size_t item) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch),
                    static_cast<std::uint32_t>(item)};
  return std::mt19937_64(seq);
}

LossBreakdown batch_gradient(Model& model, const Dataset& ds,
                             std::span<const std::size_t> batch, std::size_t epoch,
                             std::size_t batch_index) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  std::vector<std::vector<ad::Tensor>> grads(n);
  std::vector<LossBreakdown> losses(n);
  std::vector<std::exception_ptr> errors(n);

  auto work = [&](std::size_t j) {
    try {
      const std::size_t idx = batch[j];
      auto rng = sequence_rng(model.config.seed, epoch, batch_index, j);
      ad::Tape tape;
      HybridLoss loss = hybrid_loss(model, tape, ds.sequences.at(idx), rng, true);
      const auto& v = loss.values;
      if (!std::isfinite(v.l1) || !std::isfinite(v.l2) || !std::isfinite(v.l3) ||
          !std::isfinite(v.l4) || !std::isfinite(v.total)) {
        std::ostringstream os;
        os << "non-finite loss on sequence " << idx << " (L1=" << v.l1 << ", L2=" << v.l2
           << ", L3=" << v.l3 << ", L4=" << v.l4 << ")";
        throw NumericalError(os.str());
      }
      losses[j] = v;
      grads[j] = model.store.zero_like();
      tape.backward(loss.total).accumulate_params(grads[j]);
    } catch (const NumericalError& e) {
      // Divergence inside the solver also names the sequence.
      const std::string msg = e.what();
      errors[j] = msg.find("sequence") == std::string::npos
                      ? std::make_exception_ptr(NumericalError(
                            msg + " (sequence " + std::to_string(batch[j]) + ")"))
                      : std::current_exception();
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(model.config.threads, n));
  if (threads == 1) {
    for (std::size_t j = 0; j < n; ++j) work(j);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t j = t; j < n; j += threads) work(j);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Fixed summation order keeps results independent of the thread count.
  auto& g = model.store.grads();
  const double inv = 1.0 / static_cast<double>(n);
  LossBreakdown mean;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto& dst = g[p].data();
      const auto& src = grads[j][p].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += inv * src[i];
    }
    mean.l1 += inv * losses[j].l1;
    mean.l2 += inv * losses[j].l2;
    mean.l3 += inv * losses[j].l3;
    mean.l4 += inv * losses[j].l4;
    mean.total += inv * losses[j].total;
  }
  return mean;
}

void apply_update(Model& model) {
  const auto& w = model.config.loss_weights;
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) return;
  if (model.config.grad_clip > 0.0) model.store.clip_grad_norm(model.config.grad_clip);
  AdamOptions opts;
  opts.lr = model.config.lr;
  model.store.adam_step(opts);
}

const char* metrics_header() { return "epoch,L1,L2,L3,L4,total"; }

std::string metrics_row(std::size_t epoch, const LossBreakdown& l) {
  std::ostringstream os;
  os.precision(10);
  os << epoch << ',' << l.l1 << ',' << l.l2 << ',' << l.l3 << ',' << l.l4 << ',' << l.total;
  return os.str();
}

std::vector<LossBreakdown> train(Model& model, const Dataset& ds, const TrainOptions& opts) {
  const TrainConfig& cfg = model.config;
  const std::size_t n = ds.sequences.size();
  if (n == 0) throw DataError("training set is empty");
  if (ds.dim() != 0 && ds.dim() != cfg.model.dim) {
    throw DataError("data dimension " + std::to_string(ds.dim()) + " does not match the model (" +
                    std::to_string(cfg.model.dim) + ")");
  }

  std::ofstream csv;
  if (!opts.metrics.empty()) {
    const bool append = model.epoch > 0 && std::filesystem::exists(opts.metrics);
    csv.open(opts.metrics, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw DataError("cannot write metrics '" + opts.metrics.string() + "'");
    if (!append) csv << metrics_header() << '\n';
  }

  std::vector<LossBreakdown> history;
  const std::size_t batch_size = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = model.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq shuffle_seed{static_cast<std::uint32_t>(cfg.seed),
                               static_cast<std::uint32_t>(cfg.seed >> 32),
                               static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 shuffle_rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown sum;
    for (std::size_t start = 0, b = 0; start < n; start += batch_size, ++b) {
      const std::size_t len = std::min(batch_size, n - start);
      std::span<const std::size_t> batch(order.data() + start, len);
      model.store.zero_grad();
      LossBreakdown l = batch_gradient(model, ds, batch, epoch, b);
      apply_update(model);
      const double f = static_cast<double>(len) / static_cast<double>(n);
      sum.l1 += f * l.l1;
      sum.l2 += f * l.l2;
      sum.l3 += f * l.l3;
      sum.l4 += f * l.l4;
      sum.total += f * l.total;
    }
    model.epoch = epoch;
    history.push_back(sum);
    if (csv.is_open()) csv << metrics_row(epoch, sum) << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(epoch, sum);

    const bool last = epoch == cfg.epochs || (opts.stop_after != 0 && epoch >= opts.stop_after);
    const bool periodic = cfg.checkpoint_every != 0 && epoch % cfg.checkpoint_every == 0;
    if (!opts.checkpoint.empty() && (last || periodic)) save_checkpoint(opts.checkpoint, model);
    if (last) break;
  }
  return history;
}

}  // namespace tsdiff

#include "tsdiff/diffusion.hpp"

#include <cmath>

#include "tsdiff/error.hpp"

namespace tsdiff {

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start,
                                            double beta_end) {
  if (steps == 0) throw UsageError("diffusion needs at least one step");
  std::vector<double> betas(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    betas[k] = beta_start + f * (beta_end - beta_start);
  }
  return from_betas(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw UsageError("diffusion needs at least one step");
  DiffusionSchedule s;
  s.beta_.assign(1, 0.0);
  s.alpha_.assign(1, 1.0);
  s.alpha_bar_.assign(1, 1.0);
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw UsageError("beta values must lie in (0, 1)");
    s.beta_.push_back(b);
    s.alpha_.push_back(1.0 - b);
    s.alpha_bar_.push_back(s.alpha_bar_.back() * (1.0 - b));
  }
  return s;
}

std::size_t DiffusionSchedule::check(std::size_t k) const {
  if (k < 1 || k > steps()) {
    throw UsageError("diffusion step " + std::to_string(k) + " outside 1.." +
                     std::to_string(steps()));
  }
  return k;
}

double DiffusionSchedule::posterior_variance(std::size_t k) const {
  check(k);
  return beta_[k] * (1.0 - alpha_bar_[k - 1]) / (1.0 - alpha_bar_[k]);
}

std::vector<double> step_embedding(std::size_t k, std::size_t width) {
  std::vector<double> e(width, 0.0);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(static_cast<double>(k) * freq);
    e[i + half] = std::cos(static_cast<double>(k) * freq);
  }
  return e;
}

NoiseNet::NoiseNet(ParameterStore& store, std::size_t width, std::size_t hidden,
                   std::size_t embed, std::mt19937_64& rng, const std::string& prefix)
    : width_(width), embed_(embed), mlp_(store, prefix, {width + embed, hidden, hidden, width}, rng) {}

NoiseNet::Bound NoiseNet::bind(ad::Tape& tape, const ParameterStore& store,
                               nn::Dropout dropout) const {
  return {mlp_.bind(tape, store), dropout};
}

ad::Var NoiseNet::predict(const Bound& b, ad::Tape& tape, ad::Var h, std::size_t k) const {
  return b.mlp(ad::concat(h, tape.constant(step_embedding(k, embed_))), b.dropout);
}

NoisePredictor NoiseNet::predictor(const ParameterStore& store) const {
  return [this, &store](ad::Tape& tape, ad::Var h, std::size_t k) {
    return predict(bind(tape, store), tape, h, k);
  };
}

std::vector<double> q_sample(std::span<const double> h0, std::size_t k,
                             std::span<const double> eps, const DiffusionSchedule& sched) {
  if (eps.size() != h0.size()) throw DataError("noise and latent sizes differ");
  sched.beta(k);  // range check
  const double ab = sched.alpha_bar(k);
  const double a = std::sqrt(ab), c = std::sqrt(1.0 - ab);
  std::vector<double> out(h0.size());
  for (std::size_t i = 0; i < h0.size(); ++i) out[i] = a * h0[i] + c * eps[i];
  return out;
}

ad::Var q_sample(ad::Var h0, std::size_t k, std::span<const double> eps,
                 const DiffusionSchedule& sched) {
  if (eps.size() != h0.size()) throw DataError("noise and latent sizes differ");
  sched.beta(k);  // range check
  const double ab = sched.alpha_bar(k);
  ad::Var noise = h0.tape->constant(std::vector<double>(eps.begin(), eps.end()));
  return ad::axpy(ad::scale(h0, std::sqrt(ab)), std::sqrt(1.0 - ab), noise);
}

ad::Var diffusion_loss(ad::Tape& tape, ad::Var h0, const DiffusionSchedule& sched,
                       const NoisePredictor& net, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> step(1, sched.steps());
  std::normal_distribution<double> normal;
  const std::size_t k = step(rng);
  std::vector<double> eps(h0.size());
  for (double& e : eps) e = normal(rng);
  ad::Var hk = q_sample(h0, k, eps, sched);
  return ad::squared_norm(ad::sub(tape.constant(eps), net(tape, hk, k)));
}

std::vector<double> denoise_step(std::span<const double> h_k, std::size_t k,
                                 const DiffusionSchedule& sched, const NoisePredictor& net,
                                 std::mt19937_64& rng) {
  const double beta = sched.beta(k), alpha = sched.alpha(k), ab = sched.alpha_bar(k);
  ad::Tape tape;
  ad::Var pred = net(tape, tape.constant(std::vector<double>(h_k.begin(), h_k.end())), k);
  if (pred.size() != h_k.size()) throw DataError("noise predictor changed the latent size");
  const double coef = beta / std::sqrt(1.0 - ab);
  const double inv = 1.0 / std::sqrt(alpha);
  const double sd = k > 1 ? std::sqrt(sched.posterior_variance(k)) : 0.0;
  std::normal_distribution<double> normal;
  std::vector<double> out(h_k.size());
  for (std::size_t i = 0; i < h_k.size(); ++i) {
    out[i] = inv * (h_k[i] - coef * pred[i]);
    if (k > 1) out[i] += sd * normal(rng);
  }
  return out;
}

std::vector<double> sample_latent(std::size_t width, const DiffusionSchedule& sched,
                                  const NoisePredictor& net, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> h(width);
  for (double& v : h) v = normal(rng);
  for (std::size_t k = sched.steps(); k >= 1; --k) h = denoise_step(h, k, sched, net, rng);
  return h;
}

}  // namespace tsdiff

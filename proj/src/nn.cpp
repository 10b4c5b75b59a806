#include "tsdiff/nn.hpp"

#include "tsdiff/error.hpp"

namespace tsdiff::nn {

ad::Var Dropout::apply(ad::Var h) const {
  if (!active()) return h;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(h.size());
  const double inv = 1.0 / (1.0 - rate);
  for (double& m : mask) m = keep(*rng) ? inv : 0.0;
  return ad::mul_const(h, std::move(mask));
}

Mlp::Mlp(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> widths,
         std::mt19937_64& rng, double out_gain)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw DataError("an MLP needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const bool last = l + 2 == widths_.size();
    const std::string tag = prefix + ".w" + std::to_string(l + 1);
    w_.push_back(store.add_glorot(tag, widths_[l + 1], widths_[l], rng, last ? out_gain : 1.0));
    b_.push_back(store.add_zeros(prefix + ".b" + std::to_string(l + 1), widths_[l + 1]));
  }
}

Mlp::Bound Mlp::bind(ad::Tape& tape, const ParameterStore& store) const {
  Bound b;
  for (std::size_t i = 0; i < w_.size(); ++i) {
    b.w.push_back(tape.param(store, w_[i]));
    b.b.push_back(tape.param(store, b_[i]));
  }
  return b;
}

ad::Var Mlp::Bound::operator()(ad::Var x, const Dropout& dropout) const {
  ad::Var h = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = ad::add(ad::matvec(w[l], h), b[l]);
    if (l + 1 < w.size()) h = dropout.apply(ad::tanh(h));
  }
  return h;
}

}  // namespace tsdiff::nn

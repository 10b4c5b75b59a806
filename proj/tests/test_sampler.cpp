#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "tsdiff/error.hpp"
#include "tsdiff/sampler.hpp"

using namespace tsdiff;

namespace {

// lambda(t) = mu + a sin(2 pi t / P), no history dependence.
class SineIntensity : public IntensityProcess {
 public:
  SineIntensity(double mu, double a, double period) : mu_(mu), a_(a), p_(period) {}
  double time() const override { return t_; }
  void advance_to(double t) override { t_ = t; }
  double intensity() override { return at(t_); }
  std::vector<double> lookahead(std::span<const double> times) override {
    std::vector<double> out;
    for (double t : times) out.push_back(at(t));
    return out;
  }
  void accept(std::mt19937_64&) override { times.push_back(t_); }
  double compensator(double t) const {
    const double w = 2.0 * std::numbers::pi / p_;
    return mu_ * t + a_ / w * (1.0 - std::cos(w * t));
  }
  std::vector<double> times;

 private:
  double at(double t) const { return mu_ + a_ * std::sin(2.0 * std::numbers::pi * t / p_); }
  double mu_, a_, p_;
  double t_ = 0.0;
};

// Reports a flat lookahead but spikes between grid points, so the bound
// is too low there.
class HiddenSpike : public ConstantIntensity {
 public:
  HiddenSpike() : ConstantIntensity(1.0) {}
  double intensity() override {
    const double frac = time() - std::floor(time());
    return frac > 0.501 && frac < 0.509 ? 50.0 : 1.0;
  }
};

}  // namespace

TEST_CASE("constant intensity") {
  std::mt19937_64 rng(1);
  // Gaps are taken on the runs laid end to end: independent increments
  // make that one long Poisson process, whereas gaps inside single runs
  // are censored at T and biased short.
  std::vector<double> counts, gaps;
  double prev = 0.0;
  for (int r = 0; r < 2000; ++r) {
    ConstantIntensity proc(2.0);
    auto stats = thinning_generate(proc, 10.0, rng);
    CHECK(stats.violations == 0);
    counts.push_back(static_cast<double>(proc.times.size()));
    for (double t : proc.times) {
      gaps.push_back(10.0 * r + t - prev);
      prev = 10.0 * r + t;
    }
  }
  CHECK(std::abs(testing::mean_of(counts) - 20.0) < 0.5);
  const double d = testing::ks_statistic(gaps, [](double x) { return 1.0 - std::exp(-2.0 * x); });
  CHECK(testing::ks_pvalue(d, gaps.size()) > 0.01);

  ConstantIntensity null(0.0);
  auto stats = thinning_generate(null, 10.0, rng);
  CHECK(null.times.empty());
  CHECK(stats.proposed == 0);
}

TEST_CASE("time rescaling of a sinusoidal intensity") {
  std::mt19937_64 rng(2);
  std::vector<double> rescaled;
  double prev = 0.0;
  for (int r = 0; r < 500; ++r) {
    SineIntensity proc(3.0, 2.0, 10.0);
    thinning_generate(proc, 10.0, rng);
    const double offset = r * proc.compensator(10.0);
    for (double t : proc.times) {
      const double c = offset + proc.compensator(t);
      rescaled.push_back(c - prev);
      prev = c;
    }
  }
  const double d = testing::ks_statistic(rescaled, [](double x) { return 1.0 - std::exp(-x); });
  CHECK(testing::ks_pvalue(d, rescaled.size()) > 0.01);
}

TEST_CASE("bound violations are counted") {
  std::mt19937_64 rng(3);
  ThinningStats total;
  for (int r = 0; r < 200; ++r) {
    HiddenSpike proc;
    total += thinning_generate(proc, 20.0, rng);
  }
  CHECK(total.violations > 0);
  CHECK(total.violation_rate() > 0.0);
}

TEST_CASE("synthesis from an untrained model") {
  Model model = testing::small_model(2, 4, 7);
  model.standardization.mean = {10.0, -1.0};
  model.standardization.stddev = {2.0, 0.5};
  model.horizon_variance = 0.25;

  CHECK(synthesize(model, 0, 1, false).data.sequences.empty());

  auto a = synthesize(model, 6, 42, true);
  auto b = synthesize(model, 6, 42, true, 3);
  CHECK(a.data == b.data);
  REQUIRE(a.data.sequences.size() == 6);
  for (const auto& s : a.data.sequences) {
    CHECK(s.t_max > 0.0);
    s.validate();
    for (const auto& e : s.events) CHECK(e.observed() >= 1);
  }

  auto full = synthesize(model, 6, 42, false);
  for (const auto& s : full.data.sequences)
    for (const auto& e : s.events) CHECK(e.observed() == 2);
  CHECK(synthesize(model, 6, 43, false).data != full.data);
}

#include "tsdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tsdiff/error.hpp"

namespace tsdiff {

// --- scores -------------------------------------------------------------------

Scores path_scores(ad::Tape& tape, const DecodedPath& path) {
  const std::size_t n = path.event_intensity.size();
  if (n == 0) throw DataError("per-observation scores need at least one event");
  auto terms = sequence_loglik(tape, path);
  return {terms.temporal.scalar() / static_cast<double>(n),
          terms.feature.scalar() / static_cast<double>(n)};
}

Scores eval_scores(const Model& model, const Dataset& standardized) {
  Scores sum;
  std::size_t used = 0;
  ad::Tape tape;
  for (const auto& seq : standardized.sequences) {
    if (seq.empty()) continue;
    tape.clear();
    auto eb = model.encoder.bind(tape, model.store);
    auto db = model.decoder.bind(tape, model.store);
    auto enc = model.encoder.encode(eb, seq);
    auto path = model.decoder.decode_path(db, enc.latent, seq, enc.event_repr);
    const Scores s = path_scores(tape, path);
    sum.temporal += s.temporal;
    sum.feature += s.feature;
    ++used;
  }
  if (used == 0) throw DataError("evaluation set has no events");
  return {sum.temporal / static_cast<double>(used), sum.feature / static_cast<double>(used)};
}

// --- PRD ------------------------------------------------------------------------

double PrdCurve::max_precision() const {
  return precision.empty() ? 0.0 : *std::max_element(precision.begin(), precision.end());
}
double PrdCurve::max_recall() const {
  return recall.empty() ? 0.0 : *std::max_element(recall.begin(), recall.end());
}
double PrdCurve::balanced() const {
  double best = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i)
    best = std::max(best, std::min(precision[i], recall[i]));
  return best;
}

std::vector<std::vector<double>> prd_features(const Dataset& ds) {
  const std::size_t d = ds.dim();
  std::vector<std::vector<double>> out;
  out.reserve(ds.sequences.size());
  for (const auto& seq : ds.sequences) {
    std::vector<double> f(2 + d, 0.0);
    const double n = static_cast<double>(seq.size());
    f[0] = n;
    f[1] = seq.empty() ? seq.t_max : seq.events.back().t / n;
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      std::size_t c = 0;
      for (const auto& e : seq.events)
        if (e.mask[j] != 0) {
          s += e.x[j];
          ++c;
        }
      f[2 + j] = c == 0 ? 0.0 : s / static_cast<double>(c);
    }
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                                std::size_t restarts, std::size_t max_iterations,
                                std::uint64_t seed, double* inertia_out) {
  const std::size_t n = points.size();
  if (k == 0 || k > n) {
    throw DataError("k-means needs 1 <= K <= number of points (K=" + std::to_string(k) +
                    ", points=" + std::to_string(n) + ")");
  }
  std::vector<std::size_t> best_labels;
  double best_inertia = std::numeric_limits<double>::infinity();

  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (r + 1));
    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centers.push_back(points[pick(rng)]);
    std::vector<double> d2(n);
    while (centers.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) m = std::min(m, sq_dist(points[i], c));
        d2[i] = m;
        total += m;
      }
      std::size_t chosen = 0;
      if (total > 0.0) {
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (chosen = 0; chosen + 1 < n; ++chosen) {
          u -= d2[chosen];
          if (u < 0.0) break;
        }
      } else {
        chosen = pick(rng);
      }
      centers.push_back(points[chosen]);
    }

    std::vector<std::size_t> labels(n, 0);
    double inertia = 0.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      bool changed = it == 0;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double dd = sq_dist(points[i], centers[c]);
          if (dd < m) {
            m = dd;
            arg = c;
          }
        }
        if (labels[i] != arg) changed = true;
        labels[i] = arg;
        inertia += m;
      }
      if (!changed) break;
      std::vector<std::vector<double>> sums(k, std::vector<double>(points[0].size(), 0.0));
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++counts[labels[i]];
        for (std::size_t j = 0; j < points[i].size(); ++j) sums[labels[i]][j] += points[i][j];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its center
        for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
        centers[c] = std::move(sums[c]);
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  if (inertia_out) *inertia_out = best_inertia;
  return best_labels;
}

PrdCurve prd_curve(const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake, const PrdOptions& opts) {
  if (real.empty() || fake.empty()) throw DataError("PRD needs non-empty real and fake sets");
  const std::size_t dim = real[0].size();
  struct Item {
    std::vector<double> f;
    bool is_real;
  };
  std::vector<Item> items;
  for (const auto& r : real) items.push_back({r, true});
  for (const auto& f : fake) items.push_back({f, false});
  for (const auto& it : items)
    if (it.f.size() != dim) throw DataError("PRD feature vectors differ in length");
  if (opts.clusters > items.size()) {
    throw DataError("PRD cluster count " + std::to_string(opts.clusters) +
                    " exceeds the union size " + std::to_string(items.size()));
  }

  // z-score over the union
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0, var = 0.0;
    for (const auto& it : items) mean += it.f[j];
    mean /= static_cast<double>(items.size());
    for (const auto& it : items) var += (it.f[j] - mean) * (it.f[j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(items.size()));
    for (auto& it : items) it.f[j] = (it.f[j] - mean) / (sd > 1e-12 ? sd : 1.0);
  }
  // Canonical order, so clustering does not depend on which set is "real".
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.f < b.f; });
  std::vector<std::vector<double>> pts;
  pts.reserve(items.size());
  for (const auto& it : items) pts.push_back(it.f);
  const auto labels = kmeans(pts, opts.clusters, opts.restarts, opts.max_iterations, opts.seed);

  std::vector<double> p(opts.clusters, 0.0), q(opts.clusters, 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) (items[i].is_real ? p : q)[labels[i]] += 1.0;
  for (auto& v : p) v /= static_cast<double>(real.size());
  for (auto& v : q) v /= static_cast<double>(fake.size());

  PrdCurve curve;
  const std::size_t m = std::max<std::size_t>(2, opts.lambdas);
  const double lo = std::log(opts.lambda_min), hi = std::log(opts.lambda_max);
  for (std::size_t i = 0; i < m; ++i) {
    const double lam = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1));
    double a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < opts.clusters; ++c) {
      a += std::min(lam * p[c], q[c]);
      b += std::min(p[c], q[c] / lam);
    }
    curve.lambda.push_back(lam);
    curve.precision.push_back(std::clamp(a, 0.0, 1.0));
    curve.recall.push_back(std::clamp(b, 0.0, 1.0));
  }
  return curve;
}

// --- TFC ---------------------------------------------------------------------------

TfcResult tfc_score(const Dataset& ds) {
  const std::size_t d = ds.dim();
  if (ds.total_events() < 2) throw DataError("TFC needs at least two pooled events");
  TfcResult out;
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double st = 0.0, sx = 0.0;
    std::size_t n = 0;
    for (const auto& s : ds.sequences)
      for (const auto& e : s.events)
        if (e.mask[j] != 0) {
          st += e.t;
          sx += e.x[j];
          ++n;
        }
    if (n < 2) throw DataError("TFC: dimension " + std::to_string(j) + " has fewer than 2 observed values");
    const double mt = st / static_cast<double>(n), mx = sx / static_cast<double>(n);
    double ctt = 0.0, cxx = 0.0, ctx = 0.0;
    for (const auto& s : ds.sequences)
      for (const auto& e : s.events)
        if (e.mask[j] != 0) {
          ctt += (e.t - mt) * (e.t - mt);
          cxx += (e.x[j] - mx) * (e.x[j] - mx);
          ctx += (e.t - mt) * (e.x[j] - mx);
        }
    if (!(ctt > 0.0) || !(cxx > 0.0)) {
      out.warnings.push_back("dimension " + std::to_string(j) +
                             " has zero variance in time or value; contributes 0");
      continue;
    }
    total += std::min(1.0, std::abs(ctx) / std::sqrt(ctt * cxx));
  }
  out.score = d == 0 ? 0.0 : total / static_cast<double>(d);
  return out;
}

// --- durations -----------------------------------------------------------------

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw UsageError("histogram needs at least one bin");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  return e;
}

Histogram histogram(std::span<const double> values, std::vector<double> edges) {
  if (edges.size() < 2) throw UsageError("histogram needs at least two edges");
  Histogram h;
  h.edges = std::move(edges);
  const std::size_t bins = h.edges.size() - 1;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    std::size_t b = it == h.edges.begin() ? 0 : static_cast<std::size_t>(it - h.edges.begin()) - 1;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

double total_variation(const Histogram& a, const Histogram& b) {
  if (a.counts.size() != b.counts.size()) throw DataError("histograms have different bins");
  const double na = static_cast<double>(a.total()), nb = static_cast<double>(b.total());
  if (na == 0.0 || nb == 0.0) throw DataError("total variation of an empty histogram");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i)
    tv += std::abs(static_cast<double>(a.counts[i]) / na - static_cast<double>(b.counts[i]) / nb);
  return 0.5 * tv;
}

namespace {

std::vector<double> durations_of(const Dataset& ds) {
  std::vector<double> d;
  for (const auto& s : ds.sequences)
    if (!s.empty()) d.push_back(s.events.back().t - s.events.front().t);
  return d;
}

DurationStats finish(std::vector<double> durations, std::vector<double> edges) {
  DurationStats out;
  out.durations = std::move(durations);
  const double n = static_cast<double>(out.durations.size());
  if (n > 0) {
    for (double v : out.durations) out.mean += v;
    out.mean /= n;
    for (double v : out.durations) out.variance += (v - out.mean) * (v - out.mean);
    out.variance /= n;
  }
  out.histogram = histogram(out.durations, std::move(edges));
  return out;
}

}  // namespace

DurationStats duration_stats(const Dataset& ds, std::size_t bins) {
  auto d = durations_of(ds);
  double lo = 0.0, hi = 0.0;
  if (!d.empty()) {
    lo = *std::min_element(d.begin(), d.end());
    hi = *std::max_element(d.begin(), d.end());
  }
  return finish(std::move(d), uniform_edges(lo, hi, bins));
}

DurationStats duration_stats(const Dataset& ds, std::vector<double> edges) {
  return finish(durations_of(ds), std::move(edges));
}

// --- report -------------------------------------------------------------------------

namespace {

using json = nlohmann::json;

json histogram_json(const DurationStats& d) {
  return {{"mean", d.mean},
          {"variance", d.variance},
          {"bin_edges", d.histogram.edges},
          {"counts", d.histogram.counts}};
}

json tfc_json(const TfcResult& t) { return {{"score", t.score}, {"warnings", t.warnings}}; }

}  // namespace

std::string report_json(const EvalReport& r) {
  json j;
  j["temporal_score"] = r.scores.temporal;
  j["feature_score"] = r.scores.feature;
  j["sequences"] = r.sequences;
  j["events"] = r.events;
  j["tfc"] = tfc_json(r.tfc);
  j["durations"] = histogram_json(r.durations);
  if (r.prd) {
    json pts = json::array();
    for (std::size_t i = 0; i < r.prd->lambda.size(); ++i)
      pts.push_back({{"lambda", r.prd->lambda[i]},
                     {"precision", r.prd->precision[i]},
                     {"recall", r.prd->recall[i]}});
    j["prd"] = {{"points", pts},
                {"max_precision", r.prd->max_precision()},
                {"max_recall", r.prd->max_recall()}};
  } else {
    j["prd"] = nullptr;
  }
  if (r.synth_tfc) j["synth_tfc"] = tfc_json(*r.synth_tfc);
  if (r.synth_durations) j["synth_durations"] = histogram_json(*r.synth_durations);
  if (r.duration_tv) j["duration_total_variation"] = *r.duration_tv;
  return j.dump(2);
}

std::string prd_csv(const PrdCurve& c) {
  std::ostringstream os;
  os.precision(10);
  os << "lambda,precision,recall\n";
  for (std::size_t i = 0; i < c.lambda.size(); ++i)
    os << c.lambda[i] << ',' << c.precision[i] << ',' << c.recall[i] << '\n';
  return os.str();
}

std::string durations_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "bin_lo,bin_hi,data_count" << (r.synth_durations ? ",synth_count" : "") << '\n';
  const auto& h = r.durations.histogram;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i];
    if (r.synth_durations) os << ',' << r.synth_durations->histogram.counts.at(i);
    os << '\n';
  }
  return os.str();
}

}  // namespace tsdiff

#include "tsdiff/ode.hpp"

namespace tsdiff::ode {

IntegrationGrid IntegrationGrid::make(double t_start, double t_end,
                                      std::span<const double> event_times, double step) {
  if (!(step > 0.0)) throw DataError("integration step must be positive");
  IntegrationGrid g;
  g.step = step;
  g.direction = t_end >= t_start ? Direction::forward : Direction::backward;
  const double lo = std::min(t_start, t_end);
  const double hi = std::max(t_start, t_end);
  std::vector<double> pts{lo, hi};
  for (double t : event_times) {
    if (t < lo || t > hi) {
      std::ostringstream os;
      os << "event time " << t << " outside [" << lo << ", " << hi << "]";
      throw DataError(os.str());
    }
    pts.push_back(t);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (g.direction == Direction::backward) std::reverse(pts.begin(), pts.end());
  g.breakpoints = std::move(pts);
  return g;
}

std::size_t IntegrationGrid::substeps(std::size_t interval) const {
  const double span = std::abs(breakpoints[interval + 1] - breakpoints[interval]);
  const double n = std::ceil(span / step - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

std::vector<double> IntegrationGrid::nodes() const {
  std::vector<double> out;
  if (breakpoints.empty()) return out;
  out.push_back(breakpoints[0]);
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    const std::size_t n = substeps(k);
    const double h = (breakpoints[k + 1] - breakpoints[k]) / static_cast<double>(n);
    for (std::size_t i = 1; i < n; ++i)
      out.push_back(breakpoints[k] + static_cast<double>(i) * h);
    out.push_back(breakpoints[k + 1]);
  }
  return out;
}

double default_step(double t_max, std::span<const double> event_times) {
  double h = 0.01 * t_max;
  std::vector<double> ts(event_times.begin(), event_times.end());
  std::sort(ts.begin(), ts.end());
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double gap = ts[i] - ts[i - 1];
    if (gap > 0.0) h = std::min(h, gap / 4.0);
  }
  if (!(h > 0.0)) h = 0.01;
  return h;
}

}  // namespace tsdiff::ode

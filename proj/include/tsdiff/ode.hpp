#pragma once

// Fixed-step RK4 integration on event-aligned grids.
//
// Every event time is a breakpoint of the grid, so no event ever falls
// strictly inside a step. Between consecutive breakpoints the interval is
// split into ceil(|dt| / h) uniform steps. Jumps are applied atomically on
// arrival at their breakpoint; the trajectory keeps both the pre- and the
// post-jump state there. The same template serves plain vectors and taped
// variables, so gradients come from differentiating the unrolled solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

#include "tsdiff/autodiff.hpp"
#include "tsdiff/error.hpp"

namespace tsdiff::ode {

enum class Direction { forward, backward };

struct IntegrationGrid {
  double step = 0.0;
  // Traversal order: breakpoints.front() is the start time, back() the end.
  std::vector<double> breakpoints;
  Direction direction = Direction::forward;

  // Grid from t_start to t_end (either order) with every event time inside
  // [min, max] inserted as a breakpoint.
  static IntegrationGrid make(double t_start, double t_end,
                              std::span<const double> event_times, double step);

  std::size_t intervals() const {
    return breakpoints.empty() ? 0 : breakpoints.size() - 1;
  }
  std::size_t substeps(std::size_t interval) const;
  // Every solver node in traversal order.
  std::vector<double> nodes() const;
};

// min(0.01 * t_max, smallest positive inter-event gap / 4).
double default_step(double t_max, std::span<const double> event_times);

template <class State>
struct Jump {
  double t = 0.0;
  std::function<State(const State&, double)> apply;
};

template <class State>
struct TrajectoryPoint {
  double t = 0.0;
  State state{};
  bool pre_jump = false;
  bool post_jump = false;
};

template <class State>
struct Trajectory {
  std::vector<TrajectoryPoint<State>> points;  // empty unless recorded
  // State on arrival at each breakpoint (left limit in traversal order)
  // and after any jump there.
  std::vector<State> arrival;
  std::vector<State> departure;
  const State& final_state() const { return departure.back(); }
};

// --- state algebra ----------------------------------------------------------
// Taped states reach ad::axpy through argument-dependent lookup.

inline std::vector<double> axpy(const std::vector<double>& x, double c,
                                const std::vector<double>& y) {
  std::vector<double> out(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * y[i];
  return out;
}

inline bool all_finite(const std::vector<double>& x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}
inline bool all_finite(ad::Var x) {
  const auto& d = x.value().data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

// --- integrator -------------------------------------------------------------

// `rhs(state, t, interval)` returns ds/dt; `interval` indexes the
// breakpoint interval being traversed, which lets callers switch context
// (e.g. the set of events already observed) at breakpoints.
template <class State, class Rhs>
Trajectory<State> integrate_with_jumps(State state0, Rhs&& rhs,
                                       std::span<const Jump<State>> jumps,
                                       const IntegrationGrid& grid, bool record = false) {
  const auto& bp = grid.breakpoints;
  if (bp.empty()) throw DataError("integration grid has no breakpoints");
  if (!(grid.step > 0.0)) throw DataError("integration step must be positive");

  std::vector<std::size_t> jump_at(jumps.size());
  for (std::size_t j = 0; j < jumps.size(); ++j) {
    auto it = std::find(bp.begin(), bp.end(), jumps[j].t);
    if (it == bp.end()) {
      std::ostringstream os;
      os << "jump time " << jumps[j].t << " is not a grid breakpoint";
      throw DataError(os.str());
    }
    jump_at[j] = static_cast<std::size_t>(it - bp.begin());
  }

  Trajectory<State> traj;
  traj.arrival.reserve(bp.size());
  traj.departure.reserve(bp.size());

  auto check = [](const State& s, double t) {
    if (!all_finite(s)) {
      std::ostringstream os;
      os << "integration diverged at t=" << t;
      throw NumericalError(os.str());
    }
  };

  auto arrive = [&](State s, std::size_t k) {
    traj.arrival.push_back(s);
    bool jumped = false;
    for (std::size_t j = 0; j < jumps.size(); ++j) {
      if (jump_at[j] != k) continue;
      if (record) traj.points.push_back({bp[k], s, true, false});
      s = jumps[j].apply(s, bp[k]);
      check(s, bp[k]);
      jumped = true;
    }
    if (record) traj.points.push_back({bp[k], s, false, jumped});
    traj.departure.push_back(s);
    return s;
  };

  check(state0, bp[0]);
  State s = arrive(std::move(state0), 0);
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double t0 = bp[k];
    const double t1 = bp[k + 1];
    const std::size_t n = grid.substeps(k);
    const double h = (t1 - t0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t0 + static_cast<double>(i) * h;
      const double t_next = (i + 1 == n) ? t1 : t0 + static_cast<double>(i + 1) * h;
      State k1 = rhs(s, t, k);
      State k2 = rhs(axpy(s, 0.5 * h, k1), t + 0.5 * h, k);
      State k3 = rhs(axpy(s, 0.5 * h, k2), t + 0.5 * h, k);
      State k4 = rhs(axpy(s, h, k3), t + h, k);
      s = axpy(axpy(axpy(axpy(s, h / 6.0, k1), h / 3.0, k2), h / 3.0, k3), h / 6.0, k4);
      check(s, t_next);
      if (record && i + 1 < n) traj.points.push_back({t_next, s, false, false});
    }
    s = arrive(std::move(s), k + 1);
  }
  return traj;
}

}  // namespace tsdiff::ode

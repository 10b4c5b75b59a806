#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tsdiff {

// One observation. Missing slots hold 0.0 and mask 0; the mask is the only
// source of truth for missingness.
struct Event {
  double t = 0.0;
  std::vector<double> x;
  std::vector<std::uint8_t> mask;

  std::size_t observed() const;
  bool operator==(const Event&) const = default;
};

struct EventSequence {
  double t_max = 0.0;
  std::vector<Event> events;

  std::size_t size() const noexcept { return events.size(); }
  bool empty() const noexcept { return events.empty(); }
  // Feature dimension, or 0 for a sequence without events.
  std::size_t dim() const noexcept { return events.empty() ? 0 : events[0].x.size(); }
  std::vector<double> times() const;

  // Throws DataError describing the first violated invariant.
  void validate() const;

  bool operator==(const EventSequence&) const = default;
};

// Per-dimension affine map applied to observed cells.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const noexcept { return mean.empty(); }
  bool operator==(const Standardization&) const = default;
};

struct Dataset {
  std::vector<EventSequence> sequences;
  Standardization standardization;
  double horizon_variance = 0.0;

  std::size_t dim() const;
  std::size_t total_events() const;
  bool operator==(const Dataset&) const = default;
};

// Population variance of the last event time over sequences with events.
double horizon_variance(const std::vector<EventSequence>& sequences);

// JSONL, one sequence per line:
//   {"t_max": 2.0, "events": [{"t": 0.5, "x": [1.0, null]}]}
Dataset parse_jsonl(std::istream& in, const std::string& source = "<stream>");
Dataset load_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, const Dataset& ds);
void save_jsonl(const std::filesystem::path& path, const Dataset& ds);

// Rescales observed cells to zero mean and unit population variance per
// dimension, using observed cells only.
Dataset standardize(const Dataset& ds);
// Applies a known table (e.g. from a checkpoint) without refitting.
Dataset apply_standardization(const Dataset& ds, const Standardization& table);
Dataset inverse_standardize(const Dataset& ds);

// Masks each observed cell independently with probability `rate`, keeping
// at least one observed cell per event. Deterministic in `seed`.
Dataset inject_missing_mcar(const Dataset& ds, double rate, std::uint64_t seed);

}  // namespace tsdiff

#include "tsdiff/data.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tsdiff/error.hpp"

namespace tsdiff {

using json = nlohmann::json;

std::size_t Event::observed() const {
  std::size_t n = 0;
  for (auto m : mask) n += (m != 0);
  return n;
}

std::vector<double> EventSequence::times() const {
  std::vector<double> ts;
  ts.reserve(events.size());
  for (const auto& e : events) ts.push_back(e.t);
  return ts;
}

void EventSequence::validate() const {
  if (!(t_max > 0.0) || !std::isfinite(t_max)) {
    throw DataError("t_max must be a positive finite number");
  }
  const std::size_t d = dim();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    std::ostringstream where;
    where << "event " << i << " (t=" << e.t << ")";
    if (!std::isfinite(e.t) || e.t < 0.0 || e.t > t_max) {
      throw DataError(where.str() + ": time outside [0, t_max]");
    }
    if (i > 0 && !(events[i - 1].t < e.t)) {
      throw DataError(where.str() + ": non-monotone time (times must strictly increase)");
    }
    if (e.x.size() != d || e.mask.size() != d || d == 0) {
      throw DataError(where.str() + ": dimension mismatch");
    }
    std::size_t observed = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (e.mask[j] > 1) throw DataError(where.str() + ": mask entries must be 0 or 1");
      if (e.mask[j] == 0 && e.x[j] != 0.0) {
        throw DataError(where.str() + ": missing slot not zero-filled");
      }
      if (e.mask[j] == 1 && !std::isfinite(e.x[j])) {
        throw DataError(where.str() + ": non-finite observed value");
      }
      observed += e.mask[j];
    }
    if (observed == 0) throw DataError(where.str() + ": every dimension is missing");
  }
}

std::size_t Dataset::dim() const {
  for (const auto& s : sequences)
    if (!s.empty()) return s.dim();
  return standardization.mean.size();
}

std::size_t Dataset::total_events() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

double horizon_variance(const std::vector<EventSequence>& sequences) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences) {
    if (s.empty()) continue;
    const double t = s.events.back().t;
    sum += t;
    sum2 += t * t;
    ++n;
  }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
}

// --- JSONL ------------------------------------------------------------------

namespace {

EventSequence sequence_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  if (!j.contains("t_max") || !j["t_max"].is_number()) {
    throw DataError("missing numeric field 't_max'");
  }
  if (!j.contains("events") || !j["events"].is_array()) {
    throw DataError("missing array field 'events'");
  }
  EventSequence seq;
  seq.t_max = j["t_max"].get<double>();
  for (const auto& je : j["events"]) {
    if (!je.is_object() || !je.contains("t") || !je["t"].is_number() ||
        !je.contains("x") || !je["x"].is_array()) {
      throw DataError("event needs numeric 't' and array 'x'");
    }
    Event e;
    e.t = je["t"].get<double>();
    for (const auto& v : je["x"]) {
      if (v.is_null()) {
        e.x.push_back(0.0);
        e.mask.push_back(0);
      } else if (v.is_number()) {
        e.x.push_back(v.get<double>());
        e.mask.push_back(1);
      } else {
        throw DataError("feature values must be numbers or null");
      }
    }
    seq.events.push_back(std::move(e));
  }
  seq.validate();
  return seq;
}

json sequence_to_json(const EventSequence& seq) {
  json events = json::array();
  for (const auto& e : seq.events) {
    json x = json::array();
    for (std::size_t j = 0; j < e.x.size(); ++j) {
      if (e.mask[j] != 0) {
        x.push_back(e.x[j]);
      } else {
        x.push_back(nullptr);
      }
    }
    events.push_back({{"t", e.t}, {"x", std::move(x)}});
  }
  return {{"t_max", seq.t_max}, {"events", std::move(events)}};
}

}  // namespace

Dataset parse_jsonl(std::istream& in, const std::string& source) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    EventSequence seq;
    try {
      seq = sequence_from_json(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(where + "parse error: " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!seq.empty()) {
      if (dim == 0) {
        dim = seq.dim();
      } else if (seq.dim() != dim) {
        throw DataError(where + "dimension mismatch: expected " + std::to_string(dim) +
                        ", got " + std::to_string(seq.dim()));
      }
    }
    ds.sequences.push_back(std::move(seq));
  }
  ds.horizon_variance = horizon_variance(ds.sequences);
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_jsonl(in, path.string());
}

void write_jsonl(std::ostream& out, const Dataset& ds) {
  for (const auto& s : ds.sequences) out << sequence_to_json(s).dump() << '\n';
}

void save_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_jsonl(out, ds);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// --- standardization ----------------------------------------------------------

Dataset apply_standardization(const Dataset& ds, const Standardization& table) {
  Dataset out = ds;
  for (auto& s : out.sequences) {
    for (auto& e : s.events) {
      if (e.x.size() != table.mean.size()) {
        throw DataError("dimension mismatch with standardization table");
      }
      for (std::size_t j = 0; j < e.x.size(); ++j) {
        if (e.mask[j] != 0) e.x[j] = (e.x[j] - table.mean[j]) / table.stddev[j];
      }
    }
  }
  out.standardization = table;
  return out;
}

Dataset standardize(const Dataset& ds) {
  const std::size_t d = ds.dim();
  std::vector<double> sum(d, 0.0);
  std::vector<std::size_t> count(d, 0);
  for (const auto& s : ds.sequences)
    for (const auto& e : s.events)
      for (std::size_t j = 0; j < d; ++j)
        if (e.mask[j] != 0) {
          sum[j] += e.x[j];
          ++count[j];
        }
  Standardization fit;
  fit.mean.resize(d);
  fit.stddev.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (count[j] < 2) {
      throw DataError("dimension " + std::to_string(j) + " has fewer than 2 observed values");
    }
    fit.mean[j] = sum[j] / static_cast<double>(count[j]);
  }
  std::vector<double> ss(d, 0.0);
  for (const auto& s : ds.sequences)
    for (const auto& e : s.events)
      for (std::size_t j = 0; j < d; ++j)
        if (e.mask[j] != 0) ss[j] += (e.x[j] - fit.mean[j]) * (e.x[j] - fit.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    fit.stddev[j] = std::sqrt(ss[j] / static_cast<double>(count[j]));
    if (fit.stddev[j] < 1e-12) {
      throw DataError("degenerate dimension " + std::to_string(j) + ": observed std below 1e-12");
    }
  }
  Dataset out = apply_standardization(ds, fit);
  if (!ds.standardization.empty()) {
    // Compose with the table already applied so inversion returns raw units.
    for (std::size_t j = 0; j < d; ++j) {
      out.standardization.mean[j] =
          ds.standardization.mean[j] + ds.standardization.stddev[j] * fit.mean[j];
      out.standardization.stddev[j] = ds.standardization.stddev[j] * fit.stddev[j];
    }
  }
  return out;
}

Dataset inverse_standardize(const Dataset& ds) {
  if (ds.standardization.empty()) return ds;
  Dataset out = ds;
  const auto& tab = ds.standardization;
  for (auto& s : out.sequences)
    for (auto& e : s.events)
      for (std::size_t j = 0; j < e.x.size(); ++j)
        if (e.mask[j] != 0) e.x[j] = e.x[j] * tab.stddev[j] + tab.mean[j];
  out.standardization = {};
  return out;
}

// --- missingness ------------------------------------------------------------

Dataset inject_missing_mcar(const Dataset& ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw UsageError("missing rate must lie in [0, 1)");
  }
  Dataset out = ds;
  if (rate == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& s : out.sequences) {
    for (auto& e : s.events) {
      std::size_t last_observed = e.x.size();
      std::vector<std::uint8_t> keep = e.mask;
      for (std::size_t j = 0; j < e.x.size(); ++j) {
        if (e.mask[j] == 0) continue;
        last_observed = j;
        if (u(rng) < rate) keep[j] = 0;
      }
      bool any = false;
      for (auto k : keep) any = any || k != 0;
      if (!any && last_observed < e.x.size()) keep[last_observed] = 1;
      for (std::size_t j = 0; j < e.x.size(); ++j) {
        e.mask[j] = keep[j];
        if (keep[j] == 0) e.x[j] = 0.0;
      }
    }
  }
  return out;
}

}  // namespace tsdiff

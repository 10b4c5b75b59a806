#include "tsdiff/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tsdiff/error.hpp"

namespace tsdiff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  ModelConfig& m = cfg.model;
  if (key == "hidden_size") {
    m.hidden = to_uint(key, value);
  } else if (key == "embed_size") {
    m.embed = to_uint(key, value);
  } else if (key == "attention_layers") {
    m.attention_layers = to_uint(key, value);
    if (m.attention_layers == 0) throw UsageError("attention_layers must be at least 1");
  } else if (key == "attention_form") {
    if (value == "cross") m.attention_form = AttentionForm::cross;
    else if (value == "pooled") m.attention_form = AttentionForm::pooled;
    else throw UsageError("attention_form must be 'cross' or 'pooled'");
  } else if (key == "norm") {
    if (value == "instance") m.norm = NormKind::instance;
    else if (value == "none") m.norm = NormKind::none;
    else throw UsageError("norm must be 'instance' or 'none'");
  } else if (key == "encoder_jumps") {
    m.encoder_jumps = to_bool(key, value);
  } else if (key == "diffusion_steps") {
    m.diffusion_steps = to_uint(key, value);
    if (m.diffusion_steps == 0) throw UsageError("diffusion_steps must be positive");
  } else if (key == "beta_start") {
    m.beta_start = to_double(key, value);
  } else if (key == "beta_end") {
    m.beta_end = to_double(key, value);
  } else if (key == "noise_hidden") {
    m.noise_hidden = to_uint(key, value);
  } else if (key == "step_embedding") {
    m.step_embedding = to_uint(key, value);
    if (m.step_embedding % 2 != 0) throw UsageError("step_embedding must be even");
  } else if (key == "k_reg") {
    m.k_reg = to_uint(key, value);
  } else if (key == "diffusion_draws") {
    m.diffusion_draws = to_uint(key, value);
    if (m.diffusion_draws == 0) throw UsageError("diffusion_draws must be at least 1");
  } else if (key == "delta") {
    m.delta = to_double(key, value);
  } else if (key == "horizon_sigma") {
    if (value == "variance") m.horizon_sigma_is_variance = true;
    else if (value == "stddev") m.horizon_sigma_is_variance = false;
    else throw UsageError("horizon_sigma must be 'variance' or 'stddev'");
  } else if (key == "solver_step") {
    m.solver_step = to_double(key, value);
    if (m.solver_step < 0.0) throw UsageError("solver_step must be non-negative");
  } else if (key == "dropout") {
    m.dropout = to_double(key, value);
    if (m.dropout < 0.0 || m.dropout >= 1.0) throw UsageError("dropout must lie in [0, 1)");
  } else if (key == "time_scale") {
    m.time_scale = to_double(key, value);
    if (!(m.time_scale >= 0.0)) throw UsageError("time_scale must be non-negative");
  } else if (key == "dim") {
    m.dim = to_uint(key, value);
  } else if (key == "loss_weights") {
    std::istringstream is(value);
    std::string part;
    std::size_t i = 0;
    while (std::getline(is, part, ',')) {
      if (i >= 4) throw UsageError("loss_weights takes exactly four values");
      cfg.loss_weights[i++] = to_double(key, trim(part));
    }
    if (i != 4) throw UsageError("loss_weights takes exactly four values");
    for (double w : cfg.loss_weights)
      if (w < 0.0) throw UsageError("loss weights must be non-negative");
  } else if (key == "batch_size") {
    cfg.batch_size = to_uint(key, value);
    if (cfg.batch_size == 0) throw UsageError("batch_size must be positive");
  } else if (key == "epochs") {
    cfg.epochs = to_uint(key, value);
  } else if (key == "lr") {
    cfg.lr = to_double(key, value);
  } else if (key == "grad_clip") {
    cfg.grad_clip = to_double(key, value);
  } else if (key == "seed") {
    cfg.seed = to_uint(key, value);
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = to_uint(key, value);
  } else if (key == "threads") {
    cfg.threads = std::max<std::uint64_t>(1, to_uint(key, value));
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::map<std::string, std::string> config_entries(const TrainConfig& cfg) {
  const ModelConfig& m = cfg.model;
  std::map<std::string, std::string> e;
  e["dim"] = std::to_string(m.dim);
  e["hidden_size"] = std::to_string(m.hidden);
  e["embed_size"] = std::to_string(m.embed);
  e["attention_layers"] = std::to_string(m.attention_layers);
  e["attention_form"] = m.attention_form == AttentionForm::cross ? "cross" : "pooled";
  e["norm"] = m.norm == NormKind::instance ? "instance" : "none";
  e["encoder_jumps"] = m.encoder_jumps ? "true" : "false";
  e["diffusion_steps"] = std::to_string(m.diffusion_steps);
  e["beta_start"] = fmt(m.beta_start);
  e["beta_end"] = fmt(m.beta_end);
  e["noise_hidden"] = std::to_string(m.noise_hidden);
  e["step_embedding"] = std::to_string(m.step_embedding);
  e["k_reg"] = std::to_string(m.k_reg);
  e["diffusion_draws"] = std::to_string(m.diffusion_draws);
  e["delta"] = fmt(m.delta);
  e["horizon_sigma"] = m.horizon_sigma_is_variance ? "variance" : "stddev";
  e["solver_step"] = fmt(m.solver_step);
  e["dropout"] = fmt(m.dropout);
  e["time_scale"] = fmt(m.time_scale);
  e["loss_weights"] = fmt(cfg.loss_weights[0]) + "," + fmt(cfg.loss_weights[1]) + "," +
                      fmt(cfg.loss_weights[2]) + "," + fmt(cfg.loss_weights[3]);
  e["batch_size"] = std::to_string(cfg.batch_size);
  e["epochs"] = std::to_string(cfg.epochs);
  e["lr"] = fmt(cfg.lr);
  e["grad_clip"] = fmt(cfg.grad_clip);
  e["seed"] = std::to_string(cfg.seed);
  e["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  e["threads"] = std::to_string(cfg.threads);
  return e;
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace tsdiff

// tsdiff: fabricate data, train, synthesize and evaluate.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numerical. Errors go to stderr
// as "tsdiff: error[<kind>]: <message>".

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsdiff/config.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/error.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/model.hpp"
#include "tsdiff/oracles.hpp"
#include "tsdiff/sampler.hpp"
#include "tsdiff/training.hpp"

namespace fs = std::filesystem;
using namespace tsdiff;

namespace {

int fail(ErrorKind kind, const std::string& msg) {
  std::cerr << "tsdiff: error[" << error_tag(kind) << "]: " << msg << '\n';
  return static_cast<int>(kind);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TSDIFF_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("TSDIFF_SEED is not a non-negative integer: '") + env + "'");
  }
  return 0;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

fs::path sibling(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p.replace_extension();
  return p.string() + suffix;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of numbers, got '" + text + "'");
    }
  }
  return out;
}

// --- subcommands ------------------------------------------------------------

struct DatagenArgs {
  std::string oracle = "homogeneous";
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  OracleSpec spec;
  std::string rho;
};

int run_datagen(DatagenArgs& a) {
  a.spec.kind = parse_oracle_kind(a.oracle);
  if (!a.rho.empty()) a.spec.rho = parse_list(a.rho);
  std::mt19937_64 rng(resolve_seed(a.seed));
  save_jsonl(a.out, gen_oracle(a.spec, a.n, rng));
  return 0;
}

struct TrainArgs {
  std::string config, data, out;
  std::vector<std::string> set;
  std::optional<std::size_t> epochs, threads;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool verbose = false;
};

int run_train(TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.threads) cfg.threads = *a.threads;
  if (a.seed || std::getenv("TSDIFF_SEED")) cfg.seed = resolve_seed(a.seed);

  const Dataset raw = load_jsonl(a.data);
  Model model;
  Dataset ds;
  if (a.resume && fs::exists(a.out)) {
    model = load_checkpoint(a.out);
    model.config.epochs = cfg.epochs;
    model.config.threads = cfg.threads;
    ds = apply_standardization(raw, model.standardization);
  } else {
    ds = standardize(raw);
    model = Model::for_dataset(cfg, ds);
  }

  TrainOptions opts;
  opts.checkpoint = a.out;
  opts.metrics = sibling(a.out, ".metrics.csv");
  if (a.verbose) {
    opts.on_epoch = [](std::size_t epoch, const LossBreakdown& l) {
      std::cerr << metrics_row(epoch, l) << '\n';
    };
  }
  const auto history = train(model, ds, opts);
  if (history.empty()) save_checkpoint(a.out, model);
  std::cout << metrics_header() << '\n';
  if (!history.empty()) std::cout << metrics_row(model.epoch, history.back()) << '\n';
  return 0;
}

struct SynthArgs {
  std::string ckpt, out;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  bool emit_missing = false;
};

int run_synth(SynthArgs& a) {
  const Model model = load_checkpoint(a.ckpt);
  const auto result = synthesize(model, a.n, resolve_seed(a.seed), a.emit_missing, a.threads);
  save_jsonl(a.out, result.data);
  std::cerr << "thinning: proposed=" << result.stats.proposed
            << " accepted=" << result.stats.accepted
            << " violations=" << result.stats.violations << '\n';
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, synth, out;
  std::size_t clusters = 20;
  std::size_t bins = 20;
  std::size_t threads = 1;  // evaluation runs serially; the cap is always met
  std::optional<std::uint64_t> seed;
};

int run_eval(EvalArgs& a) {
  const Model model = load_checkpoint(a.ckpt);
  const Dataset raw = load_jsonl(a.data);
  if (raw.dim() != 0 && raw.dim() != model.model_config().dim) {
    throw DataError("data dimension does not match the checkpoint");
  }
  EvalReport report;
  report.scores = eval_scores(model, apply_standardization(raw, model.standardization));
  report.sequences = raw.sequences.size();
  report.events = raw.total_events();
  report.tfc = tfc_score(raw);
  report.durations = duration_stats(raw, a.bins);

  if (!a.synth.empty()) {
    const Dataset fake = load_jsonl(a.synth);
    PrdOptions popts;
    popts.clusters = a.clusters;
    popts.seed = resolve_seed(a.seed);
    report.prd = prd_curve(prd_features(raw), prd_features(fake), popts);
    try {
      report.synth_tfc = tfc_score(fake);
    } catch (const DataError& e) {
      std::cerr << "tsdiff: warning: synthesized TFC unavailable: " << e.what() << '\n';
    }
    // Shared bins over both sets for the comparison.
    auto all = duration_stats(raw, a.bins).durations;
    const auto fd = duration_stats(fake, a.bins).durations;
    all.insert(all.end(), fd.begin(), fd.end());
    double lo = 0.0, hi = 0.0;
    if (!all.empty()) {
      lo = *std::min_element(all.begin(), all.end());
      hi = *std::max_element(all.begin(), all.end());
    }
    const auto edges = uniform_edges(lo, hi, a.bins);
    report.durations = duration_stats(raw, edges);
    report.synth_durations = duration_stats(fake, edges);
    if (report.durations.histogram.total() > 0 && report.synth_durations->histogram.total() > 0)
      report.duration_tv = total_variation(report.durations.histogram,
                                           report.synth_durations->histogram);
    write_text(sibling(a.out, "_prd.csv"), prd_csv(*report.prd));
  }
  for (const auto& w : report.tfc.warnings) std::cerr << "tsdiff: warning: " << w << '\n';
  write_text(a.out, report_json(report) + "\n");
  write_text(sibling(a.out, "_durations.csv"), durations_csv(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tsdiff: irregular time-series synthesis"};
  app.require_subcommand(1);
  app.allow_extras(false);

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Write a synthetic oracle dataset");
  datagen->add_option("--oracle", dg.oracle, "homogeneous | sinusoidal | hawkes")->required();
  datagen->add_option("--n", dg.n, "Number of sequences")->required();
  datagen->add_option("--seed", dg.seed, "Seed (falls back to TSDIFF_SEED)");
  datagen->add_option("--out", dg.out, "Output JSONL")->required();
  datagen->add_option("--horizon", dg.spec.horizon, "Horizon T");
  datagen->add_option("--dim", dg.spec.dim, "Feature dimension");
  datagen->add_option("--rho", dg.rho, "Per-dimension time correlation, e.g. 0.6,0");
  datagen->add_option("--missing-rate", dg.spec.missing_rate, "MCAR rate");
  datagen->add_option("--rate", dg.spec.rate, "Homogeneous rate");
  datagen->add_option("--mu", dg.spec.mu, "Sinusoidal base rate");
  datagen->add_option("--amplitude", dg.spec.amplitude, "Sinusoidal amplitude");
  datagen->add_option("--period", dg.spec.period, "Sinusoidal period");
  datagen->add_option("--hawkes-mu", dg.spec.hawkes_mu, "Hawkes base rate");
  datagen->add_option("--alpha", dg.spec.hawkes_alpha, "Hawkes jump size");
  datagen->add_option("--beta", dg.spec.hawkes_beta, "Hawkes decay");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "key = value config file");
  train_cmd->add_option("--data", tr.data, "Training JSONL")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--set", tr.set, "Config override key=value (repeatable)");
  train_cmd->add_option("--epochs", tr.epochs, "Override epochs");
  train_cmd->add_option("--seed", tr.seed, "Override seed (falls back to TSDIFF_SEED)");
  train_cmd->add_option("--threads", tr.threads, "Worker threads");
  train_cmd->add_flag("--resume", tr.resume, "Continue from --out if it exists");
  train_cmd->add_flag("--verbose", tr.verbose, "Print per-epoch losses");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Synthesize sequences from a checkpoint");
  synth->add_option("--ckpt", sy.ckpt, "Checkpoint")->required();
  synth->add_option("--n", sy.n, "Number of sequences")->required();
  synth->add_option("--seed", sy.seed, "Seed (falls back to TSDIFF_SEED)");
  synth->add_option("--threads", sy.threads, "Worker threads");
  synth->add_flag("--emit-missing", sy.emit_missing, "Sample masks from the missingness head");
  synth->add_option("--out", sy.out, "Output JSONL")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on data");
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval->add_option("--data", ev.data, "Held-out JSONL")->required();
  eval->add_option("--synth", ev.synth, "Synthesized JSONL (enables PRD)");
  eval->add_option("--out", ev.out, "Report JSON")->required();
  eval->add_option("--clusters", ev.clusters, "PRD k-means clusters");
  eval->add_option("--bins", ev.bins, "Duration histogram bins");
  eval->add_option("--seed", ev.seed, "k-means seed (falls back to TSDIFF_SEED)");
  eval->add_option("--threads", ev.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorKind::usage, e.what());
  }

  try {
    if (*datagen) return run_datagen(dg);
    if (*train_cmd) return run_train(tr);
    if (*synth) return run_synth(sy);
    if (*eval) return run_eval(ev);
    return fail(ErrorKind::usage, "no subcommand");
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::data, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorKind::numerical, e.what());
  }
}

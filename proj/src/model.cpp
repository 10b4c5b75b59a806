#include "tsdiff/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "tsdiff/error.hpp"

namespace tsdiff {

Model Model::create(const TrainConfig& config) {
  const ModelConfig& m = config.model;
  if (m.dim == 0) throw DataError("model dimension is not set");
  if (!(m.time_scale > 0.0)) throw UsageError("time_scale must be resolved before model creation");
  Model model;
  model.config = config;
  std::mt19937_64 rng(config.seed);
  model.encoder = Encoder(model.store, m, rng);
  model.decoder = Decoder(model.store, m, rng);
  model.noise = NoiseNet(model.store, m.hidden, m.noise_hidden, m.step_embedding, rng);
  model.schedule = DiffusionSchedule::linear(m.diffusion_steps, m.beta_start, m.beta_end);
  return model;
}

Model Model::for_dataset(TrainConfig config, const Dataset& standardized) {
  if (standardized.sequences.empty()) throw DataError("training set is empty");
  const std::size_t d = standardized.dim();
  if (d == 0) throw DataError("training set has no events");
  if (config.model.dim != 0 && config.model.dim != d) {
    throw DataError("config dim " + std::to_string(config.model.dim) +
                    " does not match data dimension " + std::to_string(d));
  }
  config.model.dim = d;
  if (config.model.time_scale == 0.0) {
    double sum = 0.0;
    for (const auto& s : standardized.sequences) sum += s.t_max;
    config.model.time_scale = sum / static_cast<double>(standardized.sequences.size());
  }
  Model model = create(config);
  model.standardization = standardized.standardization;
  model.horizon_variance = standardized.horizon_variance;
  return model;
}

// --- checkpoint I/O -----------------------------------------------------------
//
// Layout: "TSDIFFCK", u32 version, u64 meta length + meta text (key = value
// lines), u64 D + D means + D stddevs, u64 array count, then per array:
// u32 name length + name, u32 rank, u64 dims[rank], f64 values; then the
// Adam first and second moments of every array in the same order.

namespace {

constexpr char kMagic[8] = {'T', 'S', 'D', 'I', 'F', 'F', 'C', 'K'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint is truncated");
  return v;
}

void get_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint is truncated");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ostringstream meta;
  meta << format_config(model.config);
  meta << "epoch = " << model.epoch << "\n";
  meta << "adam_step = " << model.store.step() << "\n";
  meta << "horizon_variance = " << fmt(model.horizon_variance) << "\n";
  const std::string text = meta.str();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    const auto& st = model.standardization;
    put<std::uint64_t>(out, st.mean.size());
    put_doubles(out, st.mean);
    put_doubles(out, st.stddev);

    const ParameterStore& store = model.store;
    put<std::uint64_t>(out, store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const std::string& name = store.name(i);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, 2);
      put<std::uint64_t>(out, store.value(i).rows());
      put<std::uint64_t>(out, store.value(i).cols());
      put_doubles(out, store.value(i).data());
    }
    for (std::size_t i = 0; i < store.size(); ++i) put_doubles(out, store.adam_m(i).data());
    for (std::size_t i = 0; i < store.size(); ++i) put_doubles(out, store.adam_v(i).data());
    if (!out) throw DataError("write failed for checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path.string() + "' is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version mismatch: file has " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto meta_len = get<std::uint64_t>(in);
  if (meta_len > (1u << 20)) throw DataError("checkpoint metadata is corrupt");
  std::string text(meta_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw DataError("checkpoint is truncated");

  TrainConfig config;
  std::size_t epoch = 0;
  std::uint64_t adam_step = 0;
  double hvar = 0.0;
  {
    std::istringstream lines(text);
    std::string line, rest;
    while (std::getline(lines, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
      try {
        if (key == "epoch") {
          epoch = std::stoull(value);
        } else if (key == "adam_step") {
          adam_step = std::stoull(value);
        } else if (key == "horizon_variance") {
          hvar = std::stod(value);
        } else {
          apply_config_entry(config, key, value);
        }
      } catch (const std::exception& e) {
        throw DataError(std::string("checkpoint metadata: ") + e.what());
      }
    }
  }

  Model model = Model::create(config);
  model.epoch = epoch;
  model.horizon_variance = hvar;
  model.store.set_step(adam_step);

  const auto d = get<std::uint64_t>(in);
  if (d != config.model.dim) throw DataError("checkpoint standardization has the wrong size");
  model.standardization.mean.resize(d);
  model.standardization.stddev.resize(d);
  get_doubles(in, model.standardization.mean);
  get_doubles(in, model.standardization.stddev);

  ParameterStore& store = model.store;
  const auto count = get<std::uint64_t>(in);
  if (count != store.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " arrays, model expects " +
                    std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw DataError("checkpoint is truncated");
    if (!store.contains(name) || store.index(name) != i) {
      throw DataError("checkpoint array '" + name + "' does not match the model layout");
    }
    const auto rank = get<std::uint32_t>(in);
    if (rank != 2) throw DataError("checkpoint array '" + name + "' has unsupported rank");
    const auto rows = get<std::uint64_t>(in), cols = get<std::uint64_t>(in);
    ad::Tensor& v = store.value(i);
    if (rows != v.rows() || cols != v.cols()) {
      throw DataError("checkpoint array '" + name + "' has the wrong shape");
    }
    get_doubles(in, v.data());
  }
  for (std::size_t i = 0; i < count; ++i) get_doubles(in, store.adam_m(i).data());
  for (std::size_t i = 0; i < count; ++i) get_doubles(in, store.adam_v(i).data());
  return model;
}

}  // namespace tsdiff

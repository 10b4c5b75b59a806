#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "tsdiff/config.hpp"
#include "tsdiff/error.hpp"
#include "tsdiff/oracles.hpp"
#include "tsdiff/training.hpp"

using namespace tsdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "tsdiff_unit";
  fs::create_directories(dir);
  return dir / name;
}

Dataset small_dataset(std::size_t n, std::uint64_t seed) {
  OracleSpec spec;
  spec.kind = OracleKind::homogeneous;
  spec.rate = 2.0;
  spec.horizon = 2.0;
  spec.dim = 2;
  spec.missing_rate = 0.2;
  std::mt19937_64 rng(seed);
  return standardize(gen_oracle(spec, n, rng));
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.hidden = 4;
  cfg.model.attention_layers = 2;
  cfg.model.noise_hidden = 6;
  cfg.model.step_embedding = 4;
  cfg.model.diffusion_steps = 20;
  cfg.model.solver_step = 0.25;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST_CASE("loss pieces by hand") {
  ad::Tape tape;
  CHECK(horizon_loss(tape.scalar(10.5), 10.0, 0.05).scalar() == 0.0);
  CHECK(horizon_loss(tape.scalar(12.0), 10.0, 0.05).scalar() == doctest::Approx(2.25));

  const std::uint8_t observed[] = {1};
  CHECK(missingness_loss(tape.scalar(0.0), observed).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Observed cell with a confident "observed" logit costs little, the
  // same logit on a missing cell costs a lot.
  const std::uint8_t missing[] = {0};
  CHECK(missingness_loss(tape.scalar(4.0), observed).scalar() < 0.02);
  CHECK(missingness_loss(tape.scalar(4.0), missing).scalar() > 4.0);

  CHECK(weighted_total({0.4, 0.4, 0.1, 0.1}, {1, 1, 1, 1, 0}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("hybrid loss") {
  Dataset ds = small_dataset(4, 1);
  TrainConfig cfg = tiny_config();
  Model model = Model::for_dataset(cfg, ds);
  CHECK(model.config.model.time_scale == doctest::Approx(2.0));
  const EventSequence& seq = ds.sequences[0];
  REQUIRE(seq.size() > 0);

  // s enters the diffusion term detached, so finite differences of the
  // full total would see a dependence the gradient deliberately drops.
  // Check the decoder-side terms and the diffusion term separately.
  auto check_fd = [&](std::array<double, 4> weights, bool noise_only) {
    model.config.loss_weights = weights;
    const std::mt19937_64 seed(99);
    auto loss = [&](ad::Tape& tape) {
      std::mt19937_64 rng = seed;
      return hybrid_loss(model, tape, seq, rng, false).total;
    };
    ad::Tape tape;
    auto grads = model.store.zero_like();
    tape.backward(loss(tape)).accumulate_params(grads);
    auto f = [&] {
      ad::Tape t;
      return loss(t).scalar();
    };
    std::mt19937_64 dir(2);
    for (std::size_t i = 0; i < model.store.size(); ++i) {
      const bool noise = model.store.name(i).rfind("eps.", 0) == 0;
      CAPTURE(model.store.name(i));
      if (noise_only && !noise) {
        for (double g : grads[i].data()) CHECK(g == 0.0);
        continue;
      }
      if (!noise_only && noise) {
        for (double g : grads[i].data()) CHECK(g == 0.0);
        continue;
      }
      CHECK(testing::directional_fd(model.store, i, grads[i], f, dir) < 1e-3);
    }
  };

  SUBCASE("likelihood, horizon and mask terms match finite differences") {
    check_fd({0.4, 0.0, 0.1, 0.1}, false);
  }
  SUBCASE("diffusion term reaches only the noise net") { check_fd({0.0, 1.0, 0.0, 0.0}, true); }

  SUBCASE("no events means no horizon term") {
    EventSequence empty;
    empty.t_max = 2.0;
    ad::Tape tape;
    std::mt19937_64 rng(1);
    auto l = hybrid_loss(model, tape, empty, rng, true);
    CHECK(l.values.l3 == 0.0);
    CHECK(l.values.l4 == 0.0);
    CHECK(std::isfinite(l.values.total));
  }

  SUBCASE("zero weight removes the diffusion gradient") {
    model.config.loss_weights = {0.4, 0.0, 0.1, 0.1};
    std::vector<ad::Tensor> before;
    for (std::size_t i = 0; i < model.store.size(); ++i) before.push_back(model.store.value(i));
    const std::size_t batch[] = {0, 1, 2};
    model.store.zero_grad();
    batch_gradient(model, ds, batch, 1, 0);
    apply_update(model);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < model.store.size(); ++i) {
      const bool same = model.store.value(i) == before[i];
      if (model.store.name(i).rfind("eps.", 0) == 0) CHECK(same);
      else if (!same) ++moved;
    }
    CHECK(moved > 0);
  }

  SUBCASE("all weights zero skips the update") {
    model.config.loss_weights = {0.0, 0.0, 0.0, 0.0};
    const ad::Tensor before = model.store.value(0);
    const std::size_t batch[] = {0};
    model.store.zero_grad();
    batch_gradient(model, ds, batch, 1, 0);
    apply_update(model);
    CHECK(model.store.value(0) == before);
    CHECK(model.store.step() == 0);
  }
}

TEST_CASE("batch gradients do not depend on the thread count") {
  Dataset ds = small_dataset(5, 2);
  TrainConfig cfg = tiny_config();
  Model one = Model::for_dataset(cfg, ds);
  cfg.threads = 3;
  Model three = Model::for_dataset(cfg, ds);
  const std::size_t batch[] = {4, 0, 2, 1, 3};
  one.store.zero_grad();
  three.store.zero_grad();
  auto a = batch_gradient(one, ds, batch, 1, 0);
  auto b = batch_gradient(three, ds, batch, 1, 0);
  CHECK(a.total == b.total);
  for (std::size_t i = 0; i < one.store.size(); ++i) CHECK(one.store.grad(i) == three.store.grad(i));
}

TEST_CASE("non-finite loss names the sequence") {
  Dataset ds = small_dataset(3, 3);
  Model model = Model::for_dataset(tiny_config(), ds);
  for (double& v : model.store.value(model.store.index("enc.s_init")).data()) v = std::nan("");
  const std::size_t batch[] = {2};
  try {
    batch_gradient(model, ds, batch, 1, 0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("sequence 2") != std::string::npos);
  }
}

TEST_CASE("resume reproduces uninterrupted training") {
  Dataset ds = small_dataset(6, 4);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;

  Model straight = Model::for_dataset(cfg, ds);
  train(straight, ds);

  const fs::path ck = scratch("resume.ckpt");
  const fs::path csv = scratch("resume.csv");
  Model first = Model::for_dataset(cfg, ds);
  TrainOptions opts;
  opts.checkpoint = ck;
  opts.metrics = csv;
  opts.stop_after = 1;
  train(first, ds, opts);
  CHECK(first.epoch == 1);

  Model resumed = load_checkpoint(ck);
  CHECK(resumed.epoch == 1);
  opts.stop_after = 0;
  train(resumed, ds, opts);
  CHECK(resumed.epoch == 3);
  REQUIRE(resumed.store.size() == straight.store.size());
  for (std::size_t i = 0; i < straight.store.size(); ++i) {
    CAPTURE(straight.store.name(i));
    CHECK(resumed.store.value(i) == straight.store.value(i));
    CHECK(resumed.store.adam_m(i) == straight.store.adam_m(i));
  }

  std::ifstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == metrics_header());
  CHECK(lines[3].rfind("3,", 0) == 0);
}

TEST_CASE("loss decreases on a small set") {
  Dataset ds = small_dataset(8, 5);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 30;
  cfg.lr = 1e-2;
  Model model = Model::for_dataset(cfg, ds);
  auto hist = train(model, ds);
  REQUIRE(hist.size() == 30);
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    early += hist[i].total;
    late += hist[25 + i].total;
  }
  CHECK(late < early);
}

TEST_CASE("config") {
  TrainConfig cfg = parse_config(
      "# comment\n"
      "hidden_size = 16\n"
      "attention_form = pooled\n"
      "loss_weights = 0.5, 0.2, 0.2, 0.1\n"
      "epochs = 7  # trailing\n");
  CHECK(cfg.model.hidden == 16);
  CHECK(cfg.model.attention_form == AttentionForm::pooled);
  CHECK(cfg.loss_weights[0] == 0.5);
  CHECK(cfg.epochs == 7);
  CHECK(parse_config(format_config(cfg)).model.hidden == 16);
  CHECK(format_config(parse_config(format_config(cfg))) == format_config(cfg));
  CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("hidden_size = lots\n"), UsageError);
  CHECK_THROWS_AS(parse_config("hidden_size 16\n"), UsageError);
}

TEST_CASE("checkpoint round trip") {
  Dataset ds = small_dataset(3, 6);
  Model model = Model::for_dataset(tiny_config(), ds);
  model.epoch = 4;
  model.store.set_step(17);
  model.store.adam_m(0)[0] = 0.125;
  const fs::path path = scratch("round.ckpt");
  save_checkpoint(path, model);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  Model back = load_checkpoint(path);
  CHECK(back.epoch == 4);
  CHECK(back.store.step() == 17);
  CHECK(back.standardization == model.standardization);
  CHECK(back.horizon_variance == model.horizon_variance);
  CHECK(format_config(back.config) == format_config(model.config));
  for (std::size_t i = 0; i < model.store.size(); ++i) {
    CHECK(back.store.name(i) == model.store.name(i));
    CHECK(back.store.value(i) == model.store.value(i));
    CHECK(back.store.adam_m(i) == model.store.adam_m(i));
    CHECK(back.store.adam_v(i) == model.store.adam_v(i));
  }

  // Version bump in the header.
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    bytes = os.str();
  }
  const fs::path cut = scratch("truncated.ckpt");
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(cut), DataError);

  bytes[8] = static_cast<char>(bytes[8] + 1);
  const fs::path bad = scratch("bad_version.ckpt");
  std::ofstream(bad, std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(bad), DataError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), DataError);
}

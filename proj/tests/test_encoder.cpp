#include <doctest.h>

#include "support.hpp"
#include "tsdiff/encoder.hpp"
#include "tsdiff/error.hpp"

using namespace tsdiff;
using ad::Tensor;

namespace {

ModelConfig encoder_config(std::size_t dim, std::size_t hidden, std::size_t layers) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.hidden = hidden;
  cfg.attention_layers = layers;
  cfg.solver_step = 0.1;
  cfg.time_scale = 1.0;
  return cfg;
}

void set_identity(Tensor& w) {
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = r == c ? 1.0 : 0.0;
}

}  // namespace

TEST_CASE("token construction") {
  // U = 2, H = 4U so both combine layers can be identities.
  ModelConfig cfg = encoder_config(1, 8, 1);
  cfg.embed = 2;
  ParameterStore store;
  std::mt19937_64 rng(1);
  Encoder enc(store, cfg, rng);
  set_identity(store.value(store.index("enc.combine.w1")));
  set_identity(store.value(store.index("enc.combine.w2")));
  for (double& u : store.value(store.index("enc.embed")).data()) u = 1.0;

  ad::Tape tape;
  auto b = enc.bind(tape, store);
  const std::uint8_t mask[] = {1};
  const double one[] = {1.0};
  auto tokens = enc.embed_and_combine(b, one, mask);
  REQUIRE(tokens.size() == 1);
  REQUIRE(tokens[0].size() == 8);
  // e1 = y, z, y - z, y * z = 1, 1, 0, 1 per coordinate; e2 = tanh(e1).
  const double t1 = std::tanh(1.0);
  const double expect[] = {t1, t1, t1, t1, 0.0, 0.0, t1, t1};
  for (std::size_t i = 0; i < 8; ++i) CHECK(tokens[0][i] == doctest::Approx(expect[i]).epsilon(1e-15));

  // x = 0: e1 = y, 0, y, 0.
  const double zero[] = {0.0};
  auto z = enc.embed_and_combine(b, zero, mask);
  const double expect0[] = {t1, t1, 0.0, 0.0, t1, t1, 0.0, 0.0};
  for (std::size_t i = 0; i < 8; ++i) CHECK(z[0][i] == doctest::Approx(expect0[i]).epsilon(1e-15));
}

TEST_CASE("pooling by hand") {
  ModelConfig cfg = encoder_config(2, 3, 1);
  ParameterStore store;
  std::mt19937_64 rng(2);
  Encoder enc(store, cfg, rng);
  set_identity(store.value(store.index("enc.attn0.q")));
  set_identity(store.value(store.index("enc.attn0.k")));
  set_identity(store.value(store.index("enc.attn0.v")));

  ad::Tape tape;
  auto b = enc.bind(tape, store);
  // Logits are |e_j|^2: 0 and ln 3, so weights 1/4 and 3/4.
  const double r = std::sqrt(std::log(3.0));
  std::vector<ad::Var> tokens{tape.constant(std::vector<double>{0.0, 0.0, 0.0}),
                              tape.constant(std::vector<double>{r, 0.0, 0.0})};
  const std::uint8_t both[] = {1, 1};
  ad::Var x = enc.attention_stack(b, tokens, both);
  CHECK(x[0] == doctest::Approx(0.75 * r).epsilon(1e-14));
  CHECK(x[1] == 0.0);

  // One observed token: x~ = v_1 exactly.
  ModelConfig one = encoder_config(1, 3, 1);
  ParameterStore s1;
  Encoder e1(s1, one, rng);
  ad::Tape t1;
  auto b1 = e1.bind(t1, s1);
  ad::Var tok = t1.constant(std::vector<double>{0.3, -1.2, 2.0});
  const std::uint8_t m1[] = {1};
  ad::Var got = e1.attention_stack(b1, {tok}, m1);
  ad::Var v = ad::matvec(b1.v[0], tok);
  CHECK(got.value() == v.value());

  const std::uint8_t none[] = {0, 0};
  CHECK_THROWS_AS(enc.attention_stack(b, tokens, none), DataError);
}

TEST_CASE("masked cells never reach the representation") {
  for (auto form : {AttentionForm::cross, AttentionForm::pooled}) {
    ModelConfig cfg = encoder_config(3, 5, 3);
    cfg.attention_form = form;
    ParameterStore store;
    std::mt19937_64 rng(3);
    Encoder enc(store, cfg, rng);
    ad::Tape tape;
    auto b = enc.bind(tape, store);
    const std::uint8_t mask[] = {1, 0, 1};
    const double a[] = {0.4, 0.0, -1.0};
    const double c[] = {0.4, 123.0, -1.0};
    CHECK(enc.represent(b, a, mask).value() == enc.represent(b, c, mask).value());
  }
}

TEST_CASE("encode") {
  Model model = testing::small_model(2, 4);
  const Encoder& enc = model.encoder;

  SUBCASE("sequences differing only at masked cells give the same latent") {
    EventSequence a = testing::make_sequence(2.0, {0.3, 1.1}, {{1.0, 0.0}, {0.5, -0.5}},
                                             {{1, 0}, {1, 1}});
    EventSequence c = a;
    c.events[0].x[1] = 99.0;  // masked slot with garbage
    ad::Tape t1, t2;
    auto l1 = enc.encode(enc.bind(t1, model.store), a).latent;
    auto l2 = enc.encode(enc.bind(t2, model.store), c).latent;
    CHECK(l1.value() == l2.value());
  }

  SUBCASE("frozen dynamics keep the initial state") {
    testing::zero_params(model.store, "enc.f_s");
    ModelConfig cfg = model.config.model;
    cfg.encoder_jumps = false;
    ParameterStore store;
    std::mt19937_64 rng(1);
    Encoder frozen(store, cfg, rng);
    testing::zero_params(store, "enc.f_s");
    EventSequence seq = testing::make_sequence(2.0, {0.5, 1.5}, {{1.0, 2.0}, {3.0, 4.0}});
    ad::Tape tape;
    auto b = frozen.bind(tape, store);
    CHECK(frozen.encode(b, seq).latent.value() == store.value(store.index("enc.s_init")));
  }

  SUBCASE("no events: jumps are irrelevant") {
    EventSequence empty;
    empty.t_max = 2.0;
    ad::Tape t1, t2;
    auto with = enc.encode(enc.bind(t1, model.store), empty).latent;
    ModelConfig cfg = model.config.model;
    cfg.encoder_jumps = false;
    ParameterStore store;
    std::mt19937_64 rng(cfg.dim);
    Encoder no_jumps(store, cfg, rng);
    // Same weights as the model's encoder.
    for (std::size_t i = 0; i < store.size(); ++i)
      store.value(i) = model.store.value(model.store.index(store.name(i)));
    auto without = no_jumps.encode(no_jumps.bind(t2, store), empty).latent;
    CHECK(with.value() == without.value());
    // And the flow actually moved the state.
    CHECK(with.value() != model.store.value(model.store.index("enc.s_init")));
  }
}

TEST_CASE("encoder gradients through the solver") {
  Model model = testing::small_model(2, 3, 5);
  EventSequence seq = testing::make_sequence(1.5, {0.2, 0.9, 1.3}, {{0.5, 0.0}, {-1.0, 0.7}, {0.1, 0.2}},
                                             {{1, 0}, {1, 1}, {0, 1}});
  auto loss = [&](ad::Tape& tape) {
    auto b = model.encoder.bind(tape, model.store);
    ad::Var s = model.encoder.encode(b, seq).latent;
    return ad::dot(s, tape.constant(std::vector<double>{0.3, -0.7, 1.1}));
  };
  ad::Tape tape;
  auto grads = model.store.zero_like();
  tape.backward(loss(tape)).accumulate_params(grads);
  auto f = [&] {
    ad::Tape t;
    return loss(t).scalar();
  };
  std::mt19937_64 dir(3);
  for (std::size_t i = 0; i < model.store.size(); ++i) {
    if (model.store.name(i).rfind("enc.", 0) != 0) continue;
    CAPTURE(model.store.name(i));
    CHECK(testing::directional_fd(model.store, i, grads[i], f, dir) < 1e-3);
  }
}

#include <doctest.h>

#include <sstream>

#include "support.hpp"
#include "tsdiff/error.hpp"

using namespace tsdiff;

TEST_CASE("jsonl null becomes a masked zero") {
  std::istringstream in(R"({"t_max":2.0,"events":[{"t":0.5,"x":[1.0,null]}]})");
  Dataset ds = parse_jsonl(in);
  REQUIRE(ds.sequences.size() == 1);
  const Event& e = ds.sequences[0].events.at(0);
  CHECK(e.t == 0.5);
  CHECK(e.x == std::vector<double>{1.0, 0.0});
  CHECK(e.mask == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("empty sequences and ordering") {
  std::istringstream empty(R"({"t_max":3.0,"events":[]})");
  Dataset ds = parse_jsonl(empty);
  CHECK(ds.sequences.at(0).empty());

  std::istringstream bad(R"({"t_max":1.0,"events":[{"t":0.7,"x":[1]},{"t":0.3,"x":[2]}]})");
  CHECK_THROWS_AS(parse_jsonl(bad), DataError);
  std::istringstream junk("{not json");
  CHECK_THROWS_AS(parse_jsonl(junk), DataError);
  std::istringstream beyond(R"({"t_max":1.0,"events":[{"t":1.5,"x":[1]}]})");
  CHECK_THROWS_AS(parse_jsonl(beyond), DataError);
}

TEST_CASE("jsonl round trip") {
  Dataset ds;
  ds.sequences.push_back(testing::make_sequence(4.0, {0.25, 1.0 / 3.0}, {{1.5, -2.0}, {0.1, 7.0}},
                                                {{1, 1}, {0, 1}}));
  ds.sequences.push_back(testing::make_sequence(1.0, {}, {}));
  std::ostringstream out;
  write_jsonl(out, ds);
  std::istringstream in(out.str());
  Dataset back = parse_jsonl(in);
  CHECK(back.sequences == ds.sequences);
}

TEST_CASE("standardize") {
  Dataset ds;
  ds.sequences.push_back(testing::make_sequence(5.0, {1.0, 2.0, 3.0}, {{1.0, 4.0}, {3.0, 0.0}, {9.0, 8.0}},
                                                {{1, 1}, {1, 0}, {0, 1}}));
  Dataset z = standardize(ds);
  const auto& ev = z.sequences[0].events;
  CHECK(ev[0].x[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(ev[1].x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ev[1].x[1] == 0.0);  // missing stays zero
  CHECK(ev[2].x[0] == 0.0);
  CHECK(z.standardization.mean[0] == doctest::Approx(2.0));

  Dataset back = inverse_standardize(z);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(back.sequences[0].events[i].x[j] - ds.sequences[0].events[i].x[j]) < 1e-9);

  Dataset flat;
  flat.sequences.push_back(testing::make_sequence(5.0, {1.0, 2.0}, {{3.0}, {3.0}}));
  CHECK_THROWS_AS(standardize(flat), DataError);
}

TEST_CASE("mcar injection") {
  Dataset ds;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> times;
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < 100; ++i) {
      times.push_back(0.01 * (i + 1));
      std::vector<double> x(10);
      for (double& v : x) v = normal(rng);
      xs.push_back(x);
    }
    ds.sequences.push_back(testing::make_sequence(2.0, times, xs));
  }
  CHECK(inject_missing_mcar(ds, 0.0, 1) == ds);
  CHECK_THROWS_AS(inject_missing_mcar(ds, 1.0, 1), UsageError);

  Dataset a = inject_missing_mcar(ds, 0.3, 42);
  Dataset b = inject_missing_mcar(ds, 0.3, 42);
  CHECK(a == b);
  std::size_t cells = 0, missing = 0;
  for (const auto& s : a.sequences)
    for (const auto& e : s.events) {
      CHECK(e.observed() >= 1);
      for (std::size_t j = 0; j < e.mask.size(); ++j) {
        ++cells;
        if (!e.mask[j]) {
          ++missing;
          CHECK(e.x[j] == 0.0);
        }
      }
    }
  CHECK(cells == 100000);
  CHECK(std::abs(static_cast<double>(missing) / cells - 0.3) < 0.01);
}

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "fdctrack/config.hpp"
#include "fdctrack/detector.hpp"
#include "fdctrack/rng.hpp"

using namespace fdc;

TEST_CASE("counter rng is keyed by seed and stream") {
  CounterRng a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
    CHECK(va != d.next_u64());
  }
}

TEST_CASE("uniform moments") {
  CounterRng r(1, 0);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
    s2 += u * u;
  }
  CHECK(s / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(1.0 / 12).epsilon(0.02));
}

TEST_CASE("uniform_int covers the closed range evenly") {
  CounterRng r(2, 0);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const long v = r.uniform_int(-3, 3);
    REQUIRE(v >= -3);
    REQUIRE(v <= 3);
    ++counts[static_cast<std::size_t>(v + 3)];
  }
  // 5 sigma binomial band around 10000.
  for (int c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(70000 * (1.0 / 7) * (6.0 / 7)));
}

TEST_CASE("normal and poisson moments") {
  CounterRng r(3, 0);
  const int n = 200000;
  double s = 0, s2 = 0, p = 0, p2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    const double k = r.poisson(3.0);
    p += k;
    p2 += k * k;
  }
  CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(p / n == doctest::Approx(3.0).epsilon(0.01));
  CHECK(p2 / n - (p / n) * (p / n) == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("shuffle is a permutation and deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  CounterRng a(4, 1), b(4, 1);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
  std::vector<int> sorted(50);
  std::iota(sorted.begin(), sorted.end(), 0);
  CHECK(v != sorted);
}

TEST_CASE("key-value config parsing") {
  const auto kv = KeyValueConfig::parse("# comment\n a = 1.5 \nb=7 # trailing\nlist = 1, 2,3\nname = x y\n\n");
  CHECK(kv.get_double("a", 0) == 1.5);
  CHECK(kv.get_int("b", 0) == 7);
  CHECK(kv.get_doubles("list") == std::vector<double>{1, 2, 3});
  CHECK(kv.get_string("name", "") == "x y");
  CHECK(kv.get_double("missing", 2.5) == 2.5);
  CHECK_THROWS_AS(kv.get_int("a", 0), ValidationError);
  CHECK_THROWS_AS(kv.check_known({"a", "b", "list"}), ValidationError);
  CHECK_NOTHROW(kv.check_known({"a", "b", "list", "name"}));
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ValidationError);
}

TEST_CASE("format_double round-trips") {
  CounterRng r(5, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.normal(0.0, 1e3) * std::pow(10.0, r.uniform_int(-8, 8));
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

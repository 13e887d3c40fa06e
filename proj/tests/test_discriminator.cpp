#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "aucl/discriminator.hpp"

using aucl::deterministic_mode;
using aucl::nlos_probability;
using aucl::SigmoidParams;

TEST_CASE("sigmoid at its center") {
  const auto m = nlos_probability(6.934);
  CHECK(m.p_nlos == Catch::Approx(1.0 / (1.068 + 1.013)).epsilon(1e-12));
  CHECK(m.p_nlos == Catch::Approx(0.48054).margin(5e-6));
}

TEST_CASE("sigmoid saturates below one") {
  const auto m = nlos_probability(1000.0);
  CHECK(m.p_nlos == Catch::Approx(1.0 / 1.068).epsilon(1e-12));
}

TEST_CASE("sigmoid at zero power metric") {
  const double expected = 1.0 / (1.068 + 1.013 * std::exp(6.934));
  const auto m = nlos_probability(0.0);
  CHECK(m.p_nlos == Catch::Approx(expected).epsilon(1e-12));
  CHECK(m.p_nlos == Catch::Approx(9.6e-4).margin(2e-5));
}

TEST_CASE("sigmoid rejects non-finite input") {
  CHECK_THROWS_AS(nlos_probability(std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
  CHECK_THROWS_AS(nlos_probability(std::nan("")), std::invalid_argument);
}

TEST_CASE("sigmoid is monotone and bounded") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-30.0, 40.0);
  const SigmoidParams params;
  for (int k = 0; k < 10000; ++k) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const auto pa = nlos_probability(a, params);
    const auto pb = nlos_probability(b, params);
    REQUIRE(pa.p_nlos <= pb.p_nlos);
    REQUIRE(pa.p_nlos >= 0.0);
    REQUIRE(pb.p_nlos <= 1.0 / params.a);
    REQUIRE(std::abs(pa.p_los + pa.p_nlos - 1.0) <= 1e-12);
  }
}

TEST_CASE("sigmoid parameter validation") {
  CHECK_THROWS_AS(SigmoidParams(0.9, 1.0, 6.9), std::invalid_argument);
  CHECK_THROWS_AS(SigmoidParams(1.1, 0.0, 6.9), std::invalid_argument);
}

TEST_CASE("deterministic threshold") {
  CHECK(deterministic_mode(5.0, 6.934).p_los == 1.0);
  CHECK(deterministic_mode(5.0, 6.934).p_nlos == 0.0);
  CHECK(deterministic_mode(8.0, 6.934).p_nlos == 1.0);
  // a tie classifies as NLoS
  CHECK(deterministic_mode(6.934, 6.934).p_nlos == 1.0);
}

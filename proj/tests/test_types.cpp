#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "aucl/types.hpp"
#include "oracles.hpp"

using aucl::Covariance;
using aucl::Mat;
using aucl::Vec;

namespace {

bool is_symmetric_psd(const Mat& m, double tol = 1e-12) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  return eig.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

TEST_CASE("make_covariance keeps a PSD matrix unchanged") {
  Mat I = Mat::Identity(3, 3);
  CHECK(aucl::make_covariance(I).matrix() == I);
}

TEST_CASE("make_covariance symmetrizes") {
  Mat raw(2, 2);
  raw << 1, 2, 0, 1;
  Mat expect(2, 2);
  expect << 1, 1, 1, 1;
  CHECK((aucl::make_covariance(raw).matrix() - expect).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("make_covariance floors tiny negative eigenvalues at zero") {
  Mat raw(2, 2);
  raw << 1, 0, 0, -1e-12;
  const Mat out = aucl::make_covariance(raw).matrix();
  CHECK(out(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(out(1, 1) >= 0.0);
  CHECK(out(1, 1) < 1e-11);
}

TEST_CASE("make_covariance rejects bad input") {
  Mat nonsquare(2, 3);
  nonsquare.setZero();
  CHECK_THROWS_AS(aucl::make_covariance(nonsquare), std::invalid_argument);
  Mat nan2 = Mat::Identity(2, 2);
  nan2(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(aucl::make_covariance(nan2), std::invalid_argument);
}

TEST_CASE("clip warning counter fires only beyond roundoff") {
  const auto before = aucl::psd_clip_warning_count();
  Mat mild(2, 2);
  mild << 1, 0, 0, -1e-12;
  aucl::make_covariance(mild);
  CHECK(aucl::psd_clip_warning_count() == before);
  Mat bad(2, 2);
  bad << 1, 0, 0, -1e-3;
  aucl::make_covariance(bad);
  CHECK(aucl::psd_clip_warning_count() == before + 1);
}

TEST_CASE("covariance stays symmetric PSD under random construction") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Mat raw(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) raw(r, c) = g(rng);
    }
    CHECK(is_symmetric_psd(Covariance(raw).matrix(), 1e-9));
  }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(aucl::wrap_angle(0.0) == 0.0);
  CHECK(aucl::wrap_angle(4.0 * std::numbers::pi + 0.25) ==
        Catch::Approx(0.25).margin(1e-12));
  CHECK(aucl::wrap_angle(-std::numbers::pi) ==
        Catch::Approx(std::numbers::pi));
  CHECK(aucl::wrap_angle(std::numbers::pi) == Catch::Approx(std::numbers::pi));
  CHECK(aucl::wrap_angle(-3.5 * std::numbers::pi) ==
        Catch::Approx(0.5 * std::numbers::pi).margin(1e-12));
}

TEST_CASE("belief validates dimensions") {
  Vec x(3);
  x << 1, 2, 3;
  CHECK_THROWS_AS(aucl::Belief(x, Covariance(Mat::Identity(2, 2))),
                  std::invalid_argument);
  CHECK_NOTHROW(aucl::Belief(x, Covariance(Mat::Identity(3, 3))));
}

TEST_CASE("mode probabilities validate and normalize") {
  CHECK_THROWS_AS(aucl::ModeProbabilities(0.7, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(aucl::ModeProbabilities(-0.1, 1.1), std::invalid_argument);
  const auto m = aucl::ModeProbabilities::from_nlos(0.3);
  CHECK(std::abs(m.p_los + m.p_nlos - 1.0) <= 1e-12);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const auto p = aucl::ModeProbabilities::from_nlos(u(rng));
    CHECK(std::abs(p.p_los + p.p_nlos - 1.0) <= 1e-12);
  }
}

TEST_CASE("range measurement validates") {
  CHECK_THROWS_AS(aucl::RangeMeasurement(1, 1, 5.0, 0.0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(aucl::RangeMeasurement(1, 2, -1.0, 0.0, 0),
                  std::invalid_argument);
  CHECK_NOTHROW(aucl::RangeMeasurement(1, 2, 5.0, 0.0, 0));
}

TEST_CASE("bias model conventions") {
  const auto zm = aucl::BiasModel::make(1.0, 0.25, aucl::BiasHandling::kZeroMean);
  CHECK(zm.b_hat == 0.0);
  CHECK(zm.B == Catch::Approx(1.25));
  const auto ms =
      aucl::BiasModel::make(1.0, 0.25, aucl::BiasHandling::kMeanSubtracted);
  CHECK(ms.b_hat == 1.0);
  CHECK(ms.B == Catch::Approx(0.25));
  CHECK_THROWS_AS(aucl::BiasModel::make(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("bias book zero initialization and fallback") {
  const auto book = aucl::BiasBook::zeros(1, {1, 2, 3}, 3);
  CHECK(book.C.size() == 3);
  for (const auto& [id, c] : book.C) CHECK(c.norm() == 0.0);
  const auto before = aucl::missing_bias_entry_count();
  const Vec z = book.entry_or_zero(99, 3);
  CHECK(z.norm() == 0.0);
  CHECK(aucl::missing_bias_entry_count() == before + 1);
}

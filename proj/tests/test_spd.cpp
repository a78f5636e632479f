#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "retrofit/rng.hpp"
#include "retrofit/spd.hpp"

using namespace retrofit;
using spd::Mat;
using spd::SpdMatrix;

namespace {

Mat random_spd(int n, Rng& rng, double ridge = 1.0) {
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  return a * a.transpose() + ridge * Mat::Identity(n, n);
}

Mat random_invertible(int n, Rng& rng) {
  for (;;) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    if (std::abs(a.determinant()) > 1e-3) return a;
  }
}

SpdMatrix wrap(Mat m) { return spd::make_spd(std::move(m)); }

}  // namespace

TEST_CASE("sym_eig on diagonal and identity matrices") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = std::exp(1.0);
  const auto eig = spd::sym_eig(d);
  CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eig.eigenvalues[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  CHECK(std::abs(eig.eigenvectors(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(eig.eigenvectors(1, 1)) == doctest::Approx(1.0));

  const auto id = spd::sym_eig(Mat::Identity(3, 3));
  for (int i = 0; i < 3; ++i)
    CHECK(id.eigenvalues[i] == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstruction on random SPD matrices") {
  Rng rng(5);
  for (int n : {2, 5, 17, 60}) {
    const Mat x = random_spd(n, rng);
    const auto eig = spd::sym_eig(x);
    const Mat back = eig.eigenvectors * eig.eigenvalues.asDiagonal() *
                     eig.eigenvectors.transpose();
    CHECK((back - x).norm() / x.norm() < 1e-8);
    CHECK((eig.eigenvectors.transpose() * eig.eigenvectors -
           Mat::Identity(n, n))
              .norm() < 1e-10);
    for (int i = 0; i + 1 < n; ++i)
      CHECK(eig.eigenvalues[i] <= eig.eigenvalues[i + 1]);
  }
}

TEST_CASE("sym_eig deterministic ordering and signs") {
  Rng rng(6);
  const Mat x = random_spd(8, rng);
  const auto a = spd::sym_eig(x);
  const auto b = spd::sym_eig(x);
  CHECK(a.eigenvectors.isApprox(b.eigenvectors));
  CHECK_THROWS_AS(spd::sym_eig(Mat::Zero(2, 3)), DimMismatch);
}

TEST_CASE("spd_log examples") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = std::exp(1.0);
  const Mat lg = spd::spd_log(wrap(d));
  CHECK(lg(0, 0) == doctest::Approx(0.0));
  CHECK(lg(1, 1) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(spd::spd_log(wrap(Mat::Identity(3, 3))).norm() ==
        doctest::Approx(0.0));

  const Mat l4 = spd::spd_log(wrap(4.0 * Mat::Identity(2, 2)));
  CHECK(l4(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(l4(1, 1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(l4(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("spd geodesic distance examples") {
  const SpdMatrix i2 = wrap(Mat::Identity(2, 2));
  const SpdMatrix e2 = wrap(std::exp(2.0) * Mat::Identity(2, 2));
  CHECK(std::abs(spd::spd_geodesic_sq(i2, e2) - 8.0) < 1e-10);
  CHECK(std::abs(spd::spd_geodesic_sq(e2, i2) - 8.0) < 1e-10);

  Rng rng(9);
  const SpdMatrix x = wrap(random_spd(4, rng));
  CHECK(spd::spd_geodesic_sq(x, x) == doctest::Approx(0.0));

  CHECK_THROWS_AS(
      spd::spd_geodesic_sq(wrap(Mat::Identity(2, 2)), wrap(Mat::Identity(3, 3))),
      DimMismatch);
}

TEST_CASE("logdet ratio examples") {
  const SpdMatrix x = wrap(4.0 * Mat::Identity(2, 2));
  const SpdMatrix y = wrap(Mat::Identity(2, 2));
  CHECK(spd::logdet_ratio(x, y) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(spd::logdet_ratio(x, x) == doctest::Approx(0.0));

  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    const SpdMatrix a = wrap(random_spd(5, rng));
    const SpdMatrix b = wrap(random_spd(5, rng));
    CHECK(std::abs(spd::logdet_ratio(a, b) + spd::logdet_ratio(b, a)) < 1e-10);
  }
}

TEST_CASE("geodesic distance invariances") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(7));
    const Mat xm = random_spd(n, rng);
    const Mat ym = random_spd(n, rng);
    const SpdMatrix x = wrap(xm);
    const SpdMatrix y = wrap(ym);
    const double base = spd::spd_geodesic_sq(x, y);

    // symmetry
    CHECK(std::abs(spd::spd_geodesic_sq(y, x) - base) < 1e-8);
    // scalar invariance
    const double c = 0.1 + 3.0 * rng.uniform();
    CHECK(std::abs(spd::spd_geodesic_sq(wrap(c * xm), wrap(c * ym)) - base) <
          1e-8);
    // inversion invariance
    CHECK(std::abs(spd::spd_geodesic_sq(wrap(xm.inverse()),
                                        wrap(ym.inverse())) -
                   base) < 1e-8);
    // congruence invariance
    const Mat a = random_invertible(n, rng);
    CHECK(std::abs(spd::spd_geodesic_sq(wrap(a * xm * a.transpose()),
                                        wrap(a * ym * a.transpose())) -
                   base) < 1e-8 * std::max(1.0, base));
  }
}

TEST_CASE("spd_log inversion antisymmetry and distance-to-identity") {
  Rng rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat xm = random_spd(6, rng);
    const Mat a = spd::spd_log(wrap(xm));
    const Mat b = spd::spd_log(wrap(xm.inverse()));
    CHECK((a + b).norm() < 1e-8);
    CHECK(std::abs(spd::spd_geodesic_sq(wrap(xm), wrap(Mat::Identity(6, 6))) -
                   a.squaredNorm()) < 1e-10 * std::max(1.0, a.squaredNorm()));
  }
}

TEST_CASE("eigenvalue floor surfaces a counter") {
  Mat x = Mat::Zero(3, 3);
  x(0, 0) = 1.0;  // rank 1, two zero eigenvalues
  int floored = 0;
  const SpdMatrix s = spd::make_spd(x, &floored);
  CHECK(floored == 2);
  const auto eig = spd::sym_eig(s.m);
  CHECK(eig.eigenvalues[0] >= spd::kEigenvalueFloor * 0.5);
}

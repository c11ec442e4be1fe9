#include <array>
#include <cmath>
#include <random>

#include "bharp/error.hpp"
#include "bharp/sampler.hpp"
#include "doctest.h"

using namespace bharp;

namespace {

using Vec6 = std::array<double, 6>;

Vec6 split_map(const Vec6& x) {
  const auto r = split_transform({x[0], x[1], x[2]}, x[3], x[4], x[5]);
  return {r.lower.w, r.lower.mu, r.lower.sigma, r.upper.w, r.upper.mu, r.upper.sigma};
}

double abs_det(std::array<Vec6, 6> m) {
  double det = 1.0;
  for (int c = 0; c < 6; ++c) {
    int p = c;
    for (int r = c + 1; r < 6; ++r)
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    std::swap(m[p], m[c]);
    if (m[c][c] == 0.0) return 0.0;
    det *= m[c][c];
    for (int r = c + 1; r < 6; ++r) {
      const double f = m[r][c] / m[c][c];
      for (int k = c; k < 6; ++k) m[r][k] -= f * m[c][k];
    }
  }
  return std::abs(det);
}

// Richardson-extrapolated central differences.
double fd_abs_jacobian(const Vec6& x) {
  auto column = [&](int j, double h) {
    Vec6 up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    const Vec6 a = split_map(up), b = split_map(dn);
    Vec6 col{};
    for (int i = 0; i < 6; ++i) col[i] = (a[i] - b[i]) / (2 * h);
    return col;
  };
  std::array<Vec6, 6> jac{};
  for (int j = 0; j < 6; ++j) {
    const double h = 1e-4 * std::max(std::abs(x[j]), 0.05);
    const Vec6 c1 = column(j, h), c2 = column(j, h / 2);
    for (int i = 0; i < 6; ++i) jac[i][j] = (4 * c2[i] - c1[i]) / 3;
  }
  return abs_det(jac);
}

Vec6 random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.05, 0.95), mu(-2.0, 2.0), u(0.05, 0.95);
  std::uniform_real_distribution<double> ls(std::log(1e-3), 0.0);
  return {w(rng), mu(rng), std::exp(ls(rng)), u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("split of a symmetric example") {
  const auto r = split_transform({0.5, 0.0, 0.04}, 0.5, 0.5, 0.5);
  CHECK(r.lower.w == doctest::Approx(0.25));
  CHECK(r.upper.w == doctest::Approx(0.25));
  CHECK(r.lower.mu == doctest::Approx(-0.1));
  CHECK(r.upper.mu == doctest::Approx(0.1));
  CHECK(r.lower.sigma == doctest::Approx(0.03));
  CHECK(r.upper.sigma == doctest::Approx(0.03));
}

TEST_CASE("split preserves weight, mean and second moment") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec6 x = random_input(rng);
    const auto r = split_transform({x[0], x[1], x[2]}, x[3], x[4], x[5]);
    const auto &a = r.lower, &b = r.upper;
    CHECK(a.w + b.w == doctest::Approx(x[0]).epsilon(1e-13));
    CHECK(a.w * a.mu + b.w * b.mu == doctest::Approx(x[0] * x[1]).epsilon(1e-12).scale(1.0));
    CHECK(a.w * (a.mu * a.mu + a.sigma) + b.w * (b.mu * b.mu + b.sigma) ==
          doctest::Approx(x[0] * (x[1] * x[1] + x[2])).epsilon(1e-12));
    CHECK(a.mu < b.mu);
  }
}

TEST_CASE("merge inverts split and negates the log Jacobian") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Vec6 x = random_input(rng);
    const auto s = split_transform({x[0], x[1], x[2]}, x[3], x[4], x[5]);
    const auto m = merge_transform(s.lower, s.upper);
    CHECK(std::abs(m.merged.w - x[0]) < 1e-10);
    CHECK(std::abs(m.merged.mu - x[1]) < 1e-10);
    CHECK(std::abs(m.merged.sigma - x[2]) < 1e-10);
    CHECK(std::abs(m.u1 - x[3]) < 1e-10);
    CHECK(std::abs(m.u2 - x[4]) < 1e-10);
    CHECK(std::abs(m.u3 - x[5]) < 1e-10);
    CHECK(m.log_jacobian == doctest::Approx(-s.log_jacobian).epsilon(1e-10));
  }
}

TEST_CASE("log Jacobian agrees with a finite-difference determinant") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vec6 x = random_input(rng);
    const double analytic = std::exp(split_transform({x[0], x[1], x[2]}, x[3], x[4], x[5]).log_jacobian);
    const double numeric = fd_abs_jacobian(x);
    CHECK(std::abs(numeric / analytic - 1.0) < 1e-6);
  }
}

TEST_CASE("vanishing offset collapses the means") {
  const Component c{0.6, 0.2, 0.05};
  const double u2 = 1e-9;
  const auto r = split_transform(c, 0.4, u2, 0.5);
  CHECK(r.upper.mu - r.lower.mu < 1e-8);
  CHECK(r.lower.mu == doctest::Approx(0.2));
  // u2 cancels between the mean gap and the denominator, so the Jacobian
  // tends to a finite limit rather than to zero.
  const double w1 = 0.6 * 0.4, w2 = 0.6 * 0.6;
  const double s1 = 0.5 * 0.05 * 0.6 / w1, s2 = 0.5 * 0.05 * 0.6 / w2;
  const double gap_per_u2 = std::sqrt(0.05) * (std::sqrt(w2 / w1) + std::sqrt(w1 / w2));
  const double limit = std::log(0.6 * gap_per_u2 * s1 * s2 / (0.25 * 0.05));
  CHECK(r.log_jacobian == doctest::Approx(limit).epsilon(1e-6));
  CHECK(std::isfinite(r.log_jacobian));
}

TEST_CASE("degenerate inputs are refused") {
  CHECK_THROWS_AS(split_transform({0.5, 0.0, 0.04}, 0.0, 0.5, 0.5), Error);
  CHECK_THROWS_AS(split_transform({0.5, 0.0, 0.04}, 0.5, 1.0, 0.5), Error);
  CHECK_THROWS_AS(split_transform({0.5, 0.0, -0.04}, 0.5, 0.5, 0.5), Error);
  const Component c{0.2, 0.1, 0.03};
  CHECK_THROWS_WITH_AS(merge_transform(c, c), doctest::Contains("not mergeable"), Error);
  const auto s = split_transform({0.5, 0.0, 0.04}, 0.3, 0.6, 0.4);
  CHECK_THROWS_AS(merge_transform(s.upper, s.lower), Error);
}

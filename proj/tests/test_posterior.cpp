#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "bharp/error.hpp"
#include "bharp/posterior.hpp"
#include "doctest.h"

using namespace bharp;

namespace {

ThetaSamples random_samples(int arms, int k, int chains, int per_chain, std::uint64_t seed) {
  ThetaSamples s;
  s.n_arms = arms;
  s.n_subgroups = k;
  s.n_chains = chains;
  s.draws_per_chain = per_chain;
  std::mt19937_64 g(seed);
  std::gamma_distribution<double> skewed(2.0, 0.5);
  s.values.resize(s.n_draws() * s.n_cells());
  for (std::size_t d = 0; d < s.n_draws(); ++d)
    for (std::size_t c = 0; c < s.n_cells(); ++c)
      s.values[d * s.n_cells() + c] = skewed(g) + static_cast<double>(c);
  return s;
}

// Hand-built draws of one arm with given allocation vectors.
ChainDraws allocation_draws(const std::vector<std::vector<int>>& zs, int n_chains) {
  ChainDraws out;
  out.n_arms = 1;
  out.n_subgroups = static_cast<int>(zs[0].size());
  out.n_chains = n_chains;
  out.draws_per_chain = static_cast<int>(zs.size()) / n_chains;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    Draw d;
    d.chain = static_cast<int>(i) / out.draws_per_chain;
    ArmDraw a;
    a.z = zs[i];
    a.q = *std::max_element(a.z.begin(), a.z.end()) + 1;
    a.theta.assign(zs[i].size(), 0.1 * static_cast<double>(i));
    a.delta.assign(zs[i].size(), 0.0);
    a.w.assign(static_cast<std::size_t>(a.q), 1.0 / a.q);
    a.mu.assign(static_cast<std::size_t>(a.q), 0.0);
    a.sigma.assign(static_cast<std::size_t>(a.q), 0.01);
    d.arms = {a};
    out.draws.push_back(d);
  }
  out.counters.resize(static_cast<std::size_t>(n_chains));
  return out;
}

double brute_misclassification(const std::vector<int>& est, const std::vector<int>& truth) {
  const int ne = *std::max_element(est.begin(), est.end()) + 1;
  const int nt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int m = std::max(ne, nt);
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int agree = 0;
    for (std::size_t k = 0; k < est.size(); ++k) agree += perm[static_cast<std::size_t>(est[k])] == truth[k];
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 1.0 - static_cast<double>(best) / static_cast<double>(est.size());
}

}  // namespace

TEST_CASE("medians and intervals agree with sorted order statistics") {
  const ThetaSamples s = random_samples(2, 3, 3, 401, 1);
  const Matrix med = point_estimates(s);
  const auto [lo, hi] = credible_intervals(s, 0.9);
  for (std::size_t c = 0; c < s.n_cells(); ++c) {
    std::vector<double> v = s.cell_trace(c);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();  // odd, 1203
    CHECK(med.data()[c] == v[n / 2]);
    auto q7 = [&](double p) {
      const double h = (static_cast<double>(n) - 1) * p;
      const auto i = static_cast<std::size_t>(std::floor(h));
      return v[i] + (h - static_cast<double>(i)) * (v[std::min(i + 1, n - 1)] - v[i]);
    };
    CHECK(lo.data()[c] == doctest::Approx(q7(0.05)).epsilon(1e-14));
    CHECK(hi.data()[c] == doctest::Approx(q7(0.95)).epsilon(1e-14));
  }
}

TEST_CASE("serial and parallel summaries are identical") {
  const ThetaSamples s = random_samples(3, 6, 4, 500, 2);
  CHECK(point_estimates(s, Exec::kSerial) == point_estimates(s, Exec::kParallel));
  std::vector<std::vector<int>> zs;
  std::mt19937_64 g(5);
  for (int i = 0; i < 400; ++i) {
    std::vector<int> z(6);
    for (auto& x : z) x = static_cast<int>(g() % 3);
    zs.push_back(z);
  }
  const ChainDraws d = allocation_draws(zs, 4);
  CHECK(coclustering(d, 0, Exec::kSerial) == coclustering(d, 0, Exec::kParallel));
}

TEST_CASE("coclustering counts shared labels") {
  const ChainDraws d = allocation_draws({{0, 0, 1}, {0, 1, 1}, {1, 0, 0}, {0, 0, 0}}, 2);
  const Matrix m = coclustering(d, 0);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == doctest::Approx(0.5));
  CHECK(m(1, 2) == doctest::Approx(0.75));
  CHECK(m(0, 2) == doctest::Approx(0.25));
  CHECK(m(2, 0) == m(0, 2));
}

TEST_CASE("exceedance and partition events") {
  ThetaSamples s;
  s.n_arms = 1;
  s.n_subgroups = 1;
  s.n_chains = 1;
  s.draws_per_chain = 4;
  s.values = {0.05, 0.1, 0.2, 0.3};
  CHECK(exceedance(s, 0, 0, 0.1, Direction::kGreater) == doctest::Approx(0.5));
  CHECK(exceedance(s, 0, 0, 0.1, Direction::kLessEqual) == doctest::Approx(0.5));
  const ChainDraws d = allocation_draws({{0, 0, 1}, {0, 1, 1}, {1, 0, 0}, {0, 0, 0}}, 1);
  CHECK(partition_event(d, 0, [](std::span<const int> z) { return z[0] == z[1]; }) ==
        doctest::Approx(0.5));
  const auto occ = occupied_posterior(d, 0);
  REQUIRE(occ.size() == 3);
  CHECK(occ[0] == doctest::Approx(0.25));
  CHECK(occ[1] == doctest::Approx(0.75));
}

TEST_CASE("diagnostics on independent, autocorrelated and separated chains") {
  std::mt19937_64 g(9);
  std::normal_distribution<double> z(0.0, 1.0);
  const int chains = 4, n = 5000;
  std::vector<double> iid, ar, shifted;
  const double phi = 0.8;
  for (int c = 0; c < chains; ++c) {
    double x = z(g) / std::sqrt(1 - phi * phi);
    for (int i = 0; i < n; ++i) {
      iid.push_back(z(g));
      x = phi * x + z(g);
      ar.push_back(x);
      shifted.push_back(z(g) + 2.0 * c);
    }
  }
  const Diagnostic a = diagnose(iid, chains);
  CHECK(a.rhat < 1.01);
  CHECK(a.ess == doctest::Approx(chains * n).epsilon(0.1));
  const Diagnostic b = diagnose(ar, chains);
  CHECK(b.rhat < 1.01);
  const double expected = chains * n * (1 - phi) / (1 + phi);
  CHECK(b.ess == doctest::Approx(expected).epsilon(0.2));
  CHECK(diagnose(shifted, chains).rhat > 1.5);

  const std::vector<double> flat(40, 0.3);
  CHECK(diagnose(flat, 4).degenerate);
  CHECK_THROWS_AS(diagnose(flat, 1), Error);
}

TEST_CASE("average linkage") {
  Matrix s(5, 5, 0.0);
  auto set = [&](int i, int j, double v) {
    s(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = v;
    s(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = v;
  };
  for (int i = 0; i < 5; ++i) set(i, i, 1.0);
  set(0, 1, 0.9);
  set(3, 4, 0.8);
  set(2, 0, 0.6);
  set(2, 1, 0.5);
  set(2, 3, 0.1);
  // {0,1} then {3,4}; 2 joins {0,1} at mean 0.55
  CHECK(average_linkage(s) == std::vector<int>{0, 0, 0, 1, 1});
  CHECK(average_linkage(s, 0.85) == std::vector<int>{0, 0, 1, 2, 3});
  CHECK(average_linkage(s, 0.0) == std::vector<int>{0, 0, 0, 0, 0});
}

TEST_CASE("misclassification matches a brute-force best matching") {
  std::mt19937_64 g(4);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t k = 3 + g() % 8;
    std::vector<int> est(k), truth(k);
    for (auto& x : est) x = static_cast<int>(g() % 4);
    for (auto& x : truth) x = static_cast<int>(g() % 3);
    CHECK(misclassification_rate(est, truth) == doctest::Approx(brute_misclassification(est, truth)));
  }
  const std::vector<int> a{0, 0, 1, 1}, b{1, 1, 0, 0};
  CHECK(misclassification_rate(a, b) == 0.0);
  CHECK_THROWS_AS(misclassification_rate(a, std::vector<int>{0, 1}), Error);
}

TEST_CASE("estimation metrics") {
  Matrix truth(1, 2);
  truth(0, 0) = 1.0;
  truth(0, 1) = 0.0;
  Matrix e1 = truth, e2 = truth;
  e1(0, 0) = 1.5;
  e2(0, 0) = 0.5;
  e2(0, 1) = 2.0;
  const auto m = estimation_metrics({e1, e2}, truth);
  CHECK(m.rmse[0] == doctest::Approx(0.5));
  CHECK(m.mae[0] == doctest::Approx(0.5));
  CHECK(m.rmse[1] == doctest::Approx(std::sqrt(2.0)));
  CHECK(m.mae[1] == doctest::Approx(1.0));
  CHECK(m.variance[1] >= 0.0);
}

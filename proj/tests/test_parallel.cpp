#include <atomic>
#include <stdexcept>
#include <vector>

#include "bharp/parallel.hpp"
#include "bharp/posterior.hpp"
#include "bharp/sampler.hpp"
#include "doctest.h"

using namespace bharp;

TEST_CASE("for_each_index visits every index once in both modes") {
  for (Exec e : {Exec::kSerial, Exec::kParallel}) {
    std::vector<int> hits(1000, 0);
    for_each_index(1000, e, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
  for_each_index(0, Exec::kParallel, [](int) { FAIL("no work expected"); });
}

TEST_CASE("the lowest failing index is rethrown after all work") {
  std::atomic<int> done{0};
  try {
    for_each_index(64, Exec::kParallel, [&](int i) {
      ++done;
      if (i == 40 || i == 9) throw std::runtime_error("index " + std::to_string(i));
    });
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "index 9");
  }
  CHECK(done == 64);
}

TEST_CASE("worker count setting") {
  set_worker_count(3);
  CHECK(worker_count() == 3);
  set_worker_count(0);
  CHECK(worker_count() >= 1);
}

TEST_CASE("chains and summaries do not depend on the execution mode or workers") {
  Dataset d(2, 5);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 5; ++k)
      for (int r = 0; r < 6; ++r) d.add(i, k, 0.2 * k * (i + 1) + 0.1 * (r % 3) - 0.1);
  ChainConfig cfg;
  cfg.n_chains = 4;
  cfg.n_iter = 400;
  cfg.n_burnin = 100;
  set_worker_count(1);
  const ChainDraws one = run_chain(d, Hyperparameters{}, cfg, MoveConfig{});
  set_worker_count(4);
  const ChainDraws four = run_chain(d, Hyperparameters{}, cfg, MoveConfig{});
  set_worker_count(0);
  REQUIRE(one.draws.size() == four.draws.size());
  bool same = true;
  for (std::size_t i = 0; i < one.draws.size(); ++i)
    for (std::size_t a = 0; a < 2; ++a)
      same = same && one.draws[i].arms[a].theta == four.draws[i].arms[a].theta &&
             one.draws[i].arms[a].z == four.draws[i].arms[a].z;
  CHECK(same);

  const PosteriorSummary s = summarize_posterior(one, Exec::kSerial);
  const PosteriorSummary p = summarize_posterior(one, Exec::kParallel);
  CHECK(s.theta_median == p.theta_median);
  CHECK(s.theta_lower == p.theta_lower);
  CHECK(s.coclustering == p.coclustering);
  CHECK(s.q_posterior == p.q_posterior);
  REQUIRE(s.diagnostics.size() == p.diagnostics.size());
  for (std::size_t c = 0; c < s.diagnostics.size(); ++c) {
    CHECK(s.diagnostics[c].rhat == p.diagnostics[c].rhat);
    CHECK(s.diagnostics[c].ess == p.diagnostics[c].ess);
  }
}

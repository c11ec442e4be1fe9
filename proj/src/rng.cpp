#include "bharp/rng.hpp"

#include <algorithm>
#include <cmath>

namespace bharp::draw {

int categorical_log(Rng& rng, std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - top);
  double u = uniform(rng) * total;
  const int n = static_cast<int>(log_weights.size());
  for (int t = 0; t < n; ++t) {
    u -= std::exp(log_weights[static_cast<std::size_t>(t)] - top);
    if (u < 0.0) return t;
  }
  return n - 1;
}

}  // namespace bharp::draw

#include "bharp/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <tuple>
#include <map>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "bharp/error.hpp"

namespace bharp {

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

void require_draws(std::size_t n, const char* where) {
  if (n == 0) throw Error(ErrorKind::kDomain, where, "no stored draws");
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Type-7 quantile (linear interpolation between order statistics).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> ThetaSamples::cell_trace(std::size_t cell) const {
  std::vector<double> out(n_draws());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = at(d, cell);
  return out;
}

ThetaSamples theta_samples(const ChainDraws& draws) {
  ThetaSamples s;
  s.n_arms = draws.n_arms;
  s.n_subgroups = draws.n_subgroups;
  s.n_chains = draws.n_chains;
  s.draws_per_chain = draws.draws_per_chain;
  s.values.reserve(draws.draws.size() * s.n_cells());
  for (const auto& d : draws.draws)
    for (const auto& arm : d.arms) s.values.insert(s.values.end(), arm.theta.begin(), arm.theta.end());
  return s;
}

Matrix point_estimates(const ThetaSamples& samples, Exec exec) {
  require_draws(samples.n_draws(), "point_estimates");
  const auto cells = static_cast<long>(samples.n_cells());
  Matrix out(idx(samples.n_arms), idx(samples.n_subgroups));
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel) num_threads(worker_count())
  for (long c = 0; c < cells; ++c)
    out.data()[static_cast<std::size_t>(c)] = median_of(samples.cell_trace(static_cast<std::size_t>(c)));
  return out;
}

Matrix point_estimates(const ChainDraws& draws, Exec exec) {
  return point_estimates(theta_samples(draws), exec);
}

std::pair<Matrix, Matrix> credible_intervals(const ThetaSamples& samples, double mass) {
  require_draws(samples.n_draws(), "credible_intervals");
  Matrix lo(idx(samples.n_arms), idx(samples.n_subgroups));
  Matrix hi(idx(samples.n_arms), idx(samples.n_subgroups));
  const double tail = 0.5 * (1.0 - mass);
  for (std::size_t c = 0; c < samples.n_cells(); ++c) {
    auto trace = samples.cell_trace(c);
    std::sort(trace.begin(), trace.end());
    lo.data()[c] = quantile_sorted(trace, tail);
    hi.data()[c] = quantile_sorted(trace, 1.0 - tail);
  }
  return {lo, hi};
}

Matrix coclustering(const ChainDraws& draws, int arm, Exec exec) {
  require_draws(draws.draws.size(), "coclustering");
  const int K = draws.n_subgroups;
  const auto a = idx(arm);
  Matrix out(idx(K), idx(K), 0.0);
  const double n = static_cast<double>(draws.draws.size());
  // one row per task; each row is an independent count over all draws
#pragma omp parallel for schedule(dynamic) if (exec == Exec::kParallel) num_threads(worker_count())
  for (int j = 0; j < K; ++j) {
    std::vector<long> hits(idx(K), 0);
    for (const auto& d : draws.draws) {
      const auto& z = d.arms[a].z;
      const int zj = z[idx(j)];
      for (int k = j + 1; k < K; ++k) hits[idx(k)] += (z[idx(k)] == zj);
    }
    out(idx(j), idx(j)) = 1.0;
    for (int k = j + 1; k < K; ++k) out(idx(j), idx(k)) = static_cast<double>(hits[idx(k)]) / n;
  }
  for (int j = 0; j < K; ++j)
    for (int k = j + 1; k < K; ++k) out(idx(k), idx(j)) = out(idx(j), idx(k));
  return out;
}

double exceedance(const ThetaSamples& samples, int arm, int subgroup, double x, Direction dir) {
  require_draws(samples.n_draws(), "exceedance");
  const auto cell = idx(arm * samples.n_subgroups + subgroup);
  std::size_t above = 0;
  for (std::size_t d = 0; d < samples.n_draws(); ++d) above += samples.at(d, cell) > x;
  const std::size_t n = samples.n_draws();
  const std::size_t hits = dir == Direction::kGreater ? above : n - above;
  return static_cast<double>(hits) / static_cast<double>(n);
}

double partition_event(const ChainDraws& draws, int arm, const PartitionPredicate& pred) {
  require_draws(draws.draws.size(), "partition_event");
  std::size_t hits = 0;
  for (const auto& d : draws.draws) hits += pred(d.arms[idx(arm)].z);
  return static_cast<double>(hits) / static_cast<double>(draws.draws.size());
}

std::vector<double> occupied_posterior(const ChainDraws& draws, int arm) {
  require_draws(draws.draws.size(), "occupied_posterior");
  std::vector<double> out(idx(draws.n_subgroups), 0.0);
  std::vector<char> seen;
  for (const auto& d : draws.draws) {
    const auto& a = d.arms[idx(arm)];
    seen.assign(idx(a.q), 0);
    int occupied = 0;
    for (int t : a.z)
      if (!seen[idx(t)]) {
        seen[idx(t)] = 1;
        ++occupied;
      }
    out[idx(occupied - 1)] += 1.0;
  }
  for (auto& v : out) v /= static_cast<double>(draws.draws.size());
  return out;
}

std::vector<double> components_posterior(const ChainDraws& draws, int arm) {
  require_draws(draws.draws.size(), "components_posterior");
  std::vector<double> out(idx(draws.n_subgroups), 0.0);
  for (const auto& d : draws.draws) out[idx(d.arms[idx(arm)].q - 1)] += 1.0;
  for (auto& v : out) v /= static_cast<double>(draws.draws.size());
  return out;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics

namespace {

using Chains = std::vector<std::vector<double>>;

// Ranks with ties averaged, then mapped to normal scores.
Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i)
      all.emplace_back(chains[c][i], c * chains[0].size() + i);
  std::sort(all.begin(), all.end());
  const double S = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  const boost::math::normal std_normal;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    const double score = boost::math::quantile(std_normal, (rank - 0.375) / (S + 0.25));
    for (std::size_t t = i; t < j; ++t) z[all[t].second] = score;
    i = j;
  }
  Chains out = chains;
  for (std::size_t c = 0; c < out.size(); ++c)
    for (std::size_t i = 0; i < out[c].size(); ++i) out[c][i] = z[c * chains[0].size() + i];
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct VarianceParts {
  double within = 0.0;
  double pooled = 0.0;  // var+
};

VarianceParts variance_parts(const Chains& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains[0].size());
  std::vector<double> means(chains.size());
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[c] = mean(chains[c]);
    double s = 0.0;
    for (double x : chains[c]) s += (x - means[c]) * (x - means[c]);
    w += s / (n - 1.0);
  }
  w /= m;
  const double grand = mean(means);
  double b = 0.0;
  for (double mc : means) b += (mc - grand) * (mc - grand);
  b *= n / (m - 1.0);
  return {w, (n - 1.0) / n * w + b / n};
}

double rhat_of(const Chains& chains) {
  const auto v = variance_parts(chains);
  return std::sqrt(v.pooled / v.within);
}

double ess_of(const Chains& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  const auto v = variance_parts(chains);
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = mean(chains[c]);

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i)
        s += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
      acov += s / static_cast<double>(n);
    }
    acov /= static_cast<double>(m);
    return 1.0 - (v.within - acov) / v.pooled;
  };

  // Geyer's initial monotone positive sequence.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  const double total = static_cast<double>(m * n);
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

Diagnostic diagnose(std::span<const double> trace, int n_chains) {
  if (n_chains < 2) throw Error(ErrorKind::kDomain, "diagnostics", "need at least 2 chains");
  const std::size_t per_chain = trace.size() / idx(n_chains);
  if (per_chain < 4 || per_chain * idx(n_chains) != trace.size())
    throw Error(ErrorKind::kDomain, "diagnostics", "need at least 4 draws per chain");

  const std::size_t half = per_chain / 2;
  Chains split;
  for (int c = 0; c < n_chains; ++c) {
    const auto* base = trace.data() + idx(c) * per_chain;
    split.emplace_back(base, base + half);
    split.emplace_back(base + (per_chain - half), base + per_chain);
  }

  Diagnostic out;
  const auto [mn, mx] = std::minmax_element(trace.begin(), trace.end());
  if (*mn == *mx) {
    out.degenerate = true;
    out.rhat = 1.0;
    out.ess = static_cast<double>(trace.size());
    return out;
  }

  const Chains z = rank_normalize(split);
  std::vector<double> all(trace.begin(), trace.end());
  const double med = median_of(all);
  Chains folded = split;
  for (auto& ch : folded)
    for (auto& x : ch) x = std::abs(x - med);
  const Chains zf = rank_normalize(folded);

  out.rhat = std::max(rhat_of(z), rhat_of(zf));
  out.ess = ess_of(z);
  return out;
}

std::vector<Diagnostic> diagnostics(const ThetaSamples& samples) {
  std::vector<Diagnostic> out;
  out.reserve(samples.n_cells());
  for (std::size_t c = 0; c < samples.n_cells(); ++c)
    out.push_back(diagnose(samples.cell_trace(c), samples.n_chains));
  return out;
}

PosteriorSummary summarize_posterior(const ChainDraws& draws, Exec exec) {
  const ThetaSamples s = theta_samples(draws);
  PosteriorSummary out;
  out.theta_median = point_estimates(s, exec);
  std::tie(out.theta_lower, out.theta_upper) = credible_intervals(s);
  for (int i = 0; i < draws.n_arms; ++i) {
    out.coclustering.push_back(coclustering(draws, i, exec));
    out.q_posterior.push_back(occupied_posterior(draws, i));
    out.components_posterior.push_back(components_posterior(draws, i));
  }
  if (draws.n_chains >= 2 && draws.draws_per_chain >= 4) {
    out.diagnostics = diagnostics(s);
    for (std::size_t c = 0; c < out.diagnostics.size(); ++c)
      if (out.diagnostics[c].degenerate)
        out.warnings.push_back("theta cell " + std::to_string(c) +
                               " is constant; R-hat reported as 1");
  } else {
    out.warnings.emplace_back("diagnostics skipped: need >= 2 chains with >= 4 draws");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition reconstruction

std::vector<int> average_linkage(const Matrix& similarity, double threshold) {
  const std::size_t K = similarity.rows();
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t k = 0; k < K; ++k) clusters.push_back({k});

  auto linkage = [&](const auto& a, const auto& b) {
    double s = 0.0;
    for (auto x : a)
      for (auto y : b) s += similarity(x, y);
    return s / static_cast<double>(a.size() * b.size());
  };

  while (clusters.size() > 1) {
    double best = -1.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double l = linkage(clusters[i], clusters[j]);
        if (l > best) {
          best = l;
          bi = i;
          bj = j;
        }
      }
    if (best < threshold) break;
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  std::vector<int> label(K, -1);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto k : clusters[c]) label[k] = static_cast<int>(c);
  // renumber by first appearance
  std::map<int, int> renum;
  for (auto& l : label) {
    auto it = renum.find(l);
    if (it == renum.end()) it = renum.emplace(l, static_cast<int>(renum.size())).first;
    l = it->second;
  }
  return label;
}

EstimationMetrics estimation_metrics(const std::vector<Matrix>& estimates, const Matrix& truth) {
  if (estimates.empty()) throw Error(ErrorKind::kDomain, "estimation_metrics", "no replicates");
  const std::size_t cells = truth.data().size();
  EstimationMetrics m;
  m.rmse.assign(cells, 0.0);
  m.mae.assign(cells, 0.0);
  m.variance.assign(cells, 0.0);
  std::vector<double> mean(cells, 0.0);
  for (const auto& e : estimates) {
    if (e.data().size() != cells)
      throw Error(ErrorKind::kDimension, "estimation_metrics", "estimate shape differs from truth");
    for (std::size_t c = 0; c < cells; ++c) {
      const double err = e.data()[c] - truth.data()[c];
      m.rmse[c] += err * err;
      m.mae[c] += std::abs(err);
      mean[c] += e.data()[c];
    }
  }
  const double n = static_cast<double>(estimates.size());
  for (std::size_t c = 0; c < cells; ++c) mean[c] /= n;
  for (const auto& e : estimates)
    for (std::size_t c = 0; c < cells; ++c) {
      const double d = e.data()[c] - mean[c];
      m.variance[c] += d * d;
    }
  for (std::size_t c = 0; c < cells; ++c) {
    m.rmse[c] = std::sqrt(m.rmse[c] / n);
    m.mae[c] /= n;
    m.variance[c] /= n;
  }
  return m;
}

double misclassification_rate(std::span<const int> estimated, std::span<const int> truth) {
  if (estimated.size() != truth.size() || truth.empty())
    throw Error(ErrorKind::kDimension, "misclassification", "label vectors differ in length");
  const int n_est = *std::max_element(estimated.begin(), estimated.end()) + 1;
  const int n_true = *std::max_element(truth.begin(), truth.end()) + 1;
  std::vector<std::vector<int>> overlap(idx(n_true), std::vector<int>(idx(n_est), 0));
  for (std::size_t k = 0; k < truth.size(); ++k) ++overlap[idx(truth[k])][idx(estimated[k])];

  // exhaustive search over one-to-one assignments of true groups to clusters
  std::vector<char> used(idx(n_est), 0);
  int best = 0;
  std::function<void(int, int)> search = [&](int g, int acc) {
    if (g == n_true) {
      best = std::max(best, acc);
      return;
    }
    search(g + 1, acc);  // group left unmatched
    for (int c = 0; c < n_est; ++c) {
      if (used[idx(c)]) continue;
      used[idx(c)] = 1;
      search(g + 1, acc + overlap[idx(g)][idx(c)]);
      used[idx(c)] = 0;
    }
  };
  search(0, 0);
  return 1.0 - static_cast<double>(best) / static_cast<double>(truth.size());
}

}  // namespace bharp

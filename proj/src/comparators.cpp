#include "bharp/comparators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bharp/error.hpp"
#include "bharp/parallel.hpp"

namespace bharp {

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

ComparatorDraws empty_draws(Method m, const DataSummary& data, const ChainConfig& cfg) {
  ComparatorDraws out;
  out.method = m;
  out.theta.n_arms = data.n_arms;
  out.theta.n_subgroups = data.n_subgroups;
  out.theta.n_chains = cfg.n_chains;
  out.theta.draws_per_chain = cfg.draws_per_chain();
  out.theta.values.resize(out.theta.n_draws() * out.theta.n_cells());
  out.varsigma.resize(out.theta.n_draws());
  return out;
}

double draw_varsigma(const DataSummary& data, std::span<const double> theta,
                     const Hyperparameters& hypers, Rng& rng) {
  double ss = 0.0;
  for (std::size_t c = 0; c < data.cells.size(); ++c)
    if (data.cells[c].n > 0) ss += data.cells[c].sq_dev(theta[c]);
  return draw::gamma(rng, hypers.a_cell + 0.5 * static_cast<double>(data.n_total),
                     hypers.b_cell + 0.5 * ss);
}

// Shared chain loop: `step` advances (theta, varsigma) by one iteration.
template <class Init, class Step>
void run_theta_chains(ComparatorDraws& out, const ChainConfig& cfg, Init init, Step step) {
  const std::size_t cells = out.theta.n_cells();
  for_each_index(cfg.n_chains, Exec::kParallel, [&](int c) {
    Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
    auto st = init(rng);
    std::size_t slot = idx(c) * idx(cfg.draws_per_chain());
    int stored = 0;
    for (int iter = 0; iter < cfg.n_iter; ++iter) {
      step(st, rng);
      if (iter >= cfg.n_burnin && (iter - cfg.n_burnin + 1) % cfg.thin == 0 &&
          stored < cfg.draws_per_chain()) {
        std::copy(st.theta.begin(), st.theta.end(),
                  out.theta.values.begin() + static_cast<std::ptrdiff_t>(slot * cells));
        out.varsigma[slot] = st.varsigma;
        ++slot;
        ++stored;
      }
    }
  });
}

struct IndState {
  std::vector<double> theta;
  double varsigma = 1.0;
};

struct BhmState {
  std::vector<double> theta;
  std::vector<double> beta;
  std::vector<double> tau;
  double varsigma = 1.0;
};

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kBharp: return "BHARP";
    case Method::kInd: return "IND";
    case Method::kBhm: return "BHM";
    case Method::kBlast: return "BLAST";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (up == "BHARP") return Method::kBharp;
  if (up == "IND") return Method::kInd;
  if (up == "BHM") return Method::kBhm;
  if (up == "BLAST") return Method::kBlast;
  throw Error(ErrorKind::kConfig, "method", "unknown method '" + name + "'");
}

ComparatorDraws fit_ind(const DataSummary& data, const Hyperparameters& hypers,
                        const ChainConfig& cfg) {
  cfg.validate();
  hypers.validate(data.n_arms);
  auto out = empty_draws(Method::kInd, data, cfg);
  const int K = data.n_subgroups;
  run_theta_chains(
      out, cfg,
      [&](Rng& rng) {
        IndState st;
        st.varsigma = draw::gamma(rng, hypers.a_cell, hypers.b_cell);
        st.theta.resize(data.cells.size());
        for (std::size_t c = 0; c < st.theta.size(); ++c) {
          const int i = static_cast<int>(c) / K;
          st.theta[c] = draw::normal(rng, hypers.c_of(i), 1.0 / std::sqrt(hypers.p_of(i)));
        }
        return st;
      },
      [&](IndState& st, Rng& rng) {
        for (std::size_t c = 0; c < st.theta.size(); ++c) {
          const int i = static_cast<int>(c) / K;
          const auto& s = data.cells[c];
          const double prec = hypers.p_of(i) + st.varsigma * s.n;
          const double mean = (hypers.p_of(i) * hypers.c_of(i) + st.varsigma * s.n * s.mean) / prec;
          st.theta[c] = draw::normal(rng, mean, 1.0 / std::sqrt(prec));
        }
        st.varsigma = draw_varsigma(data, st.theta, hypers, rng);
      });
  return out;
}

ComparatorDraws fit_bhm(const DataSummary& data, const Hyperparameters& hypers,
                        const ChainConfig& cfg) {
  cfg.validate();
  hypers.validate(data.n_arms);
  auto out = empty_draws(Method::kBhm, data, cfg);
  const int I = data.n_arms;
  const int K = data.n_subgroups;
  run_theta_chains(
      out, cfg,
      [&](Rng& rng) {
        BhmState st;
        st.varsigma = draw::gamma(rng, hypers.a_cell, hypers.b_cell);
        st.beta.resize(idx(I));
        st.tau.resize(idx(I));
        st.theta.resize(data.cells.size());
        for (int i = 0; i < I; ++i) {
          st.beta[idx(i)] = draw::normal(rng, hypers.c_of(i), 1.0 / std::sqrt(hypers.p_of(i)));
          st.tau[idx(i)] = draw::gamma(rng, hypers.a_between, hypers.b_between);
          for (int k = 0; k < K; ++k)
            st.theta[idx(i * K + k)] =
                draw::normal(rng, st.beta[idx(i)], 1.0 / std::sqrt(st.tau[idx(i)]));
        }
        return st;
      },
      [&](BhmState& st, Rng& rng) {
        st.varsigma = draw_varsigma(data, st.theta, hypers, rng);
        for (int i = 0; i < I; ++i) {
          double& beta = st.beta[idx(i)];
          double& tau = st.tau[idx(i)];
          for (int k = 0; k < K; ++k) {
            const auto& s = data.at(i, k);
            const double prec = tau + st.varsigma * s.n;
            const double mean = (tau * beta + st.varsigma * s.n * s.mean) / prec;
            st.theta[idx(i * K + k)] = draw::normal(rng, mean, 1.0 / std::sqrt(prec));
          }
          double sum = 0.0;
          for (int k = 0; k < K; ++k) sum += st.theta[idx(i * K + k)];
          const double p = hypers.p_of(i);
          const double prec = p + K * tau;
          beta = draw::normal(rng, (p * hypers.c_of(i) + tau * sum) / prec, 1.0 / std::sqrt(prec));
          double ss = 0.0;
          for (int k = 0; k < K; ++k) {
            const double d = st.theta[idx(i * K + k)] - beta;
            ss += d * d;
          }
          tau = draw::gamma(rng, hypers.a_between + 0.5 * K, hypers.b_between + 0.5 * ss);
        }
      });
  return out;
}

namespace {

ComparatorDraws from_chain(Method m, ChainDraws draws) {
  ComparatorDraws out;
  out.method = m;
  out.theta = theta_samples(draws);
  out.varsigma.reserve(draws.draws.size());
  for (const auto& d : draws.draws) out.varsigma.push_back(d.varsigma);
  out.full = std::move(draws);
  return out;
}

}  // namespace

ComparatorDraws fit_bharp(const DataSummary& data, const Hyperparameters& hypers,
                          const ChainConfig& chain_cfg, const MoveConfig& move_cfg) {
  return from_chain(Method::kBharp, run_chain(data, hypers, chain_cfg, move_cfg));
}

ComparatorDraws fit_blast(const DataSummary& data, const Hyperparameters& hypers,
                          const ChainConfig& chain_cfg, const MoveConfig& move_cfg) {
  if (data.n_arms != 1)
    throw Error(ErrorKind::kRefused, "BLAST",
                "refusing multi-arm data: one model per arm and candidate q is infeasible");
  const int max_q = std::min(3, data.n_subgroups);
  ComparatorDraws best;
  std::vector<double> dics;
  double best_dic = std::numeric_limits<double>::infinity();
  int best_q = 0;
  for (int q = 1; q <= max_q; ++q) {
    ChainConfig cfg = chain_cfg;
    cfg.seed = derive_seed(chain_cfg.seed, 0xB1A57u, static_cast<std::uint64_t>(q));
    RunOptions opts;
    opts.fixed_q = q;
    auto fit = from_chain(Method::kBlast, run_chain(data, hypers, cfg, move_cfg, opts));
    const double d = dic(fit.theta, fit.varsigma, data).dic;
    dics.push_back(d);
    if (d < best_dic) {
      best_dic = d;
      best_q = q;
      best = std::move(fit);
    }
  }
  best.selected_q = best_q;
  best.dic_by_q = std::move(dics);
  return best;
}

ComparatorDraws fit_method(Method m, const DataSummary& data, const Hyperparameters& hypers,
                           const ChainConfig& chain_cfg, const MoveConfig& move_cfg) {
  switch (m) {
    case Method::kBharp: return fit_bharp(data, hypers, chain_cfg, move_cfg);
    case Method::kInd: return fit_ind(data, hypers, chain_cfg);
    case Method::kBhm: return fit_bhm(data, hypers, chain_cfg);
    case Method::kBlast: return fit_blast(data, hypers, chain_cfg, move_cfg);
  }
  throw Error(ErrorKind::kConfig, "method", "unhandled method");
}

double deviance(const DataSummary& data, std::span<const double> theta, double varsigma) {
  return -2.0 * log_likelihood(data, theta, varsigma);
}

DicResult dic(const ThetaSamples& theta, std::span<const double> varsigma, const DataSummary& data) {
  const std::size_t n = theta.n_draws();
  if (n < 2 || varsigma.size() != n)
    throw Error(ErrorKind::kDomain, "dic", "need at least 2 draws with matching varsigma");
  const std::size_t cells = theta.n_cells();
  std::vector<double> mean_theta(cells, 0.0);
  double mean_varsigma = 0.0;
  double mean_dev = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const std::span<const double> row(theta.values.data() + d * cells, cells);
    mean_dev += deviance(data, row, varsigma[d]);
    for (std::size_t c = 0; c < cells; ++c) mean_theta[c] += row[c];
    mean_varsigma += varsigma[d];
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean_dev *= inv;
  mean_varsigma *= inv;
  for (auto& v : mean_theta) v *= inv;
  DicResult r;
  r.mean_deviance = mean_dev;
  r.p_d = mean_dev - deviance(data, mean_theta, mean_varsigma);
  r.dic = mean_dev + r.p_d;
  return r;
}

DicResult dic(const ChainDraws& draws, const DataSummary& data) {
  std::vector<double> vs;
  vs.reserve(draws.draws.size());
  for (const auto& d : draws.draws) vs.push_back(d.varsigma);
  return dic(theta_samples(draws), vs, data);
}

}  // namespace bharp

#include "bharp/sampler.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bharp/error.hpp"
#include "bharp/parallel.hpp"

namespace bharp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

void require_finite(double v, const char* block) {
  if (!std::isfinite(v))
    throw Error(ErrorKind::kNumerical, block, "non-finite full-conditional parameter");
}

}  // namespace

void MoveConfig::validate() const {
  if (!(p_split > 0.0 && p_split < 1.0))
    throw Error(ErrorKind::kConfig, "p_split", "must lie in (0, 1)");
  for (const auto* s : {&u1, &u2, &u3})
    if (!(s->a > 0.0 && s->b > 0.0))
      throw Error(ErrorKind::kConfig, "beta_u", "auxiliary Beta shapes must be positive");
}

void ChainConfig::validate() const {
  if (n_chains < 1) throw Error(ErrorKind::kConfig, "n_chains", "must be >= 1");
  if (n_iter < 1) throw Error(ErrorKind::kConfig, "n_iter", "must be >= 1");
  if (n_burnin < 0 || n_burnin >= n_iter)
    throw Error(ErrorKind::kConfig, "n_burnin", "must satisfy 0 <= n_burnin < n_iter");
  if (thin < 1) throw Error(ErrorKind::kConfig, "thin", "must be >= 1");
}

// ---------------------------------------------------------------------------
// Gibbs blocks

namespace gibbs {

void update_varsigma(ModelState& state, const DataSummary& data, const Hyperparameters& hypers,
                     Rng& rng) {
  double ss = 0.0;
  for (int i = 0; i < data.n_arms; ++i) {
    const auto& arm = state.arms[idx(i)];
    for (int k = 0; k < data.n_subgroups; ++k) {
      const auto& s = data.at(i, k);
      if (s.n > 0) ss += s.sq_dev(arm.theta(k));
    }
  }
  const double shape = hypers.a_cell + 0.5 * static_cast<double>(data.n_total);
  const double rate = hypers.b_cell + 0.5 * ss;
  require_finite(rate, "varsigma");
  state.varsigma = draw::gamma(rng, shape, rate);
}

void update_beta(ArmState& arm, int arm_index, double varsigma, const DataSummary& data,
                 const Hyperparameters& hypers, Rng& rng) {
  double n = 0.0;
  double resid = 0.0;
  for (int k = 0; k < data.n_subgroups; ++k) {
    const auto& s = data.at(arm_index, k);
    n += s.n;
    resid += s.n * (s.mean - arm.delta[idx(k)]);
  }
  const double p = hypers.p_of(arm_index);
  const double prec = p + varsigma * n;
  const double mean = (p * hypers.c_of(arm_index) + varsigma * resid) / prec;
  require_finite(mean, "beta");
  arm.beta = draw::normal(rng, mean, 1.0 / std::sqrt(prec));
}

void update_delta(ArmState& arm, int arm_index, double varsigma, const DataSummary& data,
                  Rng& rng) {
  const int K = data.n_subgroups;
  for (int k = 0; k < K; ++k) {
    const auto& s = data.at(arm_index, k);
    const auto t = idx(arm.z[idx(k)]);
    const double prec = 1.0 / arm.sigma[t] + varsigma * s.n;
    const double mean = (arm.mu[t] / arm.sigma[t] + varsigma * s.n * (s.mean - arm.beta)) / prec;
    require_finite(mean, "delta");
    arm.delta[idx(k)] = draw::normal(rng, mean, 1.0 / std::sqrt(prec));
  }
}

void update_allocations(ArmState& arm, Rng& rng, const SamplerSwitches& sw) {
  const auto q = idx(arm.q);
  std::vector<double> log_w(q), half_log_var(q), lp(q);
  for (std::size_t t = 0; t < q; ++t) {
    log_w[t] = std::log(arm.w[t]);
    half_log_var[t] = 0.5 * std::log(arm.sigma[t]);
  }
  for (std::size_t k = 0; k < arm.z.size(); ++k) {
    for (std::size_t t = 0; t < q; ++t) {
      lp[t] = log_w[t];
      if (sw.delta_likelihood) {
        const double d = arm.delta[k] - arm.mu[t];
        lp[t] -= half_log_var[t] + 0.5 * d * d / arm.sigma[t];
      }
    }
    arm.z[k] = draw::categorical_log(rng, lp);
  }
}

void update_weights(ArmState& arm, Rng& rng) {
  const auto n = arm.counts();
  std::vector<double> alpha(n.size());
  for (std::size_t t = 0; t < n.size(); ++t) alpha[t] = 1.0 + n[t];
  arm.w = draw::dirichlet(rng, alpha);
  for (double w : arm.w)
    if (!(w > 0.0)) throw Error(ErrorKind::kNumerical, "w", "weight underflow");
}

void update_means(ArmState& arm, Rng& rng, const SamplerSwitches& sw) {
  const auto q = idx(arm.q);
  std::vector<double> n(q, 0.0), sum(q, 0.0);
  if (sw.delta_likelihood) {
    for (std::size_t k = 0; k < arm.z.size(); ++k) {
      const auto t = idx(arm.z[k]);
      n[t] += 1.0;
      sum[t] += arm.delta[k];
    }
  }
  for (std::size_t t = 0; t < q; ++t) {
    const double prec = arm.tau + n[t] / arm.sigma[t];
    const double mean = (sum[t] / arm.sigma[t]) / prec;
    require_finite(mean, "mu");
    arm.mu[t] = draw::normal(rng, mean, 1.0 / std::sqrt(prec));
  }
}

void update_variances(ArmState& arm, const Hyperparameters& hypers, Rng& rng,
                      const SamplerSwitches& sw) {
  const auto q = idx(arm.q);
  std::vector<double> n(q, 0.0), ss(q, 0.0);
  if (sw.delta_likelihood) {
    for (std::size_t k = 0; k < arm.z.size(); ++k) {
      const auto t = idx(arm.z[k]);
      const double d = arm.delta[k] - arm.mu[t];
      n[t] += 1.0;
      ss[t] += d * d;
    }
  }
  for (std::size_t t = 0; t < q; ++t) {
    const double rate = hypers.b_within + 0.5 * ss[t];
    require_finite(rate, "sigma");
    arm.sigma[t] = draw::inv_gamma(rng, hypers.a_within + 0.5 * n[t], rate);
  }
}

void update_tau(ArmState& arm, const Hyperparameters& hypers, Rng& rng) {
  double ss = 0.0;
  for (double m : arm.mu) ss += m * m;
  const double rate = hypers.b_between + 0.5 * ss;
  require_finite(rate, "tau");
  arm.tau = draw::gamma(rng, hypers.a_between + 0.5 * arm.q, rate);
}

}  // namespace gibbs

void gibbs_sweep(ModelState& state, const DataSummary& data, const Hyperparameters& hypers,
                 Rng& rng, const SamplerSwitches& sw) {
  gibbs::update_varsigma(state, data, hypers, rng);
  for (int i = 0; i < data.n_arms; ++i) {
    auto& arm = state.arms[idx(i)];
    gibbs::update_beta(arm, i, state.varsigma, data, hypers, rng);
    // Without the delta layer the deviation conditional is improper; delta
    // then stays fixed, which leaves the mixture-layer target untouched.
    if (sw.delta_likelihood) gibbs::update_delta(arm, i, state.varsigma, data, rng);
    gibbs::update_allocations(arm, rng, sw);
    gibbs::update_weights(arm, rng);
    gibbs::update_means(arm, rng, sw);
    gibbs::update_variances(arm, hypers, rng, sw);
    gibbs::update_tau(arm, hypers, rng);
  }
}

// ---------------------------------------------------------------------------
// Split / merge transforms

SplitResult split_transform(const Component& c, double u1, double u2, double u3) {
  auto open01 = [](double u) { return u > 0.0 && u < 1.0; };
  if (!open01(u1) || !open01(u2) || !open01(u3))
    throw Error(ErrorKind::kDomain, "split", "degenerate split: auxiliary variable outside (0, 1)");
  if (!(c.w > 0.0 && c.w <= 1.0) || !(c.sigma > 0.0))
    throw Error(ErrorKind::kDomain, "split", "component outside the split domain");

  SplitResult r;
  r.lower.w = c.w * u1;
  r.upper.w = c.w * (1.0 - u1);
  const double shrink = 1.0 - u2 * u2;
  r.lower.mu = c.mu - u2 * std::sqrt(c.sigma * r.upper.w / r.lower.w);
  r.upper.mu = c.mu + u2 * std::sqrt(c.sigma * r.lower.w / r.upper.w);
  r.lower.sigma = u3 * shrink * c.sigma * c.w / r.lower.w;
  r.upper.sigma = (1.0 - u3) * shrink * c.sigma * c.w / r.upper.w;
  r.log_jacobian = std::log(c.w) + std::log(r.upper.mu - r.lower.mu) + std::log(r.lower.sigma) +
                   std::log(r.upper.sigma) -
                   (std::log(u2) + std::log(shrink) + std::log(u3) + std::log1p(-u3) +
                    std::log(c.sigma));
  return r;
}

MergeResult merge_transform(const Component& lower, const Component& upper) {
  if (!(lower.w > 0.0 && upper.w > 0.0 && lower.w + upper.w <= 1.0 + 1e-12))
    throw Error(ErrorKind::kDomain, "merge", "component weights outside (0, 1)");
  if (!(lower.sigma > 0.0 && upper.sigma > 0.0))
    throw Error(ErrorKind::kDomain, "merge", "component variances must be positive");

  MergeResult r;
  const double w = lower.w + upper.w;
  const double gap = upper.mu - lower.mu;
  r.merged.w = w;
  r.merged.mu = (lower.w * lower.mu + upper.w * upper.mu) / w;
  r.merged.sigma =
      (lower.w * lower.sigma + upper.w * upper.sigma) / w + lower.w * upper.w * gap * gap / (w * w);
  r.u1 = lower.w / w;
  r.u2 = gap / (std::sqrt(r.merged.sigma) *
                (std::sqrt(upper.w / lower.w) + std::sqrt(lower.w / upper.w)));
  r.u3 = lower.sigma * lower.w / ((1.0 - r.u2 * r.u2) * r.merged.sigma * w);
  auto open01 = [](double u) { return u > 0.0 && u < 1.0; };
  if (!open01(r.u1) || !open01(r.u2) || !open01(r.u3))
    throw Error(ErrorKind::kDomain, "merge", "components not mergeable");
  const double shrink = 1.0 - r.u2 * r.u2;
  r.log_jacobian = -(std::log(w) + std::log(gap) + std::log(lower.sigma) + std::log(upper.sigma) -
                     (std::log(r.u2) + std::log(shrink) + std::log(r.u3) + std::log1p(-r.u3) +
                      std::log(r.merged.sigma)));
  return r;
}

// ---------------------------------------------------------------------------
// Reversible jump

namespace {

Component component(const ArmState& arm, int t) {
  return {arm.w[idx(t)], arm.mu[idx(t)], arm.sigma[idx(t)]};
}

void set_component(ArmState& arm, int t, const Component& c) {
  arm.w[idx(t)] = c.w;
  arm.mu[idx(t)] = c.mu;
  arm.sigma[idx(t)] = c.sigma;
}

// Probability that a donor subgroup with deviation d moves to `fresh`.
double prob_to_new(const Component& fresh, const Component& stay, double d,
                   const SamplerSwitches& sw) {
  double lf = std::log(fresh.w);
  double ls = std::log(stay.w);
  if (sw.delta_likelihood) {
    lf += logpdf::normal_var(d, fresh.mu, fresh.sigma);
    ls += logpdf::normal_var(d, stay.mu, stay.sigma);
  }
  return 1.0 / (1.0 + std::exp(ls - lf));
}

// log acceptance ratio of splitting `donor` of `small` into `big` (whose
// last component is the new one). The reverse merge uses the negation.
double split_log_ratio(const ArmState& small, const ArmState& big, int donor, double u1, double u2,
                       double u3, double log_jacobian, double log_alloc,
                       const Hyperparameters& hypers, const MoveConfig& cfg,
                       const SamplerSwitches& sw) {
  const int q = small.q;
  const int K = static_cast<int>(small.z.size());
  const auto j = idx(donor);
  const auto fresh = idx(q);
  double L = 0.0;

  // allocation prior and delta layer for the subgroups that changed hands
  for (std::size_t k = 0; k < small.z.size(); ++k) {
    if (small.z[k] != donor) continue;
    const auto t = idx(big.z[k]);
    L += std::log(big.w[t]) - std::log(small.w[j]);
    if (sw.delta_likelihood)
      L += logpdf::normal_var(small.delta[k], big.mu[t], big.sigma[t]) -
           logpdf::normal_var(small.delta[k], small.mu[j], small.sigma[j]);
  }

  L += log_q_prior(q + 1, K, hypers.alpha) - log_q_prior(q, K, hypers.alpha);
  L += std::lgamma(static_cast<double>(q + 1)) - std::lgamma(static_cast<double>(q));
  L += logpdf::normal_prec(big.mu[j], 0.0, small.tau) +
       logpdf::normal_prec(big.mu[fresh], 0.0, small.tau) -
       logpdf::normal_prec(small.mu[j], 0.0, small.tau);
  L += logpdf::inv_gamma_rate(big.sigma[j], hypers.a_within, hypers.b_within) +
       logpdf::inv_gamma_rate(big.sigma[fresh], hypers.a_within, hypers.b_within) -
       logpdf::inv_gamma_rate(small.sigma[j], hypers.a_within, hypers.b_within);

  // proposal: merge(1/q absorber) over split(1/q donor, u, orientation, allocation)
  L += std::log1p(-cfg.p_split) - std::log(cfg.p_split);
  L -= logpdf::beta(u1, cfg.u1.a, cfg.u1.b) + logpdf::beta(u2, cfg.u2.a, cfg.u2.b) +
       logpdf::beta(u3, cfg.u3.a, cfg.u3.b);
  L += std::numbers::ln2;
  L -= log_alloc;
  L += log_jacobian;
  return L;
}

}  // namespace

Proposal propose_split(const ArmState& arm, const SplitMove& move, const Hyperparameters& hypers,
                       const MoveConfig& cfg, const SamplerSwitches& sw) {
  const int q = arm.q;
  if (move.donor < 0 || move.donor >= q)
    throw Error(ErrorKind::kDomain, "split", "donor index out of range");
  const auto sr = split_transform(component(arm, move.donor), move.u1, move.u2, move.u3);
  const Component& stay = move.new_takes_upper ? sr.lower : sr.upper;
  const Component& fresh = move.new_takes_upper ? sr.upper : sr.lower;

  Proposal out{arm, 0.0};
  ArmState& big = out.state;
  big.q = q + 1;
  big.w.push_back(0.0);
  big.mu.push_back(0.0);
  big.sigma.push_back(0.0);
  set_component(big, move.donor, stay);
  set_component(big, q, fresh);

  double log_alloc = 0.0;
  for (std::size_t k = 0; k < arm.z.size(); ++k) {
    if (arm.z[k] != move.donor) continue;
    const double p = prob_to_new(fresh, stay, arm.delta[k], sw);
    if (k < move.to_new.size() && move.to_new[k]) {
      big.z[k] = q;
      log_alloc += std::log(p);
    } else {
      log_alloc += std::log1p(-p);
    }
  }
  out.log_ratio = split_log_ratio(arm, big, move.donor, move.u1, move.u2, move.u3, sr.log_jacobian,
                                  log_alloc, hypers, cfg, sw);
  return out;
}

Proposal propose_merge(const ArmState& arm, int absorber, const Hyperparameters& hypers,
                       const MoveConfig& cfg, const SamplerSwitches& sw) {
  const int last = arm.q - 1;
  if (absorber < 0 || absorber >= last)
    throw Error(ErrorKind::kDomain, "merge", "absorber index out of range");
  const Component keep = component(arm, absorber);
  const Component gone = component(arm, last);
  if (keep.mu == gone.mu) return {arm, kNegInf};
  const bool new_takes_upper = gone.mu > keep.mu;
  const Component& lower = new_takes_upper ? keep : gone;
  const Component& upper = new_takes_upper ? gone : keep;

  MergeResult mr;
  try {
    mr = merge_transform(lower, upper);
  } catch (const Error&) {
    return {arm, kNegInf};
  }

  Proposal out{arm, 0.0};
  ArmState& small = out.state;
  set_component(small, absorber, mr.merged);
  small.q = last;
  small.w.pop_back();
  small.mu.pop_back();
  small.sigma.pop_back();

  double log_alloc = 0.0;
  for (std::size_t k = 0; k < arm.z.size(); ++k) {
    const int t = arm.z[k];
    if (t != absorber && t != last) continue;
    const double p = prob_to_new(gone, keep, arm.delta[k], sw);
    log_alloc += (t == last) ? std::log(p) : std::log1p(-p);
    small.z[k] = absorber;
  }
  out.log_ratio = -split_log_ratio(small, arm, absorber, mr.u1, mr.u2, mr.u3, -mr.log_jacobian,
                                   log_alloc, hypers, cfg, sw);
  return out;
}

RjOutcome rj_step(ArmState& arm, const Hyperparameters& hypers, const MoveConfig& cfg, Rng& rng,
                  const SamplerSwitches& sw) {
  const int K = static_cast<int>(arm.z.size());
  RjOutcome out;
  out.kind = draw::uniform(rng) < cfg.p_split ? MoveKind::kSplit : MoveKind::kMerge;

  Proposal prop;
  if (out.kind == MoveKind::kSplit) {
    if (arm.q >= K) {
      out.blocked = true;
      return out;
    }
    SplitMove move;
    move.donor = draw::uniform_int(rng, 0, arm.q - 1);
    move.u1 = draw::beta(rng, cfg.u1.a, cfg.u1.b);
    move.u2 = draw::beta(rng, cfg.u2.a, cfg.u2.b);
    move.u3 = draw::beta(rng, cfg.u3.a, cfg.u3.b);
    move.new_takes_upper = draw::uniform(rng) < 0.5;
    // Reallocation probabilities depend on the split components, so the
    // transform is evaluated once here and again inside propose_split.
    SplitResult sr;
    try {
      sr = split_transform(component(arm, move.donor), move.u1, move.u2, move.u3);
    } catch (const Error&) {
      return out;  // u landed on the boundary in floating point
    }
    const Component& stay = move.new_takes_upper ? sr.lower : sr.upper;
    const Component& fresh = move.new_takes_upper ? sr.upper : sr.lower;
    move.to_new.assign(arm.z.size(), 0);
    for (std::size_t k = 0; k < arm.z.size(); ++k)
      if (arm.z[k] == move.donor)
        move.to_new[k] = draw::uniform(rng) < prob_to_new(fresh, stay, arm.delta[k], sw);
    prop = propose_split(arm, move, hypers, cfg, sw);
  } else {
    if (arm.q <= 1) {
      out.blocked = true;
      return out;
    }
    const int absorber = draw::uniform_int(rng, 0, arm.q - 2);
    prop = propose_merge(arm, absorber, hypers, cfg, sw);
  }

  if (std::isnan(prop.log_ratio))
    throw Error(ErrorKind::kNumerical, "rj", "acceptance ratio is NaN");
  if (prop.log_ratio >= 0.0 || std::log(draw::uniform(rng)) < prop.log_ratio) {
    arm = std::move(prop.state);
    out.accepted = true;
  }
  return out;
}

RjOutcome rj_step(ModelState& state, int arm, const Hyperparameters& hypers,
                  const MoveConfig& cfg, Rng& rng, const SamplerSwitches& sw) {
  return rj_step(state.arms.at(idx(arm)), hypers, cfg, rng, sw);
}

// ---------------------------------------------------------------------------
// Chains

ModelState draw_from_prior(int n_arms, int n_subgroups, const Hyperparameters& hypers, Rng& rng,
                           std::optional<int> fixed_q) {
  ModelState state;
  state.varsigma = draw::gamma(rng, hypers.a_cell, hypers.b_cell);
  std::vector<double> log_pq(idx(n_subgroups));
  for (int m = 1; m <= n_subgroups; ++m)
    log_pq[idx(m - 1)] = log_q_prior(m, n_subgroups, hypers.alpha);

  state.arms.resize(idx(n_arms));
  for (int i = 0; i < n_arms; ++i) {
    auto& arm = state.arms[idx(i)];
    arm.beta = draw::normal(rng, hypers.c_of(i), 1.0 / std::sqrt(hypers.p_of(i)));
    arm.q = fixed_q ? *fixed_q : 1 + draw::categorical_log(rng, log_pq);
    if (arm.q < 1 || arm.q > n_subgroups)
      throw Error(ErrorKind::kConfig, "q", "fixed component count outside 1..K");
    const std::vector<double> ones(idx(arm.q), 1.0);
    arm.w = draw::dirichlet(rng, ones);
    arm.tau = draw::gamma(rng, hypers.a_between, hypers.b_between);
    arm.mu.resize(idx(arm.q));
    arm.sigma.resize(idx(arm.q));
    for (int t = 0; t < arm.q; ++t) {
      arm.mu[idx(t)] = draw::normal(rng, 0.0, 1.0 / std::sqrt(arm.tau));
      arm.sigma[idx(t)] = draw::inv_gamma(rng, hypers.a_within, hypers.b_within);
    }
    std::vector<double> log_w(idx(arm.q));
    for (int t = 0; t < arm.q; ++t) log_w[idx(t)] = std::log(arm.w[idx(t)]);
    arm.z.resize(idx(n_subgroups));
    arm.delta.resize(idx(n_subgroups));
    for (int k = 0; k < n_subgroups; ++k) {
      const int t = draw::categorical_log(rng, log_w);
      arm.z[idx(k)] = t;
      arm.delta[idx(k)] = draw::normal(rng, arm.mu[idx(t)], std::sqrt(arm.sigma[idx(t)]));
    }
  }
  return state;
}

namespace {

ArmDraw record(const ArmState& raw) {
  ArmState arm = raw;
  identify(arm);
  ArmDraw d;
  d.beta = arm.beta;
  d.theta.resize(arm.delta.size());
  for (std::size_t k = 0; k < arm.delta.size(); ++k) d.theta[k] = raw.beta + raw.delta[k];
  d.delta = std::move(arm.delta);
  d.q = arm.q;
  d.z = std::move(arm.z);
  d.w = std::move(arm.w);
  d.mu = std::move(arm.mu);
  d.sigma = std::move(arm.sigma);
  d.tau = arm.tau;
  return d;
}

void run_one_chain(const DataSummary& data, const Hyperparameters& hypers, const ChainConfig& cfg,
                   const MoveConfig& move_cfg, const RunOptions& opts, int chain, Draw* out,
                   MoveCounters& counters) {
  Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain)));
  ModelState state = draw_from_prior(data.n_arms, data.n_subgroups, hypers, rng, opts.fixed_q);
  int stored = 0;
  for (int iter = 0; iter < cfg.n_iter; ++iter) {
    try {
      gibbs_sweep(state, data, hypers, rng, opts.switches);
      if (!opts.fixed_q) {
        for (int i = 0; i < data.n_arms; ++i) {
          const auto r = rj_step(state.arms[idx(i)], hypers, move_cfg, rng, opts.switches);
          if (r.blocked) {
            ++counters.blocked;
          } else if (r.kind == MoveKind::kSplit) {
            ++counters.split_proposed;
            counters.split_accepted += r.accepted;
          } else {
            ++counters.merge_proposed;
            counters.merge_accepted += r.accepted;
          }
        }
      }
#ifndef NDEBUG
      check_invariants(state, data.n_subgroups);
#endif
    } catch (const Error& e) {
      throw Error(e.kind(),
                  "chain " + std::to_string(chain) + " iteration " + std::to_string(iter) +
                      (e.where().empty() ? "" : " [" + e.where() + "]"),
                  e.what());
    }
    if (iter >= cfg.n_burnin && (iter - cfg.n_burnin + 1) % cfg.thin == 0 &&
        stored < cfg.draws_per_chain()) {
      Draw& d = out[stored++];
      d.chain = chain;
      d.iteration = iter;
      d.varsigma = state.varsigma;
      d.arms.clear();
      d.arms.reserve(state.arms.size());
      for (const auto& arm : state.arms) d.arms.push_back(record(arm));
    }
  }
}

}  // namespace

ChainDraws run_chain(const DataSummary& data, const Hyperparameters& hypers,
                     const ChainConfig& chain_cfg, const MoveConfig& move_cfg,
                     const RunOptions& opts) {
  chain_cfg.validate();
  move_cfg.validate();
  hypers.validate(data.n_arms);

  ChainDraws out;
  out.n_arms = data.n_arms;
  out.n_subgroups = data.n_subgroups;
  out.n_chains = chain_cfg.n_chains;
  out.draws_per_chain = chain_cfg.draws_per_chain();
  out.draws.resize(idx(out.n_chains * out.draws_per_chain));
  out.counters.assign(idx(out.n_chains), MoveCounters{});

  for_each_index(chain_cfg.n_chains, Exec::kParallel, [&](int c) {
    run_one_chain(data, hypers, chain_cfg, move_cfg, opts, c,
                  out.draws.data() + c * out.draws_per_chain, out.counters[idx(c)]);
  });
  return out;
}

ChainDraws run_chain(const Dataset& data, const Hyperparameters& hypers,
                     const ChainConfig& chain_cfg, const MoveConfig& move_cfg,
                     const RunOptions& opts) {
  return run_chain(summarize(data), hypers, chain_cfg, move_cfg, opts);
}

}  // namespace bharp

#include "bharp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "bharp/error.hpp"

namespace bharp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Dataset::Dataset(int n_arms, int n_subgroups)
    : n_arms_(n_arms), n_subgroups_(n_subgroups) {
  if (n_arms < 1) throw Error(ErrorKind::kDimension, "I", "arm count must be >= 1");
  if (n_subgroups < 1) throw Error(ErrorKind::kDimension, "K", "subgroup count must be >= 1");
  cells_.reserve(static_cast<std::size_t>(n_arms * n_subgroups));
  for (int i = 0; i < n_arms; ++i)
    for (int k = 0; k < n_subgroups; ++k) cells_.push_back(CellData{i, k, {}});
}

std::size_t Dataset::n_observations() const noexcept {
  std::size_t n = 0;
  for (const auto& c : cells_) n += c.outcomes.size();
  return n;
}

CellData& Dataset::cell(int arm, int subgroup) {
  if (arm < 0 || arm >= n_arms_ || subgroup < 0 || subgroup >= n_subgroups_)
    throw Error(ErrorKind::kDimension, "cell",
                "index (" + std::to_string(arm) + "," + std::to_string(subgroup) + ") out of range");
  return cells_[static_cast<std::size_t>(arm * n_subgroups_ + subgroup)];
}

const CellData& Dataset::cell(int arm, int subgroup) const {
  return const_cast<Dataset*>(this)->cell(arm, subgroup);
}

void Dataset::add(int arm, int subgroup, double y) { cell(arm, subgroup).outcomes.push_back(y); }

void Dataset::append(const Dataset& other) {
  if (other.n_arms_ != n_arms_ || other.n_subgroups_ != n_subgroups_)
    throw Error(ErrorKind::kDimension, "append", "dataset dimensions differ");
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    auto& dst = cells_[c].outcomes;
    const auto& src = other.cells_[c].outcomes;
    dst.insert(dst.end(), src.begin(), src.end());
  }
}

void Dataset::validate() const {
  if (cells_.size() != static_cast<std::size_t>(n_arms_ * n_subgroups_))
    throw Error(ErrorKind::kDimension, "cells", "expected exactly I*K cells");
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const auto& cell = cells_[c];
    if (cell.arm * n_subgroups_ + cell.subgroup != static_cast<int>(c))
      throw Error(ErrorKind::kDimension, "cells", "cell index does not match its position");
    for (double y : cell.outcomes)
      if (!std::isfinite(y))
        throw Error(ErrorKind::kDomain, "outcomes", "non-finite outcome in cell (" +
                                                        std::to_string(cell.arm + 1) + "," +
                                                        std::to_string(cell.subgroup + 1) + ")");
  }
}

DataSummary summarize(const Dataset& data) {
  data.validate();
  DataSummary out;
  out.n_arms = data.n_arms();
  out.n_subgroups = data.n_subgroups();
  out.cells.reserve(data.n_cells());
  for (const auto& cell : data.cells()) {
    CellStats s;
    s.n = static_cast<int>(cell.outcomes.size());
    if (s.n > 0) {
      s.mean = std::accumulate(cell.outcomes.begin(), cell.outcomes.end(), 0.0) / s.n;
      for (double y : cell.outcomes) s.ss += (y - s.mean) * (y - s.mean);
    }
    out.n_total += static_cast<std::size_t>(s.n);
    out.cells.push_back(s);
  }
  return out;
}

void Hyperparameters::validate(int n_arms) const {
  std::vector<std::string> bad;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) bad.emplace_back(name);
  };
  positive(a_cell, "a_cell");
  positive(b_cell, "b_cell");
  positive(a_within, "a_within");
  positive(b_within, "b_within");
  positive(a_between, "a_between");
  positive(b_between, "b_between");
  if (!std::isfinite(alpha) || alpha < 0.0) bad.emplace_back("alpha");
  if (!c.empty() && static_cast<int>(c.size()) != n_arms) bad.emplace_back("c");
  for (double v : c)
    if (!std::isfinite(v)) {
      bad.emplace_back("c");
      break;
    }
  if (!p.empty() && static_cast<int>(p.size()) != n_arms) bad.emplace_back("p");
  for (double v : p)
    if (!(v > 0.0) || !std::isfinite(v)) {
      bad.emplace_back("p");
      break;
    }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "invalid hyperparameters:";
    for (const auto& b : bad) msg << ' ' << b;
    throw Error(ErrorKind::kConfig, bad.front(), msg.str());
  }
}

std::vector<int> ArmState::counts() const {
  std::vector<int> n(static_cast<std::size_t>(q), 0);
  for (int t : z) ++n[static_cast<std::size_t>(t)];
  return n;
}

int ArmState::occupied() const {
  const auto n = counts();
  return static_cast<int>(std::count_if(n.begin(), n.end(), [](int c) { return c > 0; }));
}

void check_invariants(const ArmState& arm, int n_subgroups) {
  const auto q = static_cast<std::size_t>(arm.q);
  if (arm.q < 1 || arm.q > n_subgroups)
    throw Error(ErrorKind::kDomain, "q", "component count outside 1..K");
  if (arm.w.size() != q || arm.mu.size() != q || arm.sigma.size() != q)
    throw Error(ErrorKind::kDimension, "mixture", "component vectors do not have length q");
  if (arm.delta.size() != static_cast<std::size_t>(n_subgroups) ||
      arm.z.size() != static_cast<std::size_t>(n_subgroups))
    throw Error(ErrorKind::kDimension, "delta", "delta/z do not have length K");
  double wsum = 0.0;
  for (double w : arm.w) {
    if (!(w > 0.0)) throw Error(ErrorKind::kDomain, "w", "non-positive component weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-12) throw Error(ErrorKind::kDomain, "w", "weights do not sum to 1");
  for (double s : arm.sigma)
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorKind::kDomain, "sigma", "non-positive component variance");
  for (double m : arm.mu)
    if (!std::isfinite(m)) throw Error(ErrorKind::kNumerical, "mu", "non-finite component mean");
  if (!(arm.tau > 0.0) || !std::isfinite(arm.tau))
    throw Error(ErrorKind::kDomain, "tau", "non-positive between-component precision");
  for (int t : arm.z)
    if (t < 0 || t >= arm.q) throw Error(ErrorKind::kDomain, "z", "allocation outside 1..q");
  for (double d : arm.delta)
    if (!std::isfinite(d)) throw Error(ErrorKind::kNumerical, "delta", "non-finite deviation");
  if (!std::isfinite(arm.beta)) throw Error(ErrorKind::kNumerical, "beta", "non-finite arm average");
}

void check_invariants(const ModelState& state, int n_subgroups) {
  if (!(state.varsigma > 0.0) || !std::isfinite(state.varsigma))
    throw Error(ErrorKind::kDomain, "varsigma", "non-positive outcome precision");
  for (const auto& arm : state.arms) check_invariants(arm, n_subgroups);
}

void identify(ArmState& arm) {
  const double shift =
      std::accumulate(arm.delta.begin(), arm.delta.end(), 0.0) / static_cast<double>(arm.delta.size());
  arm.beta += shift;
  for (auto& d : arm.delta) d -= shift;
}

namespace logpdf {

double normal_var(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double normal_prec(double x, double mean, double prec) {
  const double d = x - mean;
  return 0.5 * (std::log(prec) - kLog2Pi - prec * d * d);
}

double gamma_rate(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double inv_gamma_rate(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double beta(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

double student_t(double x, double df, double scale) {
  const double r = x / scale;
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(r * r / df);
}

}  // namespace logpdf

double log_q_prior(int q, int max_q, double alpha) {
  double norm = 0.0;
  for (int m = 1; m <= max_q; ++m) norm += std::pow(static_cast<double>(m), alpha);
  return alpha * std::log(static_cast<double>(q)) - std::log(norm);
}

double log_likelihood(const DataSummary& data, std::span<const double> theta, double varsigma) {
  if (theta.size() != data.cells.size())
    throw Error(ErrorKind::kDimension, "theta", "theta length does not match I*K");
  const double log_prec = std::log(varsigma);
  double ll = 0.0;
  for (std::size_t c = 0; c < data.cells.size(); ++c) {
    const auto& s = data.cells[c];
    if (s.n == 0) continue;
    ll += 0.5 * s.n * (log_prec - kLog2Pi) - 0.5 * varsigma * s.sq_dev(theta[c]);
  }
  return ll;
}

double log_arm_prior(const ArmState& arm, int n_subgroups, const Hyperparameters& hypers) {
  double lp = log_q_prior(arm.q, n_subgroups, hypers.alpha);
  lp += std::lgamma(static_cast<double>(arm.q));  // Dirichlet(1, ..., 1)
  lp += logpdf::gamma_rate(arm.tau, hypers.a_between, hypers.b_between);
  for (int t = 0; t < arm.q; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    lp += logpdf::inv_gamma_rate(arm.sigma[ut], hypers.a_within, hypers.b_within);
    lp += logpdf::normal_prec(arm.mu[ut], 0.0, arm.tau);
  }
  for (int k = 0; k < n_subgroups; ++k) {
    const auto t = static_cast<std::size_t>(arm.z[static_cast<std::size_t>(k)]);
    lp += std::log(arm.w[t]);
    lp += logpdf::normal_var(arm.delta[static_cast<std::size_t>(k)], arm.mu[t], arm.sigma[t]);
  }
  return lp;
}

double log_joint(const ModelState& state, const DataSummary& data, const Hyperparameters& hypers) {
  if (static_cast<int>(state.arms.size()) != data.n_arms)
    throw Error(ErrorKind::kDimension, "arms", "state arm count does not match data");
  check_invariants(state, data.n_subgroups);
  hypers.validate(data.n_arms);

  std::vector<double> theta(data.cells.size());
  for (int i = 0; i < data.n_arms; ++i)
    for (int k = 0; k < data.n_subgroups; ++k)
      theta[static_cast<std::size_t>(i * data.n_subgroups + k)] =
          state.arms[static_cast<std::size_t>(i)].theta(k);

  double lj = log_likelihood(data, theta, state.varsigma);
  lj += logpdf::gamma_rate(state.varsigma, hypers.a_cell, hypers.b_cell);
  for (int i = 0; i < data.n_arms; ++i) {
    const auto& arm = state.arms[static_cast<std::size_t>(i)];
    lj += logpdf::normal_prec(arm.beta, hypers.c_of(i), hypers.p_of(i));
    lj += log_arm_prior(arm, data.n_subgroups, hypers);
  }
  return lj;
}

double log_joint(const ModelState& state, const Dataset& data, const Hyperparameters& hypers) {
  return log_joint(state, summarize(data), hypers);
}

SdSummary sd_prior_summary(double a, double b) {
  if (!(a > 1.0)) throw Error(ErrorKind::kDomain, "a", "mode undefined for shape <= 1");
  if (!(b > 0.0)) throw Error(ErrorKind::kDomain, "b", "rate must be positive");

  // sd quantile: P(v <= s^2) = Q(a, b / s^2) for v ~ InvGam(a, b).
  auto sd_quantile = [&](double prob) {
    return std::sqrt(b / boost::math::gamma_q_inv(a, prob));
  };
  auto width = [&](double lower_mass) {
    return sd_quantile(lower_mass + 0.95) - sd_quantile(lower_mass);
  };
  const auto best = boost::math::tools::brent_find_minima(width, 1e-12, 0.05 - 1e-12, 52);
  const double lower_mass = best.first;

  SdSummary out;
  out.mode = std::sqrt(b / (a + 1.0));
  out.hdi95 = {sd_quantile(lower_mass), sd_quantile(lower_mass + 0.95)};
  return out;
}

double crossover_delta(const Hyperparameters& hypers) {
  const double df_w = 2.0 * hypers.a_within;
  const double sc_w = std::sqrt(2.0 * hypers.b_within / hypers.a_within);
  const double df_b = 2.0 * hypers.a_between;
  const double sc_b = std::sqrt(2.0 * hypers.b_between / hypers.a_between);
  if (!(df_w > 0 && sc_w > 0 && df_b > 0 && sc_b > 0))
    throw Error(ErrorKind::kDomain, "crossover", "hyperparameters must be positive");

  // gap > 0 while within-component differences are more likely.
  auto gap = [&](double x) {
    return std::exp(logpdf::student_t(x, df_w, sc_w)) - std::exp(logpdf::student_t(x, df_b, sc_b));
  };
  if (!(gap(0.0) > 0.0)) return 0.0;

  const double upper = 50.0 * std::max(sc_w, sc_b);
  const int steps = 20000;
  const double h = upper / steps;
  double lo = 0.0;
  for (int s = 1; s <= steps; ++s) {
    const double x = s * h;
    if (gap(x) <= 0.0) {
      double hi = x;
      for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) > 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    lo = x;
  }
  // Within density dominates everywhere scanned.
  return upper;
}

}  // namespace bharp

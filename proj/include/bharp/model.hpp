#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace bharp {

// Observations of one subgroup-arm cell. Indices are zero-based in code and
// one-based in every file the tools write.
struct CellData {
  int arm = 0;
  int subgroup = 0;
  std::vector<double> outcomes;
};

class Dataset {
 public:
  Dataset() = default;
  // All I*K cells, empty.
  Dataset(int n_arms, int n_subgroups);

  int n_arms() const noexcept { return n_arms_; }
  int n_subgroups() const noexcept { return n_subgroups_; }
  std::size_t n_cells() const noexcept { return cells_.size(); }
  std::size_t n_observations() const noexcept;

  CellData& cell(int arm, int subgroup);
  const CellData& cell(int arm, int subgroup) const;
  const std::vector<CellData>& cells() const noexcept { return cells_; }

  void add(int arm, int subgroup, double y);
  // Appends every observation of `other` (same dimensions required).
  void append(const Dataset& other);

  // Checks dimensions, index coverage and finiteness.
  void validate() const;

 private:
  int n_arms_ = 0;
  int n_subgroups_ = 0;
  std::vector<CellData> cells_;  // arm-major
};

// Per-cell sufficient statistics; the samplers never touch raw outcomes.
struct CellStats {
  int n = 0;
  double mean = 0.0;
  double ss = 0.0;  // sum of squared deviations from mean

  // sum over observations of (y - theta)^2
  double sq_dev(double theta) const noexcept {
    const double d = mean - theta;
    return ss + n * d * d;
  }
};

struct DataSummary {
  int n_arms = 0;
  int n_subgroups = 0;
  std::vector<CellStats> cells;  // arm-major
  std::size_t n_total = 0;

  const CellStats& at(int arm, int subgroup) const {
    return cells[static_cast<std::size_t>(arm * n_subgroups + subgroup)];
  }
};

DataSummary summarize(const Dataset& data);

struct Hyperparameters {
  double a_cell = 5.0;
  double b_cell = 6.0;
  std::vector<double> c;  // per-arm prior mean of beta; empty -> 0
  std::vector<double> p;  // per-arm prior precision of beta; empty -> 2
  double alpha = 2.0;
  double a_within = 70.0;
  double b_within = 0.71;
  double a_between = 4.0;
  double b_between = 4.0;

  double c_of(int arm) const { return c.empty() ? 0.0 : c.at(static_cast<std::size_t>(arm)); }
  double p_of(int arm) const { return p.empty() ? 2.0 : p.at(static_cast<std::size_t>(arm)); }

  // Throws Error{kConfig} naming every offending field.
  void validate(int n_arms) const;
};

struct ArmState {
  double beta = 0.0;
  std::vector<double> delta;  // length K
  int q = 1;
  std::vector<double> w;      // length q, simplex
  std::vector<double> mu;     // length q
  std::vector<double> sigma;  // length q, component variances
  double tau = 1.0;
  std::vector<int> z;         // length K, entries in [0, q)

  double theta(int k) const { return beta + delta[static_cast<std::size_t>(k)]; }
  std::vector<int> counts() const;
  int occupied() const;
};

struct ModelState {
  double varsigma = 1.0;  // outcome precision, shared by all cells
  std::vector<ArmState> arms;
};

// Throws Error{kDomain} on any broken ArmState/ModelState invariant.
void check_invariants(const ArmState& arm, int n_subgroups);
void check_invariants(const ModelState& state, int n_subgroups);

// Shift beta by the mean of delta so that delta sums to zero; theta unchanged.
void identify(ArmState& arm);

// Log-densities in the parameterizations used throughout the model.
namespace logpdf {
double normal_var(double x, double mean, double var);
double normal_prec(double x, double mean, double prec);
double gamma_rate(double x, double shape, double rate);
double inv_gamma_rate(double x, double shape, double rate);
double beta(double x, double a, double b);
double student_t(double x, double df, double scale);
}  // namespace logpdf

// log P(q) with P(q) proportional to q^alpha on {1..K}.
double log_q_prior(int q, int max_q, double alpha);

// Observation log-likelihood of the whole dataset given theta (I*K,
// arm-major) and the outcome precision.
double log_likelihood(const DataSummary& data, std::span<const double> theta,
                      double varsigma);

// Prior mass of one arm's mixture layer, excluding beta.
double log_arm_prior(const ArmState& arm, int n_subgroups,
                     const Hyperparameters& hypers);

double log_joint(const ModelState& state, const Dataset& data,
                 const Hyperparameters& hypers);
double log_joint(const ModelState& state, const DataSummary& data,
                 const Hyperparameters& hypers);

// Standard deviation summary of a variance with an InvGam(a, b) prior.
struct SdSummary {
  double mode = 0.0;
  std::pair<double, double> hdi95;
};

SdSummary sd_prior_summary(double a, double b);

// Smallest positive difference at which the prior density of two
// same-component subgroups drops below that of two component means.
double crossover_delta(const Hyperparameters& hypers);

}  // namespace bharp

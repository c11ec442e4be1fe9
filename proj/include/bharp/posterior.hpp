#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bharp/matrix.hpp"
#include "bharp/parallel.hpp"
#include "bharp/sampler.hpp"

namespace bharp {

// theta draws of any fitted model, stored [chain][draw][cell] with cells
// arm-major.
struct ThetaSamples {
  int n_arms = 0;
  int n_subgroups = 0;
  int n_chains = 0;
  int draws_per_chain = 0;
  std::vector<double> values;

  std::size_t n_cells() const { return static_cast<std::size_t>(n_arms * n_subgroups); }
  std::size_t n_draws() const { return static_cast<std::size_t>(n_chains * draws_per_chain); }
  double at(std::size_t draw, std::size_t cell) const { return values[draw * n_cells() + cell]; }
  // All draws of one cell, chain-major.
  std::vector<double> cell_trace(std::size_t cell) const;
};

ThetaSamples theta_samples(const ChainDraws& draws);

// Posterior medians, I x K.
Matrix point_estimates(const ThetaSamples& samples, Exec exec = Exec::kParallel);
Matrix point_estimates(const ChainDraws& draws, Exec exec = Exec::kParallel);

// Central interval with the given mass; returns (lower, upper), each I x K.
std::pair<Matrix, Matrix> credible_intervals(const ThetaSamples& samples, double mass = 0.95);

// Fraction of draws with z_j == z_k.
Matrix coclustering(const ChainDraws& draws, int arm, Exec exec = Exec::kParallel);

enum class Direction { kGreater, kLessEqual };

double exceedance(const ThetaSamples& samples, int arm, int subgroup, double x, Direction dir);

using PartitionPredicate = std::function<bool(std::span<const int>)>;
double partition_event(const ChainDraws& draws, int arm, const PartitionPredicate& pred);

// Distribution of the number of occupied components over 1..K.
std::vector<double> occupied_posterior(const ChainDraws& draws, int arm);
// Distribution of q over 1..K.
std::vector<double> components_posterior(const ChainDraws& draws, int arm);

struct Diagnostic {
  double rhat = 1.0;
  double ess = 0.0;
  bool degenerate = false;  // constant trace; rhat reported as 1
};

// Rank-normalized split-R-hat and bulk ESS for a chain-major trace.
Diagnostic diagnose(std::span<const double> trace, int n_chains);
std::vector<Diagnostic> diagnostics(const ThetaSamples& samples);

struct PosteriorSummary {
  Matrix theta_median;
  Matrix theta_lower;
  Matrix theta_upper;
  std::vector<Matrix> coclustering;
  std::vector<std::vector<double>> q_posterior;         // occupied clusters
  std::vector<std::vector<double>> components_posterior;  // raw q
  std::vector<Diagnostic> diagnostics;                  // per cell; empty if one chain
  std::vector<std::string> warnings;
};

PosteriorSummary summarize_posterior(const ChainDraws& draws, Exec exec = Exec::kParallel);

// Average-linkage agglomeration of a similarity matrix: clusters merge while
// their mean pairwise similarity is at least `threshold`. Returns labels
// numbered by first appearance.
std::vector<int> average_linkage(const Matrix& similarity, double threshold = 0.5);

struct EstimationMetrics {
  std::vector<double> rmse;      // per cell, arm-major
  std::vector<double> mae;
  std::vector<double> variance;  // spread of the point estimates across replicates
};

// Accuracy of replicate point estimates against the truth.
EstimationMetrics estimation_metrics(const std::vector<Matrix>& estimates, const Matrix& truth);

// Share of subgroups outside the best one-to-one matching of estimated
// clusters to true groups.
double misclassification_rate(std::span<const int> estimated, std::span<const int> truth);

}  // namespace bharp

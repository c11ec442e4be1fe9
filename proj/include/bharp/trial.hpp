#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bharp/comparators.hpp"
#include "bharp/matrix.hpp"
#include "bharp/model.hpp"

namespace bharp {

struct TrialScenario {
  std::string name;
  int n_arms = 1;
  int n_subgroups = 2;
  Matrix true_theta;               // I x K, standardized effect scale
  double outcome_sd = 1.0;
  std::vector<double> prevalence;  // length K, sums to 1
  std::optional<std::vector<int>> fixed_cell_sizes;  // I*K, arm-major

  void validate() const;
};

// Built-in scenarios: "S1".."S9" (one arm, ten subgroups, fixed sizes) and
// "partner-step-t2d" (three arms, six subgroups, accrual driven).
TrialScenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

// True cluster label of every subgroup of an arm (cells with equal true
// theta share a label, numbered by first appearance).
std::vector<int> true_partition(const TrialScenario& scenario, int arm);

Dataset generate_fixed_dataset(const TrialScenario& scenario, std::uint64_t seed);

enum class AccrualPolicy { kContinueWhileArmActive, kStopOnConclusion };

std::string policy_name(AccrualPolicy p);
AccrualPolicy parse_policy(const std::string& name);

struct DesignConfig {
  std::vector<int> analysis_totals{900, 1200, 1500, 1800};
  double x_e = 0.1;
  double x_f = 0.1;
  std::vector<double> prob_e{0.90, 0.90, 0.90, 0.90};
  std::vector<double> prob_f{0.90, 0.90, 0.90, 0.90};
  AccrualPolicy policy = AccrualPolicy::kContinueWhileArmActive;

  void validate() const;
  int n_analyses() const { return static_cast<int>(analysis_totals.size()); }
};

enum class CellStatus { kActive, kFutile, kEfficacious };

struct DecisionState {
  int n_arms = 0;
  int n_subgroups = 0;
  std::vector<CellStatus> status;            // I*K, arm-major
  std::vector<char> terminated;              // I
  std::vector<std::vector<int>> enrollment;  // [stage][cell] new patients per stage

  DecisionState() = default;
  DecisionState(int n_arms, int n_subgroups);

  CellStatus at(int arm, int subgroup) const {
    return status[static_cast<std::size_t>(arm * n_subgroups + subgroup)];
  }
  bool accrual_eligible(int arm, int subgroup, AccrualPolicy policy) const;
  std::vector<int> cell_totals() const;
  int total_enrolled() const;
  bool all_terminated() const;
};

struct CellProbabilities {
  double p_efficacy = 0.0;  // P(theta > x_E)
  double p_futility = 0.0;  // P(theta <= x_F)
};

// New patients for one stage. Each patient's subgroup follows the
// prevalence; patients are randomized uniformly among eligible arms and
// screened out when their subgroup has none. Draws until n_new patients
// are enrolled or no cell is eligible.
Dataset accrue(const TrialScenario& scenario, const DecisionState& decisions, int n_new,
               AccrualPolicy policy, Rng& rng);

// Futility, then efficacy, then arm termination. At the final analysis any
// cell still active afterwards is closed as futile.
DecisionState apply_rules(const std::vector<std::optional<CellProbabilities>>& probs,
                          DecisionState decisions, const DesignConfig& design,
                          int analysis_index);

struct AnalysisRecord {
  int analysis = 0;
  int enrolled = 0;
  std::vector<CellProbabilities> probabilities;
  std::vector<CellStatus> status;
};

struct TrialResult {
  DecisionState decisions;
  std::vector<int> sample_sizes;  // I*K
  Matrix estimates;               // posterior medians at the last analysis run
  std::vector<AnalysisRecord> log;
};

TrialResult run_trial(const TrialScenario& scenario, const DesignConfig& design, Method method,
                      const Hyperparameters& hypers, const ChainConfig& chain_cfg,
                      const MoveConfig& move_cfg, std::uint64_t seed);

// Truth classes used by the operating characteristics.
inline constexpr double kNullThreshold = 0.05;
inline constexpr double kEffectiveThreshold = 0.30;

struct OperatingCharacteristics {
  int n_trials = 0;
  double global_fpr = 0.0;
  double generalized_power = 0.0;
  std::vector<double> arm_fnr;
  std::vector<double> expected_arm_size;
  std::vector<double> cell_rmse;  // I*K
  std::vector<std::string> warnings;
};

OperatingCharacteristics operating_characteristics(const std::vector<TrialResult>& results,
                                                   const TrialScenario& scenario);

}  // namespace bharp

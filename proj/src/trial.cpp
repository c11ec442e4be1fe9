#include "bharp/trial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bharp/error.hpp"
#include "bharp/posterior.hpp"

namespace bharp {

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

struct Level {
  int count;
  double theta;
  int size;
};

// One-arm, ten-subgroup scenarios, listed low -> medium -> high.
TrialScenario one_arm(const std::string& name, std::initializer_list<Level> levels) {
  TrialScenario s;
  s.name = name;
  s.n_arms = 1;
  std::vector<double> theta;
  std::vector<int> sizes;
  for (const auto& l : levels)
    for (int c = 0; c < l.count; ++c) {
      theta.push_back(l.theta);
      sizes.push_back(l.size);
    }
  s.n_subgroups = static_cast<int>(theta.size());
  s.true_theta = Matrix(1, theta.size());
  s.true_theta.data() = theta;
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  for (int n : sizes) s.prevalence.push_back(n / total);
  s.fixed_cell_sizes = sizes;
  return s;
}

constexpr double kLow = 0.0;
constexpr double kMed = 0.65;
constexpr double kHigh = 1.3;

}  // namespace

void TrialScenario::validate() const {
  if (n_arms < 1 || n_subgroups < 1)
    throw Error(ErrorKind::kConfig, "scenario", "need at least one arm and one subgroup");
  if (true_theta.rows() != idx(n_arms) || true_theta.cols() != idx(n_subgroups))
    throw Error(ErrorKind::kDimension, "true_theta", "must be I x K");
  for (double t : true_theta.data())
    if (!std::isfinite(t)) throw Error(ErrorKind::kDomain, "true_theta", "must be finite");
  if (!(outcome_sd >= 0.0)) throw Error(ErrorKind::kDomain, "outcome_sd", "must be >= 0");
  if (prevalence.size() != idx(n_subgroups))
    throw Error(ErrorKind::kDimension, "prevalence", "must have length K");
  double sum = 0.0;
  for (double p : prevalence) {
    if (!(p >= 0.0)) throw Error(ErrorKind::kDomain, "prevalence", "must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::kDomain, "prevalence", "must sum to 1");
  if (fixed_cell_sizes) {
    if (fixed_cell_sizes->size() != idx(n_arms * n_subgroups))
      throw Error(ErrorKind::kDimension, "fixed_cell_sizes", "must have I*K entries");
    for (int n : *fixed_cell_sizes)
      if (n < 0) throw Error(ErrorKind::kDomain, "fixed_cell_sizes", "must be non-negative");
  }
}

TrialScenario builtin_scenario(const std::string& name) {
  if (name == "S1") return one_arm(name, {{10, kLow, 35}});
  if (name == "S2") return one_arm(name, {{7, kLow, 35}, {3, kHigh, 35}});
  if (name == "S3") return one_arm(name, {{7, kLow, 35}, {3, kMed, 35}});
  if (name == "S4") return one_arm(name, {{7, kLow, 35}, {3, kMed, 70}});
  if (name == "S5") return one_arm(name, {{5, kLow, 35}, {5, kMed, 35}});
  if (name == "S6") return one_arm(name, {{4, kLow, 35}, {3, kMed, 35}, {3, kHigh, 35}});
  if (name == "S7") return one_arm(name, {{4, kLow, 42}, {3, kMed, 84}, {3, kHigh, 56}});
  if (name == "S8") return one_arm(name, {{7, kLow, 35}, {2, kMed, 35}, {1, kHigh, 35}});
  if (name == "S9") return one_arm(name, {{7, kLow, 35}, {2, kMed, 70}, {1, kHigh, 84}});
  if (name == "partner-step-t2d") {
    TrialScenario s;
    s.name = name;
    s.n_arms = 3;
    s.n_subgroups = 6;
    s.true_theta = Matrix(3, 6);
    s.true_theta.data() = {0.30,  0.30, 0.30, 0.30,  0.30, 0.30,   // homogeneous
                           -0.05, 0.30, 0.65, -0.05, 0.35, 0.65,   // marital-quality gradient
                           -0.05, 0.00, 0.05, 0.60,  0.65, 0.55};  // weight concordance
    s.prevalence.assign(6, 1.0 / 6.0);
    return s;
  }
  throw Error(ErrorKind::kConfig, "scenario", "unknown built-in scenario '" + name + "'");
}

std::vector<std::string> builtin_scenario_names() {
  return {"S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "partner-step-t2d"};
}

std::vector<int> true_partition(const TrialScenario& scenario, int arm) {
  std::vector<int> labels(idx(scenario.n_subgroups));
  std::map<double, int> seen;
  for (int k = 0; k < scenario.n_subgroups; ++k) {
    const double t = scenario.true_theta(idx(arm), idx(k));
    auto it = seen.find(t);
    if (it == seen.end()) it = seen.emplace(t, static_cast<int>(seen.size())).first;
    labels[idx(k)] = it->second;
  }
  return labels;
}

Dataset generate_fixed_dataset(const TrialScenario& scenario, std::uint64_t seed) {
  scenario.validate();
  if (!scenario.fixed_cell_sizes)
    throw Error(ErrorKind::kConfig, "fixed_cell_sizes", "scenario has no fixed cell sizes");
  Dataset data(scenario.n_arms, scenario.n_subgroups);
  Rng rng = make_rng(seed);
  for (int i = 0; i < scenario.n_arms; ++i)
    for (int k = 0; k < scenario.n_subgroups; ++k) {
      const int n = (*scenario.fixed_cell_sizes)[idx(i * scenario.n_subgroups + k)];
      auto& out = data.cell(i, k).outcomes;
      out.reserve(idx(n));
      for (int r = 0; r < n; ++r)
        out.push_back(
            draw::normal(rng, scenario.true_theta(idx(i), idx(k)), scenario.outcome_sd));
    }
  return data;
}

std::string policy_name(AccrualPolicy p) {
  return p == AccrualPolicy::kContinueWhileArmActive ? "continue-while-arm-active"
                                                     : "stop-on-conclusion";
}

AccrualPolicy parse_policy(const std::string& name) {
  if (name == "continue-while-arm-active") return AccrualPolicy::kContinueWhileArmActive;
  if (name == "stop-on-conclusion") return AccrualPolicy::kStopOnConclusion;
  throw Error(ErrorKind::kConfig, "efficacy_accrual_policy", "unknown policy '" + name + "'");
}

void DesignConfig::validate() const {
  if (analysis_totals.empty())
    throw Error(ErrorKind::kConfig, "analysis_totals", "need at least one analysis");
  for (std::size_t a = 0; a < analysis_totals.size(); ++a)
    if (analysis_totals[a] <= 0 || (a > 0 && analysis_totals[a] <= analysis_totals[a - 1]))
      throw Error(ErrorKind::kConfig, "analysis_totals", "must be positive and strictly increasing");
  if (prob_e.size() != analysis_totals.size() || prob_f.size() != analysis_totals.size())
    throw Error(ErrorKind::kConfig, "prob_e", "need one threshold per analysis");
  // 1.0 is accepted: it switches a rule off at that analysis.
  for (double p : prob_e)
    if (!(p > 0.5 && p <= 1.0)) throw Error(ErrorKind::kConfig, "prob_e", "must lie in (0.5, 1]");
  for (double p : prob_f)
    if (!(p > 0.5 && p <= 1.0)) throw Error(ErrorKind::kConfig, "prob_f", "must lie in (0.5, 1]");
  if (!std::isfinite(x_e) || !std::isfinite(x_f))
    throw Error(ErrorKind::kConfig, "x_e", "boundaries must be finite");
}

DecisionState::DecisionState(int arms, int subgroups)
    : n_arms(arms),
      n_subgroups(subgroups),
      status(idx(arms * subgroups), CellStatus::kActive),
      terminated(idx(arms), 0) {}

bool DecisionState::accrual_eligible(int arm, int subgroup, AccrualPolicy policy) const {
  if (terminated[idx(arm)]) return false;
  const CellStatus s = at(arm, subgroup);
  if (s == CellStatus::kFutile) return false;
  return policy == AccrualPolicy::kContinueWhileArmActive || s == CellStatus::kActive;
}

std::vector<int> DecisionState::cell_totals() const {
  std::vector<int> out(status.size(), 0);
  for (const auto& stage : enrollment)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += stage[c];
  return out;
}

int DecisionState::total_enrolled() const {
  const auto t = cell_totals();
  return std::accumulate(t.begin(), t.end(), 0);
}

bool DecisionState::all_terminated() const {
  return std::all_of(terminated.begin(), terminated.end(), [](char t) { return t != 0; });
}

Dataset accrue(const TrialScenario& scenario, const DecisionState& decisions, int n_new,
               AccrualPolicy policy, Rng& rng) {
  const int I = scenario.n_arms;
  const int K = scenario.n_subgroups;
  Dataset out(I, K);
  if (n_new <= 0) return out;

  std::vector<std::vector<int>> eligible(idx(K));
  bool any = false;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < I; ++i)
      if (decisions.accrual_eligible(i, k, policy)) eligible[idx(k)].push_back(i);
    any = any || (!eligible[idx(k)].empty() && scenario.prevalence[idx(k)] > 0.0);
  }
  if (!any) return out;

  std::discrete_distribution<int> subgroup_of(scenario.prevalence.begin(),
                                              scenario.prevalence.end());
  int enrolled = 0;
  while (enrolled < n_new) {
    const int k = subgroup_of(rng);
    const auto& arms = eligible[idx(k)];
    if (arms.empty()) continue;  // screened out
    const int i = arms[idx(draw::uniform_int(rng, 0, static_cast<int>(arms.size()) - 1))];
    out.add(i, k, draw::normal(rng, scenario.true_theta(idx(i), idx(k)), scenario.outcome_sd));
    ++enrolled;
  }
  return out;
}

DecisionState apply_rules(const std::vector<std::optional<CellProbabilities>>& probs,
                          DecisionState decisions, const DesignConfig& design,
                          int analysis_index) {
  const int I = decisions.n_arms;
  const int K = decisions.n_subgroups;
  if (probs.size() != decisions.status.size())
    throw Error(ErrorKind::kDimension, "apply_rules", "need one probability slot per cell");
  if (analysis_index < 0 || analysis_index >= design.n_analyses())
    throw Error(ErrorKind::kDomain, "apply_rules", "analysis index out of range");
  const auto a = idx(analysis_index);
  const bool final_analysis = analysis_index == design.n_analyses() - 1;

  for (std::size_t c = 0; c < probs.size(); ++c)
    if (decisions.status[c] == CellStatus::kActive && !probs[c])
      throw Error(ErrorKind::kDomain, "apply_rules",
                  "missing posterior probabilities for active cell " + std::to_string(c));

  // futility (enrichment)
  for (std::size_t c = 0; c < probs.size(); ++c)
    if (decisions.status[c] == CellStatus::kActive && probs[c]->p_futility > design.prob_f[a])
      decisions.status[c] = CellStatus::kFutile;

  // efficacy, for arms still active in at least one subgroup
  for (int i = 0; i < I; ++i) {
    if (decisions.terminated[idx(i)]) continue;
    for (int k = 0; k < K; ++k) {
      const auto c = idx(i * K + k);
      if (decisions.status[c] == CellStatus::kActive && probs[c]->p_efficacy > design.prob_e[a])
        decisions.status[c] = CellStatus::kEfficacious;
    }
  }

  if (final_analysis)
    for (auto& s : decisions.status)
      if (s == CellStatus::kActive) s = CellStatus::kFutile;

  // arm termination
  for (int i = 0; i < I; ++i) {
    bool open = false;
    for (int k = 0; k < K; ++k) open = open || decisions.at(i, k) == CellStatus::kActive;
    if (!open) decisions.terminated[idx(i)] = 1;
  }
  return decisions;
}

TrialResult run_trial(const TrialScenario& scenario, const DesignConfig& design, Method method,
                      const Hyperparameters& hypers, const ChainConfig& chain_cfg,
                      const MoveConfig& move_cfg, std::uint64_t seed) {
  scenario.validate();
  design.validate();
  if (method == Method::kBlast)
    throw Error(ErrorKind::kRefused, "trial", "BLAST is single-arm only and cannot drive a trial");

  const int I = scenario.n_arms;
  const int K = scenario.n_subgroups;
  TrialResult result;
  result.decisions = DecisionState(I, K);
  DecisionState& state = result.decisions;
  Dataset data(I, K);
  Rng accrual_rng = make_rng(derive_seed(seed, 0xACC));

  for (int a = 0; a < design.n_analyses(); ++a) {
    try {
      const int need = design.analysis_totals[idx(a)] - state.total_enrolled();
      const Dataset batch = accrue(scenario, state, need, design.policy, accrual_rng);
      std::vector<int> stage(idx(I * K));
      for (std::size_t c = 0; c < stage.size(); ++c)
        stage[c] = static_cast<int>(batch.cells()[c].outcomes.size());
      state.enrollment.push_back(std::move(stage));
      data.append(batch);

      ChainConfig cfg = chain_cfg;
      // keyed by enrolment so identical data always meets an identical chain
      cfg.seed = derive_seed(seed, 0xF17, static_cast<std::uint64_t>(state.total_enrolled()));
      const auto fit = fit_method(method, summarize(data), hypers, cfg, move_cfg);

      std::vector<std::optional<CellProbabilities>> probs(idx(I * K));
      AnalysisRecord rec;
      rec.analysis = a;
      rec.enrolled = state.total_enrolled();
      for (int i = 0; i < I; ++i)
        for (int k = 0; k < K; ++k) {
          CellProbabilities p;
          p.p_efficacy = exceedance(fit.theta, i, k, design.x_e, Direction::kGreater);
          p.p_futility = exceedance(fit.theta, i, k, design.x_f, Direction::kLessEqual);
          probs[idx(i * K + k)] = p;
          rec.probabilities.push_back(p);
        }
      state = apply_rules(probs, std::move(state), design, a);
      rec.status = state.status;
      result.log.push_back(std::move(rec));
      result.estimates = point_estimates(fit.theta, Exec::kSerial);
    } catch (const Error& e) {
      throw Error(e.kind(), "analysis " + std::to_string(a + 1), e.what());
    }
    if (state.all_terminated()) break;
  }
  result.sample_sizes = state.cell_totals();
  return result;
}

OperatingCharacteristics operating_characteristics(const std::vector<TrialResult>& results,
                                                   const TrialScenario& scenario) {
  if (results.empty()) throw Error(ErrorKind::kDomain, "operating_characteristics", "no trials");
  const int I = scenario.n_arms;
  const int K = scenario.n_subgroups;
  auto truth = [&](int i, int k) { return scenario.true_theta(idx(i), idx(k)); };

  OperatingCharacteristics oc;
  oc.n_trials = static_cast<int>(results.size());
  oc.arm_fnr.assign(idx(I), 0.0);
  oc.expected_arm_size.assign(idx(I), 0.0);
  oc.cell_rmse.assign(idx(I * K), 0.0);

  bool any_effective = false;
  for (int i = 0; i < I; ++i)
    for (int k = 0; k < K; ++k) any_effective = any_effective || truth(i, k) >= kEffectiveThreshold;
  if (!any_effective)
    oc.warnings.emplace_back("no truly effective cell: generalized power set to 0");

  int fp_trials = 0;
  int power_trials = 0;
  std::vector<int> fn_trials(idx(I), 0);
  for (const auto& r : results) {
    const auto& d = r.decisions;
    bool false_positive = false;
    bool all_found = any_effective;
    for (int k = 0; k < K; ++k) {
      bool has_effective = false;
      bool found = false;
      for (int i = 0; i < I; ++i) {
        const bool eff = d.at(i, k) == CellStatus::kEfficacious;
        if (truth(i, k) <= kNullThreshold && eff) false_positive = true;
        if (truth(i, k) >= kEffectiveThreshold) {
          has_effective = true;
          found = found || eff;
        }
      }
      if (has_effective && !found) all_found = false;
    }
    fp_trials += false_positive;
    power_trials += all_found;

    for (int i = 0; i < I; ++i) {
      bool missed = false;
      int n = 0;
      for (int k = 0; k < K; ++k) {
        if (truth(i, k) >= kEffectiveThreshold && d.at(i, k) != CellStatus::kEfficacious)
          missed = true;
        n += r.sample_sizes[idx(i * K + k)];
      }
      fn_trials[idx(i)] += missed;
      oc.expected_arm_size[idx(i)] += n;
    }
    for (int c = 0; c < I * K; ++c) {
      const double e = r.estimates.data()[idx(c)] - truth(c / K, c % K);
      oc.cell_rmse[idx(c)] += e * e;
    }
  }
  const double n = static_cast<double>(results.size());
  oc.global_fpr = fp_trials / n;
  oc.generalized_power = power_trials / n;
  for (int i = 0; i < I; ++i) {
    oc.arm_fnr[idx(i)] = fn_trials[idx(i)] / n;
    oc.expected_arm_size[idx(i)] /= n;
  }
  for (auto& v : oc.cell_rmse) v = std::sqrt(v / n);
  return oc;
}

}  // namespace bharp

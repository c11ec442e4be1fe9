#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "bharp/model.hpp"
#include "bharp/rng.hpp"

namespace bharp {

struct BetaShape {
  double a = 2.0;
  double b = 2.0;
};

struct MoveConfig {
  double p_split = 0.6;
  BetaShape u1{};
  BetaShape u2{};
  BetaShape u3{};

  void validate() const;
};

struct ChainConfig {
  int n_chains = 4;
  int n_iter = 2000;
  int n_burnin = 1000;
  int thin = 1;
  std::uint64_t seed = 1;

  void validate() const;
  int draws_per_chain() const { return (n_iter - n_burnin) / thin; }
};

// Test hook. With delta_likelihood off, p(delta | mixture) is treated as a
// constant everywhere in the sampler so the chain targets the prior of the
// mixture layer.
struct SamplerSwitches {
  bool delta_likelihood = true;
};

struct ArmDraw {
  double beta = 0.0;
  std::vector<double> delta;
  std::vector<double> theta;
  int q = 1;
  std::vector<int> z;
  std::vector<double> w;
  std::vector<double> mu;
  std::vector<double> sigma;
  double tau = 0.0;
};

struct Draw {
  int chain = 0;
  int iteration = 0;
  double varsigma = 0.0;
  std::vector<ArmDraw> arms;
};

struct MoveCounters {
  long split_proposed = 0;
  long split_accepted = 0;
  long merge_proposed = 0;
  long merge_accepted = 0;
  long blocked = 0;

  MoveCounters& operator+=(const MoveCounters& o) {
    split_proposed += o.split_proposed;
    split_accepted += o.split_accepted;
    merge_proposed += o.merge_proposed;
    merge_accepted += o.merge_accepted;
    blocked += o.blocked;
    return *this;
  }
};

struct ChainDraws {
  int n_arms = 0;
  int n_subgroups = 0;
  int n_chains = 0;
  int draws_per_chain = 0;
  std::vector<Draw> draws;             // chain-major, identified (sum delta = 0)
  std::vector<MoveCounters> counters;  // one per chain
};

// Gibbs blocks. Each draws its parameters from the exact full conditional
// given everything else in `state`.
namespace gibbs {
void update_varsigma(ModelState& state, const DataSummary& data, const Hyperparameters& hypers,
                     Rng& rng);
void update_beta(ArmState& arm, int arm_index, double varsigma, const DataSummary& data,
                 const Hyperparameters& hypers, Rng& rng);
void update_delta(ArmState& arm, int arm_index, double varsigma, const DataSummary& data, Rng& rng);
void update_allocations(ArmState& arm, Rng& rng, const SamplerSwitches& sw = {});
void update_weights(ArmState& arm, Rng& rng);
void update_means(ArmState& arm, Rng& rng, const SamplerSwitches& sw = {});
void update_variances(ArmState& arm, const Hyperparameters& hypers, Rng& rng,
                      const SamplerSwitches& sw = {});
void update_tau(ArmState& arm, const Hyperparameters& hypers, Rng& rng);
}  // namespace gibbs

// varsigma, then per arm: beta, delta, z, w, mu, sigma, tau.
void gibbs_sweep(ModelState& state, const DataSummary& data, const Hyperparameters& hypers,
                 Rng& rng, const SamplerSwitches& sw = {});

struct Component {
  double w = 0.0;
  double mu = 0.0;
  double sigma = 0.0;  // variance
};

struct SplitResult {
  Component lower;  // mean shifted down, weight w*u1
  Component upper;
  double log_jacobian = 0.0;
};

struct MergeResult {
  Component merged;
  double u1 = 0.0;
  double u2 = 0.0;
  double u3 = 0.0;
  double log_jacobian = 0.0;
};

// Moment-matched split of one component into two.
SplitResult split_transform(const Component& c, double u1, double u2, double u3);
// Inverse of split_transform; `lower` must carry the smaller mean.
MergeResult merge_transform(const Component& lower, const Component& upper);

enum class MoveKind { kSplit, kMerge };

struct RjOutcome {
  MoveKind kind = MoveKind::kSplit;
  bool accepted = false;
  bool blocked = false;
};

// A fully specified split of component `donor` of a q-component arm. The
// new component is appended at index q; `new_takes_upper` selects which
// half of the split it receives. `to_new[k]` is consulted only for
// subgroups currently allocated to the donor.
struct SplitMove {
  int donor = 0;
  double u1 = 0.5;
  double u2 = 0.5;
  double u3 = 0.5;
  bool new_takes_upper = true;
  std::vector<char> to_new;
};

struct Proposal {
  ArmState state;
  double log_ratio = 0.0;  // log acceptance ratio (before min with 0)
};

Proposal propose_split(const ArmState& arm, const SplitMove& move, const Hyperparameters& hypers,
                       const MoveConfig& cfg, const SamplerSwitches& sw = {});
// Absorbs the last component into `absorber`. log_ratio is -inf when the
// pair cannot be the image of any split.
Proposal propose_merge(const ArmState& arm, int absorber, const Hyperparameters& hypers,
                       const MoveConfig& cfg, const SamplerSwitches& sw = {});

RjOutcome rj_step(ArmState& arm, const Hyperparameters& hypers, const MoveConfig& cfg, Rng& rng,
                  const SamplerSwitches& sw = {});
RjOutcome rj_step(ModelState& state, int arm, const Hyperparameters& hypers,
                  const MoveConfig& cfg, Rng& rng, const SamplerSwitches& sw = {});

// Draws every parameter from its prior; q from its prior unless fixed.
ModelState draw_from_prior(int n_arms, int n_subgroups, const Hyperparameters& hypers, Rng& rng,
                           std::optional<int> fixed_q = std::nullopt);

struct RunOptions {
  std::optional<int> fixed_q;  // freezes q and disables the reversible jump
  SamplerSwitches switches{};
};

ChainDraws run_chain(const DataSummary& data, const Hyperparameters& hypers,
                     const ChainConfig& chain_cfg, const MoveConfig& move_cfg,
                     const RunOptions& opts = {});
ChainDraws run_chain(const Dataset& data, const Hyperparameters& hypers,
                     const ChainConfig& chain_cfg, const MoveConfig& move_cfg,
                     const RunOptions& opts = {});

}  // namespace bharp

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bharp/posterior.hpp"
#include "bharp/sampler.hpp"

namespace bharp {

enum class Method { kBharp, kInd, kBhm, kBlast };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// theta draws of a fitted model, with the outcome precision of every draw
// (needed for DIC). BLAST additionally reports its model choice.
struct ComparatorDraws {
  Method method = Method::kInd;
  ThetaSamples theta;
  std::vector<double> varsigma;  // one per stored draw
  int selected_q = 0;            // BLAST only
  std::vector<double> dic_by_q;  // BLAST only, index q-1
  std::optional<ChainDraws> full;  // mixture draws for BHARP / BLAST
};

ComparatorDraws fit_ind(const DataSummary& data, const Hyperparameters& hypers,
                        const ChainConfig& chain_cfg);
ComparatorDraws fit_bhm(const DataSummary& data, const Hyperparameters& hypers,
                        const ChainConfig& chain_cfg);
// Single-arm only; fits q = 1, 2, 3 (capped at K) and keeps the lowest DIC.
ComparatorDraws fit_blast(const DataSummary& data, const Hyperparameters& hypers,
                          const ChainConfig& chain_cfg, const MoveConfig& move_cfg = {});
ComparatorDraws fit_bharp(const DataSummary& data, const Hyperparameters& hypers,
                          const ChainConfig& chain_cfg, const MoveConfig& move_cfg = {});

ComparatorDraws fit_method(Method m, const DataSummary& data, const Hyperparameters& hypers,
                           const ChainConfig& chain_cfg, const MoveConfig& move_cfg = {});

// Deviance of the observations given theta (I*K, arm-major) and varsigma.
double deviance(const DataSummary& data, std::span<const double> theta, double varsigma);

struct DicResult {
  double dic = 0.0;
  double mean_deviance = 0.0;
  double p_d = 0.0;
};

// Spiegelhalter DIC with the plug-in at the posterior means of theta and varsigma.
DicResult dic(const ThetaSamples& theta, std::span<const double> varsigma, const DataSummary& data);
DicResult dic(const ChainDraws& draws, const DataSummary& data);

}  // namespace bharp

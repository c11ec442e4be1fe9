#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bharp/comparators.hpp"
#include "bharp/posterior.hpp"
#include "bharp/sampler.hpp"
#include "bharp/trial.hpp"

#include "json.hpp"

namespace bharp {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { kFit, kSimulate, kTrial, kSummarize };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);

struct RunConfig {
  Mode mode = Mode::kSimulate;
  std::vector<Method> methods{Method::kBharp};
  std::string scenario = "S1";  // built-in name or path to a scenario JSON file
  TrialScenario resolved_scenario;
  Hyperparameters hypers;
  ChainConfig chain;
  MoveConfig move;
  DesignConfig design;
  int n_replicates = 1;
  std::uint64_t master_seed = 1;
  int workers = 0;  // 0 = OpenMP default; never affects results
  std::filesystem::path out_dir = "out";
  std::filesystem::path data_path;   // fit: CSV with arm,subgroup,outcome
  std::filesystem::path draws_path;  // summarize: a draws CSV written by fit

  // Resolves the scenario and applies scenario-dependent defaults. Throws
  // kConfig listing every invalid field.
  void finalize();
  bool within_set = false;  // a_within / b_within given explicitly
};

// Parses the JSON config schema documented in the README. Unknown keys and
// type errors are collected and reported together.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Resolved configuration as written to the manifest.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

TrialScenario load_scenario_file(const std::filesystem::path& path);
TrialScenario resolve_scenario(const std::string& ref);

// One-based arm,subgroup,outcome CSV with a header row.
Dataset read_data_csv(const std::filesystem::path& path);
void write_data_csv(const Dataset& data, const std::filesystem::path& path);

struct ReplicateFailure {
  int replicate = 0;
  std::string message;
};

// Per-replicate outcome of simulate mode, one entry per method.
struct SimulationReplicate {
  std::vector<Matrix> estimates;  // per method
  std::vector<double> het_coclustering;   // BHARP, per arm; NaN if no heterogeneous pair
  std::vector<double> misclassification;  // BHARP, per arm
};

struct SimulationOutput {
  std::vector<Method> methods;
  std::vector<std::optional<SimulationReplicate>> replicates;  // empty slot = failed
  std::vector<ReplicateFailure> failures;
  std::vector<EstimationMetrics> metrics;  // per method
  std::vector<double> mean_het_coclustering;   // per arm
  std::vector<double> mean_misclassification;  // per arm
};

struct TrialOutput {
  std::vector<Method> methods;
  std::vector<std::vector<std::optional<TrialResult>>> results;  // [method][replicate]
  std::vector<ReplicateFailure> failures;
  std::vector<OperatingCharacteristics> characteristics;  // per method
};

SimulationOutput run_simulation(const RunConfig& cfg, Exec exec = Exec::kParallel);
TrialOutput run_trials(const RunConfig& cfg, Exec exec = Exec::kParallel);

// Replicates that may fail before the whole run is refused.
int failure_allowance(int n_replicates);

// File writers. Every float is printed with 17 significant digits.
std::string format_double(double v);
std::string dump_json(const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

void write_draws_csv(const ChainDraws& draws, const std::filesystem::path& path);
void write_theta_draws_csv(const ThetaSamples& theta, const ChainConfig& chain,
                           const std::filesystem::path& path);
// Reads a draws CSV back. q and z are optional (empty for theta-only fits).
ChainDraws read_draws_csv(const std::filesystem::path& path);

nlohmann::ordered_json summary_to_json(const PosteriorSummary& s);
PosteriorSummary summary_from_json(const nlohmann::json& j);
void write_edges_csv(const PosteriorSummary& s, const std::filesystem::path& path);

// Runs one CLI mode end to end and writes every output file plus the
// manifest into cfg.out_dir.
void run_mode(const RunConfig& cfg, Exec exec = Exec::kParallel);

}  // namespace bharp

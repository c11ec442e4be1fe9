#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "bharp/error.hpp"
#include "bharp/harness.hpp"
#include "doctest.h"

using namespace bharp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bharp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const std::string& text) {
  try {
    RunConfig c = parse_config(text);
    c.finalize();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

RunConfig small_simulation(const fs::path& out) {
  RunConfig c = parse_config(R"({
    "mode": "simulate", "scenario": "S3", "methods": ["BHARP", "IND", "BHM", "BLAST"],
    "replicates": 3, "seed": 11,
    "chain": {"n_chains": 2, "n_iter": 300, "n_burnin": 100}
  })");
  c.out_dir = out;
  c.finalize();
  return c;
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
  RunConfig c = parse_config("{}");
  c.finalize();
  CHECK(c.mode == Mode::kSimulate);
  CHECK(c.chain.n_iter == 2000);
  CHECK(c.move.p_split == 0.6);
  CHECK(c.hypers.a_within == 70.0);
  CHECK(c.resolved_scenario.name == "S1");
}

TEST_CASE("every section is read") {
  RunConfig c = parse_config(R"({
    "mode": "trial", "methods": ["IND", "bhm"], "scenario": "partner-step-t2d",
    "replicates": 7, "seed": 99, "workers": 2, "out": "elsewhere",
    "hyperparameters": {"a_cell": 3, "b_cell": 2, "c": [0.1, 0.2, 0.3], "p": [1, 1, 1], "alpha": 1.5,
                        "a_between": 5, "b_between": 6},
    "chain": {"n_chains": 3, "n_iter": 500, "n_burnin": 100, "thin": 2},
    "moves": {"p_split": 0.3, "beta_u1": [2, 3], "beta_u2": [1, 1], "beta_u3": [4, 5]},
    "design": {"analysis_totals": [100, 200], "x_e": 0.2, "x_f": 0.05, "prob_e": [0.95, 0.9],
               "prob_f": [0.8, 0.85], "accrual_policy": "stop-on-conclusion"}
  })");
  c.finalize();
  CHECK(c.mode == Mode::kTrial);
  CHECK(c.methods == std::vector<Method>{Method::kInd, Method::kBhm});
  CHECK(c.n_replicates == 7);
  CHECK(c.master_seed == 99);
  CHECK(c.workers == 2);
  CHECK(c.out_dir == "elsewhere");
  CHECK(c.hypers.c_of(2) == 0.3);
  CHECK(c.hypers.alpha == 1.5);
  CHECK(c.chain.thin == 2);
  CHECK(c.move.p_split == 0.3);
  CHECK(c.move.u1.b == 3.0);
  CHECK(c.move.u3.a == 4.0);
  CHECK(c.design.analysis_totals == std::vector<int>{100, 200});
  CHECK(c.design.policy == AccrualPolicy::kStopOnConclusion);
  // the partner scenario's within-component defaults apply when not given
  CHECK(c.hypers.a_within == 30.0);
  CHECK(c.hypers.b_within == 0.31);
}

TEST_CASE("explicit within-component hyperparameters win over scenario defaults") {
  RunConfig c = parse_config(
      R"({"scenario": "partner-step-t2d", "mode": "trial", "hyperparameters": {"a_within": 50}})");
  c.finalize();
  CHECK(c.hypers.a_within == 50.0);
}

TEST_CASE("unknown keys and type errors are reported together") {
  const std::string e = error_of(R"({"chian": {}, "chain": {"n_iter": "many", "burn": 3}, "seed": -1.5})");
  CHECK(e.find("chian") != std::string::npos);
  CHECK(e.find("chain.burn") != std::string::npos);
  CHECK(e.find("chain.n_iter") != std::string::npos);
  CHECK(e.find("seed") != std::string::npos);
}

TEST_CASE("syntax errors name line and column") {
  const std::string e = error_of("{\n  \"seed\": ,\n}");
  CHECK(e.find("line 2") != std::string::npos);
  CHECK(e.find("column") != std::string::npos);
}

TEST_CASE("semantic validation lists every offending field") {
  const std::string e = error_of(
      R"({"replicates": 0, "moves": {"p_split": 1.5}, "chain": {"n_burnin": 5000}, "methods": []})");
  CHECK(e.find("replicates") != std::string::npos);
  CHECK(e.find("p_split") != std::string::npos);
  CHECK(e.find("n_burnin") != std::string::npos);
  CHECK(e.find("methods") != std::string::npos);
  CHECK(error_of(R"({"mode": "trial", "scenario": "partner-step-t2d", "methods": ["BLAST"]})")
            .find("BLAST") != std::string::npos);
  CHECK(error_of(R"({"mode": "simulate", "scenario": "partner-step-t2d"})") != "");
  CHECK(error_of(R"({"mode": "summarize"})").find("draws") != std::string::npos);
  CHECK(error_of(R"({"scenario": "S42"})") != "");
}

TEST_CASE("scenario files") {
  const fs::path dir = scratch("scenario");
  write_text(dir / "two.json", R"({"name": "two", "true_theta": [[0.0, 0.5]],
      "fixed_cell_sizes": [[4, 6]]})");
  const TrialScenario s = load_scenario_file(dir / "two.json");
  CHECK(s.n_arms == 1);
  CHECK(s.n_subgroups == 2);
  CHECK(s.prevalence == std::vector<double>{0.5, 0.5});
  CHECK(*s.fixed_cell_sizes == std::vector<int>{4, 6});
  CHECK(resolve_scenario((dir / "two.json").string()).name == "two");
  write_text(dir / "bad.json", R"({"name": "bad", "true_theta": [[0.0, 0.5], [1.0]]})");
  CHECK_THROWS_AS(load_scenario_file(dir / "bad.json"), Error);
  write_text(dir / "extra.json", R"({"name": "x", "true_theta": [[0.0]], "colour": 1})");
  CHECK_THROWS_WITH_AS(load_scenario_file(dir / "extra.json"), doctest::Contains("colour"), Error);
}

TEST_CASE("data CSV round trip and malformed input") {
  const fs::path dir = scratch("data");
  Dataset d(2, 3);
  d.add(0, 0, 0.1);
  d.add(1, 2, -1.0 / 3.0);
  d.add(1, 2, 1e-300);
  write_data_csv(d, dir / "d.csv");
  const Dataset back = read_data_csv(dir / "d.csv");
  CHECK(back.n_arms() == 2);
  CHECK(back.n_subgroups() == 3);
  CHECK(back.cell(1, 2).outcomes == d.cell(1, 2).outcomes);
  CHECK(back.cell(0, 0).outcomes == d.cell(0, 0).outcomes);

  write_text(dir / "bad.csv", "arm,subgroup,outcome\n1,0,0.5\n");
  CHECK_THROWS_AS(read_data_csv(dir / "bad.csv"), Error);
  write_text(dir / "nan.csv", "arm,subgroup,outcome\n1,1,abc\n");
  CHECK_THROWS_AS(read_data_csv(dir / "nan.csv"), Error);
  write_text(dir / "header.csv", "a,b,c\n1,1,0.5\n");
  CHECK_THROWS_AS(read_data_csv(dir / "header.csv"), Error);
  CHECK_THROWS_AS(read_data_csv(dir / "missing.csv"), Error);
}

TEST_CASE("number formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "NA");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "Inf");
  nlohmann::ordered_json j;
  j["a"] = std::numeric_limits<double>::quiet_NaN();
  j["b"] = 0.1;
  const std::string s = dump_json(j);
  CHECK(s.find("null") != std::string::npos);
  CHECK(s.find("0.10000000000000001") != std::string::npos);
  CHECK(failure_allowance(100) == 1);
  CHECK(failure_allowance(50) == 0);
}

TEST_CASE("draws round trip reproduces the posterior summary") {
  const fs::path dir = scratch("draws");
  Dataset d(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k)
      for (int r = 0; r < 5; ++r) d.add(i, k, 0.3 * k - 0.2 * r + i);
  ChainConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 200;
  cfg.n_burnin = 50;
  cfg.thin = 3;
  const ChainDraws draws = run_chain(d, Hyperparameters{}, cfg, MoveConfig{});
  write_draws_csv(draws, dir / "draws.csv");
  const ChainDraws back = read_draws_csv(dir / "draws.csv");
  CHECK(back.draws.size() == draws.draws.size());
  CHECK(back.draws[7].arms[1].z == draws.draws[7].arms[1].z);
  CHECK(back.draws[7].iteration == draws.draws[7].iteration);
  const std::string a = dump_json(summary_to_json(summarize_posterior(draws)));
  const std::string b = dump_json(summary_to_json(summarize_posterior(back)));
  CHECK(a == b);

  const PosteriorSummary s = summary_from_json(nlohmann::json::parse(a));
  CHECK(dump_json(summary_to_json(s)) == a);

  write_text(dir / "broken.csv", "chain,iteration\n1,2\n");
  CHECK_THROWS_AS(read_draws_csv(dir / "broken.csv"), Error);
}

TEST_CASE("fit mode writes every file and summarize reproduces it") {
  const fs::path dir = scratch("fit");
  RunConfig c = parse_config(R"({"mode": "fit", "scenario": "S6", "methods": ["BHARP", "IND"],
                                 "chain": {"n_chains": 2, "n_iter": 300, "n_burnin": 100}})");
  c.out_dir = dir / "fit";
  c.finalize();
  run_mode(c);
  for (const char* f : {"manifest.json", "data.csv", "draws_bharp.csv", "summary_bharp.json",
                        "coclustering_edges_bharp.csv", "draws_ind.csv", "summary_ind.json"})
    CHECK_MESSAGE(fs::exists(c.out_dir / f), f);

  RunConfig s;
  s.mode = Mode::kSummarize;
  s.draws_path = c.out_dir / "draws_bharp.csv";
  s.out_dir = dir / "summ";
  s.finalize();
  run_mode(s);
  auto fitted = nlohmann::json::parse(slurp(c.out_dir / "summary_bharp.json"));
  const auto recomputed = nlohmann::json::parse(slurp(s.out_dir / "summary.json"));
  for (const auto& [k, v] : recomputed.items()) CHECK_MESSAGE(fitted[k] == v, k);
  CHECK(slurp(c.out_dir / "coclustering_edges_bharp.csv") ==
        slurp(s.out_dir / "coclustering_edges.csv"));

  // fitting the written data again gives the same draws
  RunConfig again = c;
  again.data_path = c.out_dir / "data.csv";
  again.out_dir = dir / "again";
  again.finalize();
  run_mode(again);
  CHECK(slurp(again.out_dir / "draws_bharp.csv") == slurp(c.out_dir / "draws_bharp.csv"));
}

TEST_CASE("simulate outputs are byte-identical across runs and worker counts") {
  const fs::path dir = scratch("determinism");
  RunConfig a = small_simulation(dir / "a");
  RunConfig b = small_simulation(dir / "b");
  set_worker_count(1);
  run_mode(a, Exec::kSerial);
  set_worker_count(4);
  run_mode(b, Exec::kParallel);
  set_worker_count(0);
  for (const char* f : {"metrics.csv", "estimates.csv", "partition.csv", "aggregate.json",
                        "failures.csv", "manifest.json"})
    CHECK_MESSAGE(slurp(a.out_dir / f) == slurp(b.out_dir / f), f);
  CHECK_FALSE(slurp(a.out_dir / "estimates.csv").empty());
}

TEST_CASE("trial mode outputs") {
  const fs::path dir = scratch("trial");
  RunConfig c = parse_config(R"({"mode": "trial", "scenario": "partner-step-t2d",
      "methods": ["IND", "BHM"], "replicates": 2,
      "chain": {"n_chains": 2, "n_iter": 300, "n_burnin": 100}})");
  c.out_dir = dir / "t";
  c.finalize();
  run_mode(c);
  const std::string oc = slurp(c.out_dir / "operating_characteristics.csv");
  CHECK(oc.rfind("method,arm,false_negative_rate,expected_sample_size", 0) == 0);
  CHECK(oc.find("BHM,3,") != std::string::npos);
  CHECK(fs::exists(c.out_dir / "trials.csv"));
  CHECK(fs::exists(c.out_dir / "analyses.csv"));

  const TrialOutput x = run_trials(c, Exec::kSerial);
  const TrialOutput y = run_trials(c, Exec::kParallel);
  CHECK(x.characteristics[1].global_fpr == y.characteristics[1].global_fpr);
  CHECK(x.characteristics[1].expected_arm_size == y.characteristics[1].expected_arm_size);
  CHECK(x.characteristics[0].cell_rmse == y.characteristics[0].cell_rmse);
}

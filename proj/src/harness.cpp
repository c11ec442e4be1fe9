#include "bharp/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "bharp/error.hpp"

namespace bharp {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fit_seed(std::uint64_t master, int replicate, Method m) {
  return derive_seed(master, static_cast<std::uint64_t>(replicate),
                     1 + static_cast<std::uint64_t>(m));
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Collects every schema problem before reporting.
class SchemaReader {
 public:
  std::vector<std::string> issues;

  void check_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) issues.push_back(qualify(path, key) + ": unknown key");
    }
  }

  bool object(const json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) return false;
    if (!obj.at(key).is_object()) {
      issues.push_back(qualify(path, key) + ": expected an object");
      return false;
    }
    return true;
  }

  template <class T>
  bool get(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return false;
    const json& v = obj.at(key);
    const std::string where = qualify(path, key);
    if (!convert(v, out)) {
      issues.push_back(where + ": expected " + type_name(out));
      return false;
    }
    return true;
  }

 private:
  static std::string qualify(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  static bool convert(const json& v, double& out) {
    if (!v.is_number()) return false;
    out = v.get<double>();
    return true;
  }
  static bool convert(const json& v, int& out) {
    if (!v.is_number_integer()) return false;
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) return false;
    out = static_cast<int>(x);
    return true;
  }
  static bool convert(const json& v, std::uint64_t& out) {
    if (!v.is_number_unsigned()) return false;
    out = v.get<std::uint64_t>();
    return true;
  }
  static bool convert(const json& v, std::string& out) {
    if (!v.is_string()) return false;
    out = v.get<std::string>();
    return true;
  }
  template <class E>
  static bool convert(const json& v, std::vector<E>& out) {
    if (!v.is_array()) return false;
    std::vector<E> tmp(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!convert(v[i], tmp[i])) return false;
    out = std::move(tmp);
    return true;
  }
  static bool convert(const json& v, BetaShape& out) {
    std::vector<double> ab;
    if (!convert(v, ab) || ab.size() != 2) return false;
    out = {ab[0], ab[1]};
    return true;
  }

  static std::string type_name(double) { return "a number"; }
  static std::string type_name(int) { return "an integer"; }
  static std::string type_name(std::uint64_t) { return "a non-negative integer"; }
  static std::string type_name(const std::string&) { return "a string"; }
  static std::string type_name(const BetaShape&) { return "a pair [a, b]"; }
  template <class E>
  static std::string type_name(const std::vector<E>&) { return "an array of " + type_name(E{}); }
};

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string detail = e.what();
    const auto cut = detail.find(": ", detail.find("column"));
    if (cut != std::string::npos) detail = detail.substr(cut + 2);
    throw Error(ErrorKind::kConfig, origin,
                "parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                    ": " + detail);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw Error(ErrorKind::kDimension, "matrix", "expected a non-empty array of rows");
  Matrix m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != m.cols()) throw Error(ErrorKind::kDimension, "matrix", "ragged rows");
    for (std::size_t c = 0; c < m.cols(); ++c)
      m(r, c) = j[r][c].is_null() ? kNaN : j[r][c].get<double>();
  }
  return m;
}

const char* status_name(CellStatus s) {
  switch (s) {
    case CellStatus::kActive: return "active";
    case CellStatus::kFutile: return "futile";
    case CellStatus::kEfficacious: return "efficacious";
  }
  return "?";
}

// Posterior summary for fits without a partition layer.
PosteriorSummary summarize_theta(const ThetaSamples& s, Exec exec) {
  PosteriorSummary out;
  out.theta_median = point_estimates(s, exec);
  std::tie(out.theta_lower, out.theta_upper) = credible_intervals(s);
  if (s.n_chains >= 2 && s.draws_per_chain >= 4) {
    out.diagnostics = diagnostics(s);
    for (std::size_t c = 0; c < out.diagnostics.size(); ++c)
      if (out.diagnostics[c].degenerate)
        out.warnings.push_back("theta cell " + std::to_string(c) +
                               " is constant; R-hat reported as 1");
  } else {
    out.warnings.emplace_back("diagnostics skipped: need >= 2 chains with >= 4 draws");
  }
  return out;
}

double mean_heterogeneous(const Matrix& co, const std::vector<int>& truth) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < truth.size(); ++j)
    for (std::size_t k = j + 1; k < truth.size(); ++k)
      if (truth[j] != truth[k]) {
        sum += co(j, k);
        ++n;
      }
  return n ? sum / n : kNaN;
}

void check_failures(const std::vector<ReplicateFailure>& failures, int n) {
  if (static_cast<int>(failures.size()) <= failure_allowance(n)) return;
  throw Error(ErrorKind::kNumerical, "run_replicates",
              std::to_string(failures.size()) + " of " + std::to_string(n) +
                  " replicates failed; first (replicate " +
                  std::to_string(failures.front().replicate + 1) +
                  "): " + failures.front().message);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kFit: return "fit";
    case Mode::kSimulate: return "simulate";
    case Mode::kTrial: return "trial";
    case Mode::kSummarize: return "summarize";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kFit, Mode::kSimulate, Mode::kTrial, Mode::kSummarize})
    if (mode_name(m) == name) return m;
  throw Error(ErrorKind::kConfig, "mode", "unknown mode '" + name + "'");
}

TrialScenario load_scenario_file(const fs::path& path) {
  const json j = parse_json_text(read_file(path), path.string());
  if (!j.is_object()) throw Error(ErrorKind::kConfig, path.string(), "scenario must be an object");
  SchemaReader rd;
  rd.check_keys(j, "", {"name", "true_theta", "outcome_sd", "prevalence", "fixed_cell_sizes"});
  TrialScenario s;
  s.name = path.stem().string();
  rd.get(j, "name", "", s.name);
  std::vector<std::vector<double>> theta;
  if (!rd.get(j, "true_theta", "", theta) && !j.contains("true_theta"))
    rd.issues.emplace_back("true_theta: required");
  rd.get(j, "outcome_sd", "", s.outcome_sd);
  std::vector<std::vector<int>> sizes;
  const bool has_sizes = rd.get(j, "fixed_cell_sizes", "", sizes);
  const bool has_prev = rd.get(j, "prevalence", "", s.prevalence);
  if (!rd.issues.empty())
    throw Error(ErrorKind::kConfig, path.string(), join(rd.issues, "; "));

  if (theta.empty() || theta[0].empty())
    throw Error(ErrorKind::kDimension, "true_theta", "must be a non-empty I x K array");
  s.n_arms = static_cast<int>(theta.size());
  s.n_subgroups = static_cast<int>(theta[0].size());
  s.true_theta = Matrix(theta.size(), theta[0].size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i].size() != theta[0].size())
      throw Error(ErrorKind::kDimension, "true_theta", "ragged rows");
    for (std::size_t k = 0; k < theta[i].size(); ++k) s.true_theta(i, k) = theta[i][k];
  }
  if (!has_prev) s.prevalence.assign(idx(s.n_subgroups), 1.0 / s.n_subgroups);
  if (has_sizes) {
    std::vector<int> flat;
    for (const auto& row : sizes) {
      if (row.size() != idx(s.n_subgroups))
        throw Error(ErrorKind::kDimension, "fixed_cell_sizes", "must be I x K");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    s.fixed_cell_sizes = flat;
  }
  s.validate();
  return s;
}

TrialScenario resolve_scenario(const std::string& ref) {
  for (const auto& name : builtin_scenario_names())
    if (name == ref) return builtin_scenario(ref);
  if (!fs::exists(ref))
    throw Error(ErrorKind::kConfig, "scenario",
                "'" + ref + "' is neither a built-in scenario nor an existing file");
  return load_scenario_file(ref);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return cfg;
  const json j = parse_json_text(text, origin);
  if (!j.is_object()) throw Error(ErrorKind::kConfig, origin, "top level must be an object");

  SchemaReader rd;
  rd.check_keys(j, "", {"mode", "methods", "scenario", "replicates", "seed", "workers", "out",
                        "data", "draws", "hyperparameters", "chain", "moves", "design"});

  std::string s;
  if (rd.get(j, "mode", "", s)) {
    try {
      cfg.mode = parse_mode(s);
    } catch (const Error&) {
      rd.issues.push_back("mode: unknown mode '" + s + "'");
    }
  }
  std::vector<std::string> methods;
  if (rd.get(j, "methods", "", methods)) {
    cfg.methods.clear();
    for (const auto& m : methods) {
      try {
        cfg.methods.push_back(parse_method(m));
      } catch (const Error&) {
        rd.issues.push_back("methods: unknown method '" + m + "'");
      }
    }
  }
  rd.get(j, "scenario", "", cfg.scenario);
  rd.get(j, "replicates", "", cfg.n_replicates);
  rd.get(j, "seed", "", cfg.master_seed);
  rd.get(j, "workers", "", cfg.workers);
  if (rd.get(j, "out", "", s)) cfg.out_dir = s;
  if (rd.get(j, "data", "", s)) cfg.data_path = s;
  if (rd.get(j, "draws", "", s)) cfg.draws_path = s;

  if (rd.object(j, "hyperparameters", "")) {
    const json& h = j.at("hyperparameters");
    const std::string p = "hyperparameters";
    rd.check_keys(h, p, {"a_cell", "b_cell", "c", "p", "alpha", "a_within", "b_within",
                         "a_between", "b_between"});
    auto& hp = cfg.hypers;
    rd.get(h, "a_cell", p, hp.a_cell);
    rd.get(h, "b_cell", p, hp.b_cell);
    rd.get(h, "c", p, hp.c);
    rd.get(h, "p", p, hp.p);
    rd.get(h, "alpha", p, hp.alpha);
    const bool aw = rd.get(h, "a_within", p, hp.a_within);
    const bool bw = rd.get(h, "b_within", p, hp.b_within);
    cfg.within_set = aw || bw;
    rd.get(h, "a_between", p, hp.a_between);
    rd.get(h, "b_between", p, hp.b_between);
  }
  if (rd.object(j, "chain", "")) {
    const json& c = j.at("chain");
    rd.check_keys(c, "chain", {"n_chains", "n_iter", "n_burnin", "thin"});
    rd.get(c, "n_chains", "chain", cfg.chain.n_chains);
    rd.get(c, "n_iter", "chain", cfg.chain.n_iter);
    rd.get(c, "n_burnin", "chain", cfg.chain.n_burnin);
    rd.get(c, "thin", "chain", cfg.chain.thin);
  }
  if (rd.object(j, "moves", "")) {
    const json& m = j.at("moves");
    rd.check_keys(m, "moves", {"p_split", "beta_u1", "beta_u2", "beta_u3"});
    rd.get(m, "p_split", "moves", cfg.move.p_split);
    rd.get(m, "beta_u1", "moves", cfg.move.u1);
    rd.get(m, "beta_u2", "moves", cfg.move.u2);
    rd.get(m, "beta_u3", "moves", cfg.move.u3);
  }
  if (rd.object(j, "design", "")) {
    const json& d = j.at("design");
    rd.check_keys(d, "design",
                  {"analysis_totals", "x_e", "x_f", "prob_e", "prob_f", "accrual_policy"});
    rd.get(d, "analysis_totals", "design", cfg.design.analysis_totals);
    rd.get(d, "x_e", "design", cfg.design.x_e);
    rd.get(d, "x_f", "design", cfg.design.x_f);
    rd.get(d, "prob_e", "design", cfg.design.prob_e);
    rd.get(d, "prob_f", "design", cfg.design.prob_f);
    if (rd.get(d, "accrual_policy", "design", s)) {
      try {
        cfg.design.policy = parse_policy(s);
      } catch (const Error&) {
        rd.issues.push_back("design.accrual_policy: unknown policy '" + s + "'");
      }
    }
  }
  if (!rd.issues.empty()) throw Error(ErrorKind::kConfig, origin, join(rd.issues, "; "));
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  return parse_config(read_file(path), path.string());
}

void RunConfig::finalize() {
  std::vector<std::string> issues;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      issues.emplace_back(e.what());
    }
  };

  collect([&] { resolved_scenario = resolve_scenario(scenario); });
  if (!within_set && resolved_scenario.name == "partner-step-t2d") {
    hypers.a_within = 30.0;
    hypers.b_within = 0.31;
  }
  int n_arms = resolved_scenario.n_arms > 0 ? resolved_scenario.n_arms : 1;
  if (mode == Mode::kFit && !data_path.empty()) {
    if (!fs::exists(data_path)) {
      issues.push_back("data: file '" + data_path.string() + "' does not exist");
    } else {
      collect([&] { n_arms = read_data_csv(data_path).n_arms(); });
    }
  }
  collect([&] { hypers.validate(n_arms); });
  collect([&] { chain.validate(); });
  collect([&] { move.validate(); });
  collect([&] { design.validate(); });
  if (n_replicates < 1) issues.emplace_back("replicates: must be >= 1");
  if (workers < 0) issues.emplace_back("workers: must be >= 0");
  if (methods.empty()) issues.emplace_back("methods: at least one method is required");
  if (mode == Mode::kTrial)
    for (Method m : methods)
      if (m == Method::kBlast)
        issues.emplace_back("methods: BLAST is single-arm only and cannot drive a trial");
  if ((mode == Mode::kSimulate || (mode == Mode::kFit && data_path.empty())) &&
      resolved_scenario.n_arms > 0 && !resolved_scenario.fixed_cell_sizes)
    issues.push_back("scenario: '" + scenario + "' has no fixed cell sizes");
  if (mode == Mode::kSummarize) {
    if (draws_path.empty())
      issues.emplace_back("draws: required in summarize mode");
    else if (!fs::exists(draws_path))
      issues.push_back("draws: file '" + draws_path.string() + "' does not exist");
  }
  if (!issues.empty()) throw Error(ErrorKind::kConfig, "config", join(issues, "; "));
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["version"] = kVersion;
  j["mode"] = mode_name(cfg.mode);
  ordered_json methods = ordered_json::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  j["methods"] = methods;

  const auto& sc = cfg.resolved_scenario;
  ordered_json scen;
  scen["reference"] = cfg.scenario;
  scen["name"] = sc.name;
  scen["true_theta"] = matrix_json(sc.true_theta);
  scen["outcome_sd"] = sc.outcome_sd;
  scen["prevalence"] = sc.prevalence;
  if (sc.fixed_cell_sizes) {
    ordered_json rows = ordered_json::array();
    for (int i = 0; i < sc.n_arms; ++i) {
      ordered_json row = ordered_json::array();
      for (int k = 0; k < sc.n_subgroups; ++k)
        row.push_back((*sc.fixed_cell_sizes)[idx(i * sc.n_subgroups + k)]);
      rows.push_back(row);
    }
    scen["fixed_cell_sizes"] = rows;
  }
  j["scenario"] = scen;
  j["replicates"] = cfg.n_replicates;
  j["seed"] = cfg.master_seed;
  if (!cfg.data_path.empty()) j["data"] = cfg.data_path.string();
  if (!cfg.draws_path.empty()) j["draws"] = cfg.draws_path.string();

  const auto& h = cfg.hypers;
  const int n_arms = std::max(1, std::max(sc.n_arms, static_cast<int>(h.c.size())));
  ordered_json hj;
  hj["a_cell"] = h.a_cell;
  hj["b_cell"] = h.b_cell;
  std::vector<double> c, p;
  for (int i = 0; i < n_arms; ++i) {
    c.push_back(h.c_of(i));
    p.push_back(h.p_of(i));
  }
  hj["c"] = c;
  hj["p"] = p;
  hj["alpha"] = h.alpha;
  hj["a_within"] = h.a_within;
  hj["b_within"] = h.b_within;
  hj["a_between"] = h.a_between;
  hj["b_between"] = h.b_between;
  j["hyperparameters"] = hj;

  j["chain"] = {{"n_chains", cfg.chain.n_chains},
                {"n_iter", cfg.chain.n_iter},
                {"n_burnin", cfg.chain.n_burnin},
                {"thin", cfg.chain.thin}};
  auto pair = [](const BetaShape& b) { return ordered_json::array({b.a, b.b}); };
  j["moves"] = {{"p_split", cfg.move.p_split},
                {"beta_u1", pair(cfg.move.u1)},
                {"beta_u2", pair(cfg.move.u2)},
                {"beta_u3", pair(cfg.move.u3)}};
  j["design"] = {{"analysis_totals", cfg.design.analysis_totals},
                 {"x_e", cfg.design.x_e},
                 {"x_f", cfg.design.x_f},
                 {"prob_e", cfg.design.prob_e},
                 {"prob_f", cfg.design.prob_f},
                 {"accrual_policy", policy_name(cfg.design.policy)}};
  return j;
}

// ---------------------------------------------------------------------------
// Data files

Dataset read_data_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, path.string(), "cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line.rfind("arm,subgroup,outcome", 0) != 0)
    throw Error(ErrorKind::kIo, path.string(), "expected header 'arm,subgroup,outcome'");
  std::vector<std::tuple<int, int, double>> rows;
  int n_arms = 0, n_sub = 0;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty() || line == "\r") continue;
    int a = 0, k = 0;
    double y = 0.0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf%c", &a, &k, &y, &tail) < 3 || a < 1 || k < 1)
      throw Error(ErrorKind::kIo, path.string(),
                  "line " + std::to_string(lineno) + ": expected arm,subgroup,outcome");
    rows.emplace_back(a - 1, k - 1, y);
    n_arms = std::max(n_arms, a);
    n_sub = std::max(n_sub, k);
  }
  if (rows.empty()) throw Error(ErrorKind::kIo, path.string(), "no observations");
  Dataset d(n_arms, n_sub);
  for (const auto& [a, k, y] : rows) d.add(a, k, y);
  d.validate();
  return d;
}

void write_data_csv(const Dataset& data, const fs::path& path) {
  std::string out = "arm,subgroup,outcome\n";
  for (const auto& c : data.cells())
    for (double y : c.outcomes)
      out += std::to_string(c.arm + 1) + "," + std::to_string(c.subgroup + 1) + "," +
             format_double(y) + "\n";
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Replicates

int failure_allowance(int n_replicates) { return n_replicates / 100; }

SimulationOutput run_simulation(const RunConfig& cfg, Exec exec) {
  const TrialScenario& sc = cfg.resolved_scenario;
  const int n = cfg.n_replicates;
  SimulationOutput out;
  out.methods = cfg.methods;
  out.replicates.resize(idx(n));
  std::vector<std::string> errors(idx(n));

  std::vector<std::vector<int>> truth;
  for (int i = 0; i < sc.n_arms; ++i) truth.push_back(true_partition(sc, i));

  for_each_index(n, exec, [&](int r) {
    try {
      const DataSummary data =
          summarize(generate_fixed_dataset(sc, derive_seed(cfg.master_seed, idx(r), kDataStream)));
      SimulationReplicate rep;
      for (Method m : cfg.methods) {
        ChainConfig chain = cfg.chain;
        chain.seed = fit_seed(cfg.master_seed, r, m);
        const ComparatorDraws fit = fit_method(m, data, cfg.hypers, chain, cfg.move);
        rep.estimates.push_back(point_estimates(fit.theta, exec));
        if (m == Method::kBharp && fit.full) {
          for (int i = 0; i < sc.n_arms; ++i) {
            const Matrix co = coclustering(*fit.full, i, exec);
            rep.het_coclustering.push_back(mean_heterogeneous(co, truth[idx(i)]));
            rep.misclassification.push_back(
                misclassification_rate(average_linkage(co), truth[idx(i)]));
          }
        }
      }
      out.replicates[idx(r)] = std::move(rep);
    } catch (const std::exception& e) {
      errors[idx(r)] = e.what();
    }
  });

  for (int r = 0; r < n; ++r)
    if (!out.replicates[idx(r)]) out.failures.push_back({r, errors[idx(r)]});
  check_failures(out.failures, n);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    std::vector<Matrix> est;
    for (const auto& rep : out.replicates)
      if (rep) est.push_back(rep->estimates[m]);
    out.metrics.push_back(estimation_metrics(est, sc.true_theta));
  }
  out.mean_het_coclustering.assign(idx(sc.n_arms), kNaN);
  out.mean_misclassification.assign(idx(sc.n_arms), kNaN);
  for (int i = 0; i < sc.n_arms; ++i) {
    double hs = 0.0, ms = 0.0;
    int hn = 0, mn = 0;
    for (const auto& rep : out.replicates) {
      if (!rep || rep->misclassification.empty()) continue;
      if (!std::isnan(rep->het_coclustering[idx(i)])) {
        hs += rep->het_coclustering[idx(i)];
        ++hn;
      }
      ms += rep->misclassification[idx(i)];
      ++mn;
    }
    if (hn) out.mean_het_coclustering[idx(i)] = hs / hn;
    if (mn) out.mean_misclassification[idx(i)] = ms / mn;
  }
  return out;
}

TrialOutput run_trials(const RunConfig& cfg, Exec exec) {
  const int n = cfg.n_replicates;
  const int n_methods = static_cast<int>(cfg.methods.size());
  TrialOutput out;
  out.methods = cfg.methods;
  out.results.assign(idx(n_methods), std::vector<std::optional<TrialResult>>(idx(n)));
  std::vector<std::string> errors(idx(n * n_methods));

  // Every method sees the same accrual stream for a given replicate.
  for_each_index(n * n_methods, exec, [&](int job) {
    const int m = job / n, r = job % n;
    try {
      out.results[idx(m)][idx(r)] =
          run_trial(cfg.resolved_scenario, cfg.design, cfg.methods[idx(m)], cfg.hypers, cfg.chain,
                    cfg.move, derive_seed(cfg.master_seed, idx(r)));
    } catch (const std::exception& e) {
      errors[idx(job)] = method_name(cfg.methods[idx(m)]) + ": " + e.what();
    }
  });

  for (int r = 0; r < n; ++r)
    for (int m = 0; m < n_methods; ++m)
      if (!out.results[idx(m)][idx(r)]) {
        out.failures.push_back({r, errors[idx(m * n + r)]});
        break;
      }
  check_failures(out.failures, n);

  for (int m = 0; m < n_methods; ++m) {
    std::vector<TrialResult> ok;
    for (const auto& res : out.results[idx(m)])
      if (res) ok.push_back(*res);
    out.characteristics.push_back(operating_characteristics(ok, cfg.resolved_scenario));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writers

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dump_value(const ordered_json& j, int indent, std::string& out) {
  const std::string pad(idx(indent + 2), ' ');
  const std::string close(idx(indent), ' ');
  switch (j.type()) {
    case ordered_json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      break;
    }
    case ordered_json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        break;
      }
      const bool flat = std::none_of(j.begin(), j.end(), [](const ordered_json& e) {
        return e.is_structured();
      });
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        out += first ? "" : ",";
        if (flat) {
          out += first ? "" : " ";
        } else {
          out += "\n" + pad;
        }
        dump_value(e, indent + 2, out);
        first = false;
      }
      out += flat ? "]" : "\n" + close + "]";
      break;
    }
    case ordered_json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        break;
      }
      out += "{";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        out += first ? "\n" : ",\n";
        out += pad + ordered_json(k).dump() + ": ";
        dump_value(v, indent + 2, out);
        first = false;
      }
      out += "\n" + close + "}";
      break;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::ordered_json& j) {
  std::string out;
  dump_value(j, 0, out);
  out += "\n";
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, path.string(), "cannot open for writing");
  f << text;
  if (!f) throw Error(ErrorKind::kIo, path.string(), "write failed");
}

void write_draws_csv(const ChainDraws& draws, const fs::path& path) {
  std::string out = "iteration,chain,arm,subgroup,theta,q,z\n";
  for (const auto& d : draws.draws)
    for (int i = 0; i < draws.n_arms; ++i) {
      const auto& a = d.arms[idx(i)];
      for (int k = 0; k < draws.n_subgroups; ++k) {
        out += std::to_string(d.iteration + 1) + "," + std::to_string(d.chain + 1) + "," +
               std::to_string(i + 1) + "," + std::to_string(k + 1) + "," +
               format_double(a.theta[idx(k)]) + ",";
        if (!a.z.empty())
          out += std::to_string(a.q) + "," + std::to_string(a.z[idx(k)] + 1);
        else
          out += ",";
        out += "\n";
      }
    }
  write_text(path, out);
}

void write_theta_draws_csv(const ThetaSamples& theta, const ChainConfig& chain,
                           const fs::path& path) {
  std::string out = "iteration,chain,arm,subgroup,theta,q,z\n";
  for (int c = 0; c < theta.n_chains; ++c)
    for (int t = 0; t < theta.draws_per_chain; ++t) {
      const std::size_t d = idx(c * theta.draws_per_chain + t);
      const int iteration = chain.n_burnin + (t + 1) * chain.thin;
      for (int i = 0; i < theta.n_arms; ++i)
        for (int k = 0; k < theta.n_subgroups; ++k)
          out += std::to_string(iteration) + "," + std::to_string(c + 1) + "," +
                 std::to_string(i + 1) + "," + std::to_string(k + 1) + "," +
                 format_double(theta.at(d, idx(i * theta.n_subgroups + k))) + ",,\n";
    }
  write_text(path, out);
}

ChainDraws read_draws_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, path.string(), "cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,chain,arm,subgroup,theta,q,z", 0) != 0)
    throw Error(ErrorKind::kIo, path.string(), "expected the draws header");

  struct Row {
    int arm, subgroup, q, z;
    double theta;
  };
  std::map<std::pair<int, int>, std::vector<Row>> by_draw;  // (chain, iteration)
  int n_arms = 0, n_sub = 0;
  bool partitions = true;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    auto bad = [&] {
      return Error(ErrorKind::kIo, path.string(),
                   "line " + std::to_string(lineno) + ": malformed draws row");
    };
    if (f.size() < 5 || f.size() > 7) throw bad();
    Row r{};
    int it = 0, ch = 0;
    try {
      it = std::stoi(f[0]);
      ch = std::stoi(f[1]);
      r.arm = std::stoi(f[2]) - 1;
      r.subgroup = std::stoi(f[3]) - 1;
      r.theta = std::stod(f[4]);
      const bool has_z = f.size() == 7 && !f[5].empty() && !f[6].empty();
      partitions = partitions && has_z;
      if (has_z) {
        r.q = std::stoi(f[5]);
        r.z = std::stoi(f[6]) - 1;
      }
    } catch (const std::logic_error&) {
      throw bad();
    }
    if (ch < 1 || r.arm < 0 || r.subgroup < 0) throw bad();
    n_arms = std::max(n_arms, r.arm + 1);
    n_sub = std::max(n_sub, r.subgroup + 1);
    by_draw[{ch - 1, it - 1}].push_back(r);
  }
  if (by_draw.empty()) throw Error(ErrorKind::kIo, path.string(), "no draws");

  ChainDraws out;
  out.n_arms = n_arms;
  out.n_subgroups = n_sub;
  std::map<int, int> per_chain;
  for (const auto& [key, rows] : by_draw) {
    ++per_chain[key.first];
    if (rows.size() != idx(n_arms * n_sub))
      throw Error(ErrorKind::kIo, path.string(),
                  "draw at chain " + std::to_string(key.first + 1) + " iteration " +
                      std::to_string(key.second + 1) + " is incomplete");
    Draw d;
    d.chain = key.first;
    d.iteration = key.second;
    d.varsigma = kNaN;
    d.arms.resize(idx(n_arms));
    for (auto& a : d.arms) {
      a.theta.assign(idx(n_sub), kNaN);
      if (partitions) a.z.assign(idx(n_sub), 0);
    }
    for (const auto& r : rows) {
      auto& a = d.arms[idx(r.arm)];
      a.theta[idx(r.subgroup)] = r.theta;
      if (partitions) {
        a.q = r.q;
        a.z[idx(r.subgroup)] = r.z;
      }
    }
    out.draws.push_back(std::move(d));
  }
  out.n_chains = static_cast<int>(per_chain.size());
  out.draws_per_chain = per_chain.begin()->second;
  int expect = 0;
  for (const auto& [chain, count] : per_chain) {
    if (chain != expect++ || count != out.draws_per_chain)
      throw Error(ErrorKind::kIo, path.string(), "chains must be numbered 1..C with equal lengths");
  }
  out.counters.resize(idx(out.n_chains));
  return out;
}

nlohmann::ordered_json summary_to_json(const PosteriorSummary& s) {
  ordered_json j;
  j["theta"] = {{"median", matrix_json(s.theta_median)},
                {"lower", matrix_json(s.theta_lower)},
                {"upper", matrix_json(s.theta_upper)}};
  if (!s.coclustering.empty()) {
    ordered_json co = ordered_json::array();
    for (const auto& m : s.coclustering) co.push_back(matrix_json(m));
    j["coclustering"] = co;
    j["occupied_clusters"] = s.q_posterior;
    j["components"] = s.components_posterior;
  }
  ordered_json diag = ordered_json::array();
  const std::size_t K = s.theta_median.cols();
  for (std::size_t c = 0; c < s.diagnostics.size(); ++c) {
    const auto& d = s.diagnostics[c];
    diag.push_back({{"arm", c / K + 1},
                    {"subgroup", c % K + 1},
                    {"rhat", d.rhat},
                    {"ess", d.ess},
                    {"degenerate", d.degenerate}});
  }
  j["diagnostics"] = diag;
  j["warnings"] = s.warnings;
  return j;
}

PosteriorSummary summary_from_json(const nlohmann::json& j) {
  PosteriorSummary s;
  s.theta_median = matrix_from_json(j.at("theta").at("median"));
  s.theta_lower = matrix_from_json(j.at("theta").at("lower"));
  s.theta_upper = matrix_from_json(j.at("theta").at("upper"));
  if (j.contains("coclustering")) {
    for (const auto& m : j.at("coclustering")) s.coclustering.push_back(matrix_from_json(m));
    s.q_posterior = j.at("occupied_clusters").get<std::vector<std::vector<double>>>();
    s.components_posterior = j.at("components").get<std::vector<std::vector<double>>>();
  }
  for (const auto& d : j.at("diagnostics"))
    s.diagnostics.push_back({d.at("rhat").get<double>(), d.at("ess").get<double>(),
                             d.at("degenerate").get<bool>()});
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

void write_edges_csv(const PosteriorSummary& s, const fs::path& path) {
  std::string out = "arm,subgroup_a,subgroup_b,probability\n";
  for (std::size_t i = 0; i < s.coclustering.size(); ++i) {
    const Matrix& m = s.coclustering[i];
    for (std::size_t a = 0; a < m.rows(); ++a)
      for (std::size_t b = a + 1; b < m.cols(); ++b)
        out += std::to_string(i + 1) + "," + std::to_string(a + 1) + "," + std::to_string(b + 1) +
               "," + format_double(m(a, b)) + "\n";
  }
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Modes

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

void write_failures(const std::vector<ReplicateFailure>& failures, const fs::path& path) {
  std::string out = "replicate,message\n";
  for (const auto& f : failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    out += std::to_string(f.replicate + 1) + ",\"" + msg + "\"\n";
  }
  write_text(path, out);
}

void run_fit(const RunConfig& cfg, Exec exec) {
  const Dataset data = cfg.data_path.empty()
                           ? generate_fixed_dataset(cfg.resolved_scenario,
                                                    derive_seed(cfg.master_seed, 0, kDataStream))
                           : read_data_csv(cfg.data_path);
  write_data_csv(data, cfg.out_dir / "data.csv");
  const DataSummary summary = summarize(data);
  for (Method m : cfg.methods) {
    ChainConfig chain = cfg.chain;
    chain.seed = fit_seed(cfg.master_seed, 0, m);
    const ComparatorDraws fit = fit_method(m, summary, cfg.hypers, chain, cfg.move);
    const std::string tag = lower(method_name(m));
    PosteriorSummary post;
    if (fit.full) {
      write_draws_csv(*fit.full, cfg.out_dir / ("draws_" + tag + ".csv"));
      post = summarize_posterior(*fit.full, exec);
      write_edges_csv(post, cfg.out_dir / ("coclustering_edges_" + tag + ".csv"));
    } else {
      write_theta_draws_csv(fit.theta, chain, cfg.out_dir / ("draws_" + tag + ".csv"));
      post = summarize_theta(fit.theta, exec);
    }
    ordered_json j;
    j["method"] = method_name(m);
    const ordered_json body = summary_to_json(post);
    for (const auto& [k, v] : body.items()) j[k] = v;
    if (m == Method::kBlast) {
      j["selected_q"] = fit.selected_q;
      j["dic_by_q"] = fit.dic_by_q;
    }
    if (fit.full && m == Method::kBharp) {
      MoveCounters total;
      for (const auto& c : fit.full->counters) total += c;
      j["moves"] = {{"split_proposed", total.split_proposed},
                    {"split_accepted", total.split_accepted},
                    {"merge_proposed", total.merge_proposed},
                    {"merge_accepted", total.merge_accepted},
                    {"blocked", total.blocked}};
    }
    write_text(cfg.out_dir / ("summary_" + tag + ".json"), dump_json(j));
  }
}

void run_simulate(const RunConfig& cfg, Exec exec) {
  const SimulationOutput out = run_simulation(cfg, exec);
  const auto& sc = cfg.resolved_scenario;
  write_failures(out.failures, cfg.out_dir / "failures.csv");

  std::string metrics = "scenario,method,arm,subgroup,truth,rmse,mae,variance\n";
  std::string est = "replicate,method,arm,subgroup,estimate\n";
  ordered_json agg;
  agg["scenario"] = sc.name;
  agg["replicates"] = cfg.n_replicates;
  agg["failed"] = out.failures.size();
  ordered_json per_method;
  for (std::size_t m = 0; m < out.methods.size(); ++m) {
    const auto& em = out.metrics[m];
    const std::string name = method_name(out.methods[m]);
    double mean_rmse = 0.0;
    for (int i = 0; i < sc.n_arms; ++i)
      for (int k = 0; k < sc.n_subgroups; ++k) {
        const std::size_t c = idx(i * sc.n_subgroups + k);
        metrics += sc.name + "," + name + "," + std::to_string(i + 1) + "," +
                   std::to_string(k + 1) + "," + format_double(sc.true_theta(idx(i), idx(k))) +
                   "," + format_double(em.rmse[c]) + "," + format_double(em.mae[c]) + "," +
                   format_double(em.variance[c]) + "\n";
        mean_rmse += em.rmse[c];
      }
    per_method[name] = {{"mean_rmse", mean_rmse / static_cast<double>(em.rmse.size())}};
    for (std::size_t r = 0; r < out.replicates.size(); ++r) {
      if (!out.replicates[r]) continue;
      const Matrix& e = out.replicates[r]->estimates[m];
      for (int i = 0; i < sc.n_arms; ++i)
        for (int k = 0; k < sc.n_subgroups; ++k)
          est += std::to_string(r + 1) + "," + name + "," + std::to_string(i + 1) + "," +
                 std::to_string(k + 1) + "," + format_double(e(idx(i), idx(k))) + "\n";
    }
  }
  agg["methods"] = per_method;
  write_text(cfg.out_dir / "metrics.csv", metrics);
  write_text(cfg.out_dir / "estimates.csv", est);

  if (std::find(out.methods.begin(), out.methods.end(), Method::kBharp) != out.methods.end()) {
    std::string part = "replicate,arm,heterogeneous_coclustering,misclassification\n";
    for (std::size_t r = 0; r < out.replicates.size(); ++r) {
      if (!out.replicates[r]) continue;
      const auto& rep = *out.replicates[r];
      for (std::size_t i = 0; i < rep.misclassification.size(); ++i)
        part += std::to_string(r + 1) + "," + std::to_string(i + 1) + "," +
                format_double(rep.het_coclustering[i]) + "," +
                format_double(rep.misclassification[i]) + "\n";
    }
    write_text(cfg.out_dir / "partition.csv", part);
    agg["bharp_partition"] = {{"mean_heterogeneous_coclustering", out.mean_het_coclustering},
                              {"mean_misclassification", out.mean_misclassification}};
  }
  write_text(cfg.out_dir / "aggregate.json", dump_json(agg));
}

void run_trial_mode(const RunConfig& cfg, Exec exec) {
  const TrialOutput out = run_trials(cfg, exec);
  const auto& sc = cfg.resolved_scenario;
  write_failures(out.failures, cfg.out_dir / "failures.csv");

  std::string trials = "replicate,method,arm,subgroup,status,sample_size,estimate\n";
  std::string log = "replicate,method,analysis,enrolled,arm,subgroup,p_efficacy,p_futility,status\n";
  std::string oc = "method,arm,false_negative_rate,expected_sample_size,"
                   "global_false_positive_rate,generalized_power\n";
  std::string metrics = "scenario,method,arm,subgroup,truth,rmse\n";
  ordered_json warnings;
  for (std::size_t m = 0; m < out.methods.size(); ++m) {
    const std::string name = method_name(out.methods[m]);
    for (std::size_t r = 0; r < out.results[m].size(); ++r) {
      if (!out.results[m][r]) continue;
      const TrialResult& t = *out.results[m][r];
      for (int i = 0; i < sc.n_arms; ++i)
        for (int k = 0; k < sc.n_subgroups; ++k) {
          const std::size_t c = idx(i * sc.n_subgroups + k);
          trials += std::to_string(r + 1) + "," + name + "," + std::to_string(i + 1) + "," +
                    std::to_string(k + 1) + "," + status_name(t.decisions.status[c]) + "," +
                    std::to_string(t.sample_sizes[c]) + "," +
                    format_double(t.estimates(idx(i), idx(k))) + "\n";
        }
      for (const auto& a : t.log)
        for (std::size_t c = 0; c < a.status.size(); ++c) {
          const auto& p = a.probabilities[c];
          log += std::to_string(r + 1) + "," + name + "," + std::to_string(a.analysis + 1) + "," +
                 std::to_string(a.enrolled) + "," + std::to_string(c / idx(sc.n_subgroups) + 1) +
                 "," + std::to_string(c % idx(sc.n_subgroups) + 1) + "," +
                 format_double(p.p_efficacy) + "," + format_double(p.p_futility) + "," +
                 status_name(a.status[c]) + "\n";
        }
    }
    const auto& ch = out.characteristics[m];
    for (int i = 0; i < sc.n_arms; ++i)
      oc += name + "," + std::to_string(i + 1) + "," + format_double(ch.arm_fnr[idx(i)]) + "," +
            format_double(ch.expected_arm_size[idx(i)]) + "," + format_double(ch.global_fpr) +
            "," + format_double(ch.generalized_power) + "\n";
    for (int i = 0; i < sc.n_arms; ++i)
      for (int k = 0; k < sc.n_subgroups; ++k)
        metrics += sc.name + "," + name + "," + std::to_string(i + 1) + "," +
                   std::to_string(k + 1) + "," + format_double(sc.true_theta(idx(i), idx(k))) +
                   "," + format_double(ch.cell_rmse[idx(i * sc.n_subgroups + k)]) + "\n";
    if (!ch.warnings.empty()) warnings[name] = ch.warnings;
  }
  write_text(cfg.out_dir / "trials.csv", trials);
  write_text(cfg.out_dir / "analyses.csv", log);
  write_text(cfg.out_dir / "operating_characteristics.csv", oc);
  write_text(cfg.out_dir / "metrics.csv", metrics);
  if (!warnings.empty()) write_text(cfg.out_dir / "warnings.json", dump_json(warnings));
}

void run_summarize(const RunConfig& cfg, Exec exec) {
  const ChainDraws draws = read_draws_csv(cfg.draws_path);
  const bool partitions = !draws.draws.front().arms.front().z.empty();
  const PosteriorSummary post =
      partitions ? summarize_posterior(draws, exec) : summarize_theta(theta_samples(draws), exec);
  write_text(cfg.out_dir / "summary.json", dump_json(summary_to_json(post)));
  if (partitions) write_edges_csv(post, cfg.out_dir / "coclustering_edges.csv");
}

}  // namespace

void run_mode(const RunConfig& cfg, Exec exec) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, cfg.out_dir.string(), "cannot create: " + ec.message());
  write_text(cfg.out_dir / "manifest.json", dump_json(config_to_json(cfg)));
  switch (cfg.mode) {
    case Mode::kFit: run_fit(cfg, exec); break;
    case Mode::kSimulate: run_simulate(cfg, exec); break;
    case Mode::kTrial: run_trial_mode(cfg, exec); break;
    case Mode::kSummarize: run_summarize(cfg, exec); break;
  }
}

}  // namespace bharp

#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mvh/dynamics.hpp"
#include "mvh/homogenize.hpp"
#include "mvh/model.hpp"
#include "mvh/poisson.hpp"

namespace mvh {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

// Config errors carry the first offending key; the CLI maps them to exit 2.
struct ConfigError : std::runtime_error {
  ConfigError(std::string key_, const std::string& why)
      : std::runtime_error("config key '" + key_ + "': " + why), key(std::move(key_)) {}
  std::string key;
};

struct ObservableSpec {
  std::string type = "second_moment";  // mean | second_moment | variance | quad_sin
  std::size_t component = 0;
};
double evaluate_observable(const ObservableSpec& spec, const Ensemble& ens);

struct HRule {
  std::string type = "eps2_over";  // eps2_over | fixed
  double denom = 20.0;
  double h = 0.01;
  double step_for(double eps) const;
};

struct ExperimentConfig {
  json raw;
  ModelSpec model;
  std::vector<double> eps_list;
  double eps = 0.1;  // single-run subcommands
  std::size_t N = 2000;
  double T = 1.0;
  HRule h_rule;
  ObservableSpec observable;
  int reps = 8;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "runs/out";
  double slope_lo = 0.7, slope_hi = 1.3;
  InitialLaw init_slow, init_fast;
  HomogenizeConfig homog;
  std::size_t limit_N = 4000;
  double limit_h = 0.01;
  std::size_t limit_ref_N = 16000;
  int limit_ref_reps = 8;
  double limit_ref_h = 0.005;
  int validate_probes = 1000;
  std::string fluctuation_f = "fast_coordinate";
  std::vector<double> x_probes{-1.0, 0.0, 1.0};

  static ExperimentConfig from_json(const json& j);
};

ModelSpec make_model(const json& model_cfg);
InitialLaw parse_initial_law(const json& j, const std::string& key);

struct ConvergenceReport {
  std::vector<double> eps, err, err_se;
  double ref_value = 0.0, ref_se = 0.0;
  double slope = 0.0, intercept = 0.0;
  bool has_slope = false;
  bool insufficient = false;
  bool pass = false;
  json to_json() const;
};

ConvergenceReport run_convergence(const ExperimentConfig& cfg);

struct FluctuationReport {
  std::vector<double> eps, estimate, se;
  double slope = 0.0, intercept = 0.0;
  bool has_slope = false;
  bool monotone = false;
  bool pass = false;
  json to_json() const;
};

FluctuationReport run_fluctuation_test(const ExperimentConfig& cfg);

struct ErgodicityReport {
  struct InitResult {
    std::string label;
    bool converged = false;
    double fitted_rate = 0.0;
    double fitted_prefactor = 0.0;
    double burn_in = 0.0;
  };
  std::vector<InitResult> inits;
  std::vector<double> pairwise_gaps;
  double gap_threshold = 0.0;
  std::vector<double> decoupled_rates;  // Eq.-2.6-style decay per start point
  bool uniqueness_ok = false;
  bool pass = false;
  json to_json() const;
  // diagnostics time series of the first init, for CSV export
  ErgodicityDiagnostics first_diagnostics;
};

ErgodicityReport run_ergodicity_test(const ExperimentConfig& cfg);

struct CheckResult {
  std::string name;
  std::string status;  // pass | fail | inconclusive
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  json to_json() const;
};

struct PoissonValidationReport {
  std::vector<CheckResult> checks;
  std::string status;  // pass | fail | inconclusive
  json to_json() const;
};

PoissonValidationReport run_poisson_validation(const ExperimentConfig& cfg);

int cli_main(int argc, char** argv);

}  // namespace mvh

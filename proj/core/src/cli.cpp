#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "mvh/artifact.hpp"
#include "mvh/harness.hpp"
#include "mvh/measure.hpp"
#include "mvh/stats.hpp"

namespace mvh {

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int threads_override = 0;
};

ExperimentConfig load_config(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw ConfigError(args.config_path, "config file not found");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(args.config_path, std::string("invalid JSON: ") + e.what());
  }
  if (args.seed_override >= 0) j["seed"] = static_cast<std::uint64_t>(args.seed_override);
  if (!args.out_override.empty()) j["out"] = args.out_override;
  if (args.threads_override > 0) j["threads"] = args.threads_override;
  return ExperimentConfig::from_json(j);
}

std::vector<std::vector<double>> summary_rows(const SlowFastTrajectory& traj) {
  std::vector<std::vector<double>> rows;
  for (const auto& s : traj.summaries) {
    std::vector<double> row{s.t};
    auto push_all = [&row](const std::vector<double>& v) {
      row.insert(row.end(), v.begin(), v.end());
    };
    push_all(s.slow_mean);
    push_all(s.slow_m2);
    push_all(s.fast_mean);
    push_all(s.fast_m2);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> summary_header(std::size_t d1, std::size_t d2) {
  std::vector<std::string> h{"t"};
  for (std::size_t k = 0; k < d1; ++k) h.push_back("slow_mean_" + std::to_string(k));
  for (std::size_t k = 0; k < d1; ++k) h.push_back("slow_m2_" + std::to_string(k));
  for (std::size_t k = 0; k < d2; ++k) h.push_back("fast_mean_" + std::to_string(k));
  for (std::size_t k = 0; k < d2; ++k) h.push_back("fast_m2_" + std::to_string(k));
  return h;
}

int cmd_validate(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const ValidationReport rep =
      validate_model(cfg.model, cfg.validate_probes, cfg.seed);
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["experiment"] = "validate";
  out["passed"] = rep.passed;
  out["structural_ok"] = rep.structural_ok;
  out["dissipativity_ok"] = rep.dissipativity_ok;
  out["probes"] = rep.probes;
  out["violations"] = rep.violations;
  out["worst_margin"] = rep.worst_margin;
  out["tolerance"] = rep.tolerance;
  out["message"] = rep.message;
  art.write_report(out);
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "validate");
  return rep.passed ? 0 : 1;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  IntegratorConfig ic;
  ic.h = cfg.h_rule.step_for(cfg.eps);
  const auto steps =
      static_cast<std::size_t>(std::llround(std::ceil(cfg.T / ic.h - 1e-12)));
  ic.output_stride = std::max<int>(1, static_cast<int>(steps / 200));
  ic.seed = cfg.seed;
  ic.threads = cfg.threads;
  SlowFastRunSpec spec;
  spec.eps = cfg.eps;
  spec.particles = cfg.N;
  spec.T = cfg.T;
  spec.init_slow = cfg.init_slow;
  spec.init_fast = cfg.init_fast;
  const SlowFastTrajectory traj = simulate_slow_fast(cfg.model, spec, ic);
  art.write_csv("summary.csv", summary_header(cfg.model.d1, cfg.model.d2),
                summary_rows(traj));
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["experiment"] = "simulate";
  out["eps"] = cfg.eps;
  out["h"] = ic.h;
  out["terminal_slow_mean"] = traj.final_state.slow.mean();
  out["terminal_slow_m2"] = traj.summaries.back().slow_m2;
  out["pass"] = true;
  art.write_report(out);
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "simulate");
  return 0;
}

int cmd_invariant(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const NoiseSource init_noise(cfg.seed, NoiseDomain::InitialLaw);
  const Ensemble mu_rep = cfg.init_slow.draw(
      std::min<std::size_t>(cfg.N, 512), cfg.model.d1, init_noise, 7);
  const InvariantMeasureEstimate est = estimate_invariant(
      cfg.model, mu_rep, cfg.homog.frozen_cfg, cfg.homog.invariant);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < est.diagnostics.times.size(); ++i)
    rows.push_back({est.diagnostics.times[i], est.diagnostics.w2_to_final[i],
                    est.diagnostics.w2_se[i]});
  art.write_csv("summary.csv", {"t", "w2_to_final", "w2_se"}, rows);
  art.write_ensemble_csv("plotdata/zeta.csv", est.zeta);
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["experiment"] = "invariant";
  out["converged"] = est.converged;
  out["burn_in"] = est.burn_in;
  out["fitted_rate"] = est.diagnostics.fitted_rate;
  out["fitted_prefactor"] = est.diagnostics.fitted_prefactor;
  out["final_w2_gap"] = est.diagnostics.final_w2_gap;
  out["terminal_mean"] = est.zeta.mean();
  out["terminal_second_moment"] = est.zeta.second_moment();
  out["pass"] = est.converged;
  art.write_report(out);
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "invariant");
  return est.converged ? 0 : 1;
}

int cmd_poisson(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const PoissonValidationReport rep = run_poisson_validation(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.checks.size(); ++i)
    rows.push_back({static_cast<double>(i), rep.checks[i].value,
                    rep.checks[i].target, rep.checks[i].tolerance,
                    rep.checks[i].status == "pass" ? 1.0 : 0.0});
  art.write_csv("plotdata/checks.csv", {"check", "value", "target", "tolerance", "pass"},
                rows);
  art.write_report(rep.to_json());
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "poisson");
  return rep.status == "fail" ? 1 : 0;
}

int cmd_homogenize(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  HomogenizedModel hm(cfg.model, cfg.homog);
  const NoiseSource init_noise(cfg.seed, NoiseDomain::InitialLaw);
  const Ensemble mu_rep = cfg.init_slow.draw(
      std::min<std::size_t>(cfg.N, 512), cfg.model.d1, init_noise, 7);

  std::vector<std::vector<double>> rows;
  json probes_json = json::array();
  for (const double xp : cfg.x_probes) {
    const std::vector<double> x(cfg.model.d1, xp);
    const VectorEstimate fbar = hm.averaged_drift(x, mu_rep);
    const MatrixEstimate dsq = hm.averaged_diffusion_sq(x, mu_rep);
    const CorrectionDrifts corr = hm.correction_drifts(x, mu_rep);
    rows.push_back({xp, fbar.value[0], fbar.se[0], dsq.value(0, 0), dsq.se,
                    corr.h_dx.value[0], corr.h_dx.se[0], corr.c_dy.value[0],
                    corr.c_dy.se[0]});
    json p;
    p["x"] = xp;
    p["fbar"] = fbar.value;
    p["fbar_se"] = fbar.se;
    p["diffusion_sq"] = dsq.value(0, 0);
    p["diffusion_sq_se"] = dsq.se;
    p["corr_h_dx"] = corr.h_dx.value;
    p["corr_c_dy"] = corr.c_dy.value;
    p["c_identically_zero"] = corr.c_identically_zero;
    probes_json.push_back(p);
  }
  art.write_csv("plotdata/coefficients.csv",
                {"x", "fbar", "fbar_se", "diff_sq", "diff_sq_se", "h_dx",
                 "h_dx_se", "c_dy", "c_dy_se"},
                rows);
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["experiment"] = "homogenize";
  out["probes"] = probes_json;
  out["pass"] = true;
  art.write_report(out);
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "homogenize");
  return 0;
}

int cmd_converge(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const ConvergenceReport rep = run_convergence(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.eps.size(); ++i)
    rows.push_back({rep.eps[i], rep.err[i], rep.err_se[i]});
  art.write_csv("plotdata/convergence.csv", {"eps", "err", "err_se"}, rows);
  art.write_report(rep.to_json());
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "converge");
  return rep.pass ? 0 : 1;
}

int cmd_fluctuate(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const FluctuationReport rep = run_fluctuation_test(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.eps.size(); ++i)
    rows.push_back({rep.eps[i], rep.estimate[i], rep.se[i]});
  art.write_csv("plotdata/fluctuation.csv", {"eps", "estimate", "se"}, rows);
  art.write_report(rep.to_json());
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "fluctuate");
  return rep.pass ? 0 : 1;
}

int cmd_ergodicity(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const ErgodicityReport rep = run_ergodicity_test(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.first_diagnostics.times.size(); ++i)
    rows.push_back({rep.first_diagnostics.times[i],
                    rep.first_diagnostics.w2_to_final[i],
                    rep.first_diagnostics.w2_se[i]});
  art.write_csv("plotdata/ergodicity.csv", {"t", "w2_to_final", "w2_se"}, rows);
  art.write_report(rep.to_json());
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "ergodicity");
  return rep.pass ? 0 : 1;
}

int cmd_langevin_demo(const ExperimentConfig& cfg) {
  RunArtifact art(cfg.out_dir);
  const LangevinConstants lc = langevin_constants(cfg.model, cfg.homog);
  art.write_csv("plotdata/langevin_constants.csv",
                {"c1", "c1_se", "c2", "c2_se", "c3", "c3_se", "diffusion_sq"},
                {{lc.c1, lc.c1_se, lc.c2, lc.c2_se, lc.c3, lc.c3_se,
                  lc.effective_diffusion_sq()}});

  // Direct two-time-scale run at eps.
  IntegratorConfig ic;
  ic.h = cfg.h_rule.step_for(cfg.eps);
  ic.seed = cfg.seed;
  ic.threads = cfg.threads;
  SlowFastRunSpec spec;
  spec.eps = cfg.eps;
  spec.particles = cfg.N;
  spec.T = cfg.T;
  spec.init_slow = cfg.init_slow;
  spec.init_fast = cfg.init_fast;
  const auto steps_direct =
      static_cast<std::size_t>(std::llround(std::ceil(cfg.T / ic.h - 1e-12)));
  const std::size_t out_rows = 40;
  ic.output_stride = std::max<int>(1, static_cast<int>(steps_direct / out_rows));
  const SlowFastTrajectory direct = simulate_slow_fast(cfg.model, spec, ic);

  // Corrected limit: dX = (1+c1) F dt + c2 E[F] dt + sqrt(2/beta + 2 c3) dW.
  const double diff = std::sqrt(std::max(0.0, lc.effective_diffusion_sq()));
  const NoiseSource init_noise(cfg.seed, NoiseDomain::InitialLaw);
  Ensemble xbar = cfg.init_slow.draw(cfg.N, cfg.model.d1, init_noise, 0);
  const NoiseSource noise(cfg.seed, NoiseDomain::Limit);
  const double hl = cfg.limit_h;
  const auto steps_limit =
      static_cast<std::size_t>(std::llround(std::ceil(cfg.T / hl - 1e-12)));
  const std::size_t stride_limit =
      std::max<std::size_t>(1, steps_limit / out_rows);
  std::vector<std::vector<double>> limit_rows;
  std::vector<double> fv(cfg.model.d1), dummy_y(cfg.model.d2, 0.0);
  auto record_limit = [&](double t) {
    const auto mean = xbar.mean();
    double m2 = 0.0;
    for (std::size_t i = 0; i < xbar.count(); ++i)
      m2 += xbar.value(i, 0) * xbar.value(i, 0);
    m2 /= static_cast<double>(xbar.count());
    limit_rows.push_back({t, mean[0], m2});
  };
  record_limit(0.0);
  Ensemble xnext = xbar;
  const double sqh = std::sqrt(hl);
  for (std::size_t k = 0; k < steps_limit; ++k) {
    // E[F] over the current ensemble (c holds F in the Langevin template).
    std::vector<double> ef(cfg.model.d1, 0.0);
    for (std::size_t i = 0; i < xbar.count(); ++i) {
      cfg.model.coefficients.c(xbar.particle(i), xbar, dummy_y, xbar, fv);
      for (std::size_t c = 0; c < cfg.model.d1; ++c) ef[c] += fv[c];
    }
    for (auto& v : ef) v /= static_cast<double>(xbar.count());
    for (std::size_t i = 0; i < xbar.count(); ++i) {
      cfg.model.coefficients.c(xbar.particle(i), xbar, dummy_y, xbar, fv);
      auto xn = xnext.mutable_particle(i);
      for (std::size_t c = 0; c < cfg.model.d1; ++c) {
        const double xi = noise.normal(i, k * cfg.model.d1 + c);
        xn[c] = xbar.value(i, c) +
                ((1.0 + lc.c1) * fv[c] + lc.c2 * ef[c]) * hl + diff * sqh * xi;
      }
    }
    std::swap(xbar, xnext);
    if ((k + 1) % stride_limit == 0 || k + 1 == steps_limit)
      record_limit(static_cast<double>(k + 1) * hl);
  }

  std::vector<std::vector<double>> direct_rows;
  for (const auto& s : direct.summaries)
    direct_rows.push_back({s.t, s.slow_mean[0], s.slow_m2[0]});
  art.write_csv("plotdata/direct.csv", {"t", "mean", "m2"}, direct_rows);
  art.write_csv("plotdata/corrected_limit.csv", {"t", "mean", "m2"}, limit_rows);

  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["experiment"] = "langevin_demo";
  out["c1"] = lc.c1;
  out["c1_se"] = lc.c1_se;
  out["c2"] = lc.c2;
  out["c2_se"] = lc.c2_se;
  out["c3"] = lc.c3;
  out["c3_se"] = lc.c3_se;
  out["effective_diffusion_sq"] = lc.effective_diffusion_sq();
  out["eps"] = cfg.eps;
  out["terminal_direct_m2"] = direct_rows.back()[2];
  out["terminal_limit_m2"] = limit_rows.back()[2];
  out["pass"] = true;
  art.write_report(out);
  art.finalize_manifest(cfg.raw, cfg.seed, cfg.threads, "langevin-demo");
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Slow/fast McKean-Vlasov homogenization engine"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string subcommand;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "JSON experiment config")
        ->required();
    sub->add_option("--seed", args.seed_override, "override config seed");
    sub->add_option("--out", args.out_override, "override output directory");
    sub->add_option("--threads", args.threads_override, "override worker count");
    sub->callback([&, sub] { subcommand = sub->get_name(); });
  };
  for (const char* name :
       {"validate", "simulate", "invariant", "poisson", "homogenize", "converge",
        "fluctuate", "ergodicity", "langevin-demo"})
    add_common(app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    const ExperimentConfig cfg = load_config(args);
    if (subcommand == "validate") return cmd_validate(cfg);
    if (subcommand == "simulate") return cmd_simulate(cfg);
    if (subcommand == "invariant") return cmd_invariant(cfg);
    if (subcommand == "poisson") return cmd_poisson(cfg);
    if (subcommand == "homogenize") return cmd_homogenize(cfg);
    if (subcommand == "converge") return cmd_converge(cfg);
    if (subcommand == "fluctuate") return cmd_fluctuate(cfg);
    if (subcommand == "ergodicity") return cmd_ergodicity(cfg);
    if (subcommand == "langevin-demo") return cmd_langevin_demo(cfg);
    std::cerr << "unknown subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mvh

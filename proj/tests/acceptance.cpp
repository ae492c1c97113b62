// Acceptance suite: one criterion per function, one pass/fail line each.
// Run all with ./acceptance, a single one with ./acceptance --only K.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvh/harness.hpp"
#include "mvh/homogenize.hpp"
#include "mvh/measure.hpp"
#include "mvh/stats.hpp"

using namespace mvh;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ModelSpec acceptance_model(double c_const = 0.0) {
  return builtin_linear_model({2.0, 1.0, 2.0, std::sqrt(2.0), c_const});
}

InvariantMeasureEstimate acceptance_zeta(const ModelSpec& m, const Ensemble& mu,
                                         std::uint64_t seed,
                                         std::size_t particles = 10000,
                                         double max_T = 20.0) {
  IntegratorConfig cfg;
  cfg.h = 0.01;
  cfg.seed = seed;
  InvariantOptions opts;
  opts.nu0 = InitialLaw::point_mass({5.0});
  opts.particles = particles;
  opts.stationarity_tol = 0.02;
  opts.max_T = max_T;
  return estimate_invariant(m, mu, cfg, opts);
}

// Criterion 1: frozen invariant measure at N = 1e4, T = 20.
Outcome criterion_1() {
  const ModelSpec m = acceptance_model();
  const Ensemble mu = Ensemble::from_points({0.0, 0.0});
  const std::size_t n = 10000;

  IntegratorConfig cfg;
  cfg.h = 0.01;
  cfg.seed = 1001;
  const Ensemble nu0 = Ensemble::from_point(std::vector<double>{5.0}, n);
  const EnsemblePath path = simulate_frozen(m, mu, nu0, 20.0, cfg, 2'200'000);
  const double mean = path.terminal().mean()[0];
  const double var = path.terminal().second_moment()[0] - mean * mean;
  const double mean_se = 1.0 / std::sqrt(static_cast<double>(n));
  const double var_se = std::sqrt(2.0 / static_cast<double>(n));

  const InvariantMeasureEstimate est = acceptance_zeta(m, mu, 1002, n, 20.0);
  const double rate = est.diagnostics.fitted_rate;

  std::ostringstream os;
  os << "mean=" << mean << " (3SE=" << 3.0 * mean_se << "), var=" << var
     << " (target 1, 3SE=" << 3.0 * var_se << "), lambda=" << rate
     << " (target 1 within factor 2)";
  Outcome out;
  out.pass = std::abs(mean) <= 3.0 * mean_se &&
             std::abs(var - 1.0) <= 3.0 * var_se && rate >= 0.5 && rate <= 2.0;
  out.detail = os.str();
  return out;
}

// Criterion 2: MC Poisson solution vs the closed form, and the generator
// residual on the analytic solution.
Outcome criterion_2() {
  const ModelSpec m = acceptance_model();
  const Ensemble mu = Ensemble::from_points({0.0, 0.0});
  const InvariantMeasureEstimate zeta = acceptance_zeta(m, mu, 2001);
  PoissonConfig pc;
  pc.paths = 10000;
  pc.law_particles = 2000;
  pc.h = 0.01;
  pc.seed = 2002;
  pc.check_centering = false;
  const PoissonEvaluator ev(m, {0.0}, mu, zeta, pc);
  const LinearClosedForm lf = *m.linear_form;

  double worst_z = 0.0;
  const double probe_y[5] = {-1.0, 0.0, 0.5, 1.0, 2.0};
  const double probe_shift[5] = {0.0, 2.0, -1.0, 0.5, 1.0};
  for (int i = 0; i < 5; ++i) {
    Ensemble nu(8, 1);
    for (std::size_t a = 0; a < 8; ++a)
      nu.mutable_particle(a)[0] =
          probe_shift[i] + 0.25 * (static_cast<double>(a) - 3.5);
    const double target = lf.phi(probe_y[i], nu.mean()[0]);
    const PhiEstimate phi =
        ev.evaluate_phi(m.coefficients.H, std::vector<double>{probe_y[i]}, nu);
    const double tol = phi.se[0] + phi.truncation_bound;
    worst_z = std::max(worst_z, std::abs(phi.value[0] - target) / tol);
  }

  const MeasureTestFn phi_exact = [lf](PointView y, const Ensemble& nu) {
    return lf.phi(y[0], nu.mean()[0]);
  };
  std::vector<std::pair<std::vector<double>, Ensemble>> probes;
  for (int i = 0; i < 10; ++i) {
    const double y = -2.0 + 4.0 * i / 9.0;
    Ensemble nu(6, 1);
    for (std::size_t a = 0; a < 6; ++a)
      nu.mutable_particle(a)[0] = 0.4 * (static_cast<double>(a) - 2.5) + 0.2 * (i % 3);
    probes.emplace_back(std::vector<double>{y}, std::move(nu));
  }
  const ResidualReport rr = poisson_residual(ev, m.coefficients.H, probes, phi_exact);

  std::ostringstream os;
  os << "worst |phi_hat - phi|/(SE+trunc)=" << worst_z
     << " (<=3), max analytic residual=" << rr.max_abs << " (<=1e-3)";
  Outcome out;
  out.pass = worst_z <= 3.0 && rr.max_abs <= 1e-3;
  out.detail = os.str();
  return out;
}

// Criterion 3: dPhi/dy and the Lions derivative match the closed forms.
Outcome criterion_3() {
  const ModelSpec m = acceptance_model();
  const Ensemble mu = Ensemble::from_points({0.0, 0.0});
  const InvariantMeasureEstimate zeta = acceptance_zeta(m, mu, 3001);
  PoissonConfig pc;
  pc.paths = 10000;
  pc.law_particles = 2000;
  pc.h = 0.01;
  pc.seed = 3002;
  pc.check_centering = false;
  const PoissonEvaluator ev(m, {0.0}, mu, zeta, pc);
  const LinearClosedForm lf = *m.linear_form;

  double worst_dy = 0.0, worst_dnu = 0.0;
  const double ys[3] = {-0.5, 0.3, 1.2};
  for (int i = 0; i < 3; ++i) {
    Ensemble nu(6, 1);
    for (std::size_t a = 0; a < 6; ++a)
      nu.mutable_particle(a)[0] = 0.3 * (static_cast<double>(a) - 2.5) + 0.1 * i;
    const PhiEstimate dy =
        ev.derivative_y(m.coefficients.H, std::vector<double>{ys[i]}, nu, 0);
    worst_dy = std::max(worst_dy,
                        std::abs(dy.value[0] - lf.dphi_dy()) / std::max(dy.se[0], 1e-12));
    const PhiEstimate dnu = ev.lions_derivative_nu(
        m.coefficients.H, std::vector<double>{ys[i]}, nu,
        static_cast<std::size_t>(i), 0);
    worst_dnu = std::max(worst_dnu, std::abs(dnu.value[0] - lf.dphi_dnu()) /
                                        std::max(dnu.se[0], 1e-12));
  }
  std::ostringstream os;
  os << "worst dPhi/dy z=" << worst_dy << ", worst Lions z=" << worst_dnu
     << " (targets 0.5, <=3 SE)";
  Outcome out;
  out.pass = worst_dy <= 3.0 && worst_dnu <= 3.0;
  out.detail = os.str();
  return out;
}

// Criterion 4: homogenized coefficients and the matrix square root.
Outcome criterion_4() {
  const ModelSpec m = acceptance_model();
  HomogenizeConfig cfg;
  cfg.poisson.paths = 2000;
  cfg.poisson.law_particles = 2000;
  cfg.poisson.h = 0.01;
  cfg.poisson.seed = 4002;
  cfg.poisson.check_centering = false;
  cfg.frozen_cfg.h = 0.01;
  cfg.frozen_cfg.seed = 4001;
  cfg.invariant.nu0 = InitialLaw::point_mass({5.0});
  cfg.invariant.particles = 10000;
  cfg.invariant.stationarity_tol = 0.02;
  cfg.invariant.max_T = 20.0;
  cfg.quad_nodes = 192;
  cfg.nu_particles = 32;
  const HomogenizedModel hm(m, cfg);
  const Ensemble mu = Ensemble::from_points({0.0, 0.0});

  bool fbar_exact = true;
  for (const double x : {-1.0, 0.0, 2.0}) {
    const VectorEstimate fbar = hm.averaged_drift(std::vector<double>{x}, mu);
    fbar_exact = fbar_exact && std::abs(fbar.value[0] - (-x)) <= 1e-12;
  }

  const MatrixEstimate dsq = hm.averaged_diffusion_sq(std::vector<double>{0.0}, mu);
  const bool diff_ok = std::abs(dsq.value(0, 0) - 3.0) <= 3.0 * dsq.se;

  const CorrectionDrifts corr = hm.correction_drifts(std::vector<double>{0.0}, mu);
  const bool corr_ok = corr.c_identically_zero && corr.c_dy.value[0] == 0.0 &&
                       corr.c_dnu.identically_zero && corr.h_dx.value[0] == 0.0;

  // Square-root round trip on 100 random PSD matrices.
  bool sqrt_ok = true;
  std::uint64_t state = 99;
  auto next_normal = [&state] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    const double u1 =
        std::max(static_cast<double>(state >> 11) * 0x1p-53, 1e-300);
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    const double u2 = static_cast<double>(state >> 11) * 0x1p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    Eigen::MatrixXd s(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) s(r, c) = next_normal();
    const Eigen::MatrixXd a = s * s.transpose();
    const Eigen::MatrixXd root = effective_diffusion_sqrt(a, 1e-10);
    if ((root * root.transpose() - a).norm() > 1e-10 * std::max(1.0, a.norm()))
      sqrt_ok = false;
  }

  std::ostringstream os;
  os << "Fbar exact=" << (fbar_exact ? "yes" : "no") << ", diffusion^2="
     << dsq.value(0, 0) << " (target 3, 3SE=" << 3.0 * dsq.se
     << "), c-corrections zero=" << (corr_ok ? "yes" : "no")
     << ", sqrt round-trip=" << (sqrt_ok ? "ok" : "broken");
  Outcome out;
  out.pass = fbar_exact && diff_ok && corr_ok && sqrt_ok;
  out.detail = os.str();
  return out;
}

// Criterion 5: limit equation stationary variance 1.5 at T = 10, N = 4000.
Outcome criterion_5() {
  const ModelSpec m = acceptance_model();
  HomogenizeConfig cfg;
  cfg.poisson.paths = 1200;
  cfg.poisson.law_particles = 1500;
  cfg.poisson.h = 0.01;
  cfg.poisson.seed = 5002;
  cfg.poisson.check_centering = false;
  cfg.frozen_cfg.h = 0.01;
  cfg.frozen_cfg.seed = 5001;
  cfg.invariant.nu0 = InitialLaw::point_mass({5.0});
  cfg.invariant.particles = 8000;
  cfg.invariant.stationarity_tol = 0.02;
  cfg.invariant.max_T = 20.0;
  cfg.quad_nodes = 128;
  cfg.nu_particles = 24;
  const HomogenizedModel hm(m, cfg);
  const Ensemble mu = Ensemble::from_points({0.0, 0.0});
  const MatrixEstimate dsq = hm.averaged_diffusion_sq(std::vector<double>{0.0}, mu);

  const std::size_t n = 4000;
  const Ensemble xi = Ensemble::from_point(std::vector<double>{0.0}, n);
  LimitRunConfig lc;
  lc.h = 0.01;
  lc.seed = 5003;
  lc.output_stride = 1 << 20;
  const LimitTrajectory traj = hm.simulate_limit(xi, 10.0, lc);
  const double m2 = traj.summaries.back().m2[0];

  // Combined budget: MC error of the variance estimate plus the propagated
  // uncertainty of the assembled diffusion coefficient.
  const double mc_se = 1.5 * std::sqrt(2.0 / static_cast<double>(n));
  const double diff_se = dsq.se / 2.0;
  const double comb = std::sqrt(mc_se * mc_se + diff_se * diff_se);

  std::ostringstream os;
  os << "stationary m2=" << m2 << " (target 1.5, 3SE=" << 3.0 * comb
     << ", diffusion^2=" << dsq.value(0, 0) << ")";
  Outcome out;
  out.pass = std::abs(m2 - 1.5) <= 3.0 * comb;
  out.detail = os.str();
  return out;
}

// Criterion 6: Theorem-1.1 rate on the linear model.
Outcome criterion_6() {
  json j;
  j["model"] = {{"name", "linear"}, {"kappa", 2.0}, {"alpha", 1.0},
                {"sigma", 2.0}, {"g_slow", std::sqrt(2.0)}};
  j["eps_list"] = {0.3, 0.2, 0.1, 0.05};
  j["N"] = 2000;
  j["T"] = 0.5;
  j["reps"] = 8;
  j["seed"] = 6001;
  j["observable"] = {{"type", "second_moment"}};
  j["init"] = {{"slow", {{"type", "point"}, {"value", {1.0}}}},
               {"fast", {{"type", "point"}, {"value", {2.0}}}}};
  j["invariant"] = {{"particles", 8000}, {"tol", 0.02}, {"max_T", 20.0},
                    {"init", {{"type", "point"}, {"value", {5.0}}}}};
  j["poisson"] = {{"paths", 1500}, {"law_particles", 1500}};
  j["homogenize"] = {{"quad_nodes", 128}, {"nu_particles", 24}};
  j["limit_ref"] = {{"N", 16000}, {"reps", 8}, {"h", 0.005}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  const ConvergenceReport rep = run_convergence(cfg);
  std::ostringstream os;
  os << "slope=" << rep.slope << " (window [0.7, 1.3]), errors:";
  for (std::size_t i = 0; i < rep.eps.size(); ++i)
    os << " " << rep.eps[i] << "->" << rep.err[i] << "+-" << rep.err_se[i];
  Outcome out;
  out.pass = rep.pass;
  out.detail = os.str();
  return out;
}

// Criterion 7: Lemma-3.1 scaling of the fast-coordinate average.
Outcome criterion_7() {
  json j;
  j["model"] = {{"name", "linear"}, {"kappa", 2.0}, {"alpha", 1.0},
                {"sigma", 2.0}, {"g_slow", std::sqrt(2.0)}, {"c_const", 1.0}};
  j["eps_list"] = {0.3, 0.2, 0.1, 0.05};
  j["N"] = 2000;
  j["T"] = 1.0;
  j["reps"] = 8;
  j["seed"] = 7001;
  j["fluctuation_f"] = "fast_coordinate";
  j["init"] = {{"slow", {{"type", "point"}, {"value", {1.0}}}},
               {"fast", {{"type", "point"}, {"value", {0.0}}}}};
  j["invariant"] = {{"particles", 6000}, {"tol", 0.02}, {"max_T", 20.0},
                    {"init", {{"type", "point"}, {"value", {3.0}}}}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  const FluctuationReport rep = run_fluctuation_test(cfg);
  std::ostringstream os;
  os << "slope=" << rep.slope << " (window [0.7, 1.3]), monotone="
     << (rep.monotone ? "yes" : "no") << ", estimates:";
  for (std::size_t i = 0; i < rep.eps.size(); ++i)
    os << " " << rep.eps[i] << "->" << rep.estimate[i] << "+-" << rep.se[i];
  Outcome out;
  out.pass = rep.pass;
  out.detail = os.str();
  return out;
}

// Criterion 8: tangent flow decay and the exact Jacobian.
Outcome criterion_8() {
  const ModelSpec m = acceptance_model();
  const Ensemble mu = Ensemble::from_points({0.0});

  // Zero-noise, constant sigma: EM Jacobian vs exp(-kappa t) within 1e-6.
  double jac_err;
  {
    IntegratorConfig cfg;
    cfg.h = 2e-6;
    cfg.zero_noise = true;
    const Ensemble nu0 = Ensemble::from_points({0.0, 1.0});
    const EnsemblePath path = simulate_frozen(m, mu, nu0, 1.0, cfg, 1'000'000);
    const std::vector<double> y0{1.0};
    const TangentTrajectory traj = tangent_flow_y(m, mu, y0, path, 1.0, 1, cfg);
    jac_err = std::abs(traj.terminal_jacobians[0][0] - std::exp(-2.0));
  }

  // Fitted decay rate of E||dY/dy||^2 with noise on.
  double rate;
  {
    IntegratorConfig cfg;
    cfg.h = 0.01;
    cfg.seed = 8001;
    const NoiseSource noise(8001, NoiseDomain::InitialLaw);
    const Ensemble nu0 =
        InitialLaw::gaussian({0.0}, {1.0}).draw(1000, 1, noise, 0);
    const EnsemblePath path = simulate_frozen(m, mu, nu0, 3.0, cfg);
    IntegratorConfig tcfg = cfg;
    tcfg.output_stride = 25;
    const std::vector<double> y0{0.5};
    const TangentTrajectory traj = tangent_flow_y(m, mu, y0, path, 3.0, 256, tcfg);
    std::vector<double> ts, logs;
    for (const auto& s : traj.summaries) {
      if (s.mean_sq_norm <= 0.0) continue;
      ts.push_back(s.t);
      logs.push_back(std::log(s.mean_sq_norm));
    }
    rate = -line_fit(ts, logs).slope;
  }
  const double c_gap = m.dissipativity.c2 - m.dissipativity.c1;  // 1

  std::ostringstream os;
  os << "|J - exp(-2)|=" << jac_err << " (<=1e-6), fitted rate=" << rate
     << " (>= 0.5 (c2-c1) = " << 0.5 * c_gap << ")";
  Outcome out;
  out.pass = jac_err <= 1e-6 && rate >= 0.5 * c_gap;
  out.detail = os.str();
  return out;
}

// Criterion 9: exact1d equals the brute-force permutation oracle.
Outcome criterion_9() {
  std::uint64_t state = 9001;
  auto uniform = [&state] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(state >> 11) * 0x1p-53;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform() * 6.0);
    std::vector<double> xs(n), ys(n);
    for (auto& v : xs) v = 6.0 * (uniform() - 0.5);
    for (auto& v : ys) v = 6.0 * (uniform() - 0.5);
    const Ensemble a(xs, 1), b(ys, 1);

    // Brute force over all permutation matchings.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - ys[perm[i]];
        cost += d * d;
      }
      best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double oracle = std::sqrt(best / static_cast<double>(n));

    worst = std::max(worst,
                     std::abs(wasserstein2(a, b, W2Method::Exact1D) - oracle));
  }
  std::ostringstream os;
  os << "worst |exact1d - bruteforce| = " << worst << " (<= 1e-10)";
  Outcome out;
  out.pass = worst <= 1e-10;
  out.detail = os.str();
  return out;
}

// Criterion 10: CLI determinism across reruns and worker counts.
Outcome criterion_10() {
  const char* bin_env = std::getenv("MVHOMOG_BIN");
  const std::string bin = bin_env ? bin_env : "tools/mvhomog";
  const fs::path base = fs::temp_directory_path() / "mvh_acceptance_c10";
  fs::remove_all(base);
  fs::create_directories(base);

  json linear = {{"name", "linear"}, {"kappa", 2.0}, {"alpha", 1.0},
                 {"sigma", 2.0}, {"g_slow", std::sqrt(2.0)}};
  json common = {
      {"model", linear},
      {"N", 64},
      {"T", 0.1},
      {"eps", 0.4},
      {"eps_list", {0.5, 0.4}},
      {"reps", 2},
      {"seed", 10001},
      {"probes", 200},
      {"init",
       {{"slow", {{"type", "point"}, {"value", {1.0}}}},
        {"fast", {{"type", "point"}, {"value", {1.0}}}}}},
      {"invariant", {{"particles", 512}, {"tol", 0.08}, {"max_T", 6.0}}},
      {"poisson",
       {{"paths", 64}, {"law_particles", 128}, {"horizon", 4.0}}},
      {"homogenize", {{"quad_nodes", 16}, {"nu_particles", 8}, {"c2_y_nodes", 2}}},
      {"limit_ref", {{"N", 256}, {"reps", 2}, {"h", 0.01}}},
      {"limit", {{"N", 128}, {"h", 0.02}}},
  };
  json langevin_cfg = common;
  langevin_cfg["model"] = {{"name", "langevin"}, {"beta", 1.0},  {"fa", 1.0},
                           {"fb", 0.0},          {"ha", 2.0},    {"hb", 0.0}};
  langevin_cfg["T"] = 0.2;

  const std::vector<std::string> subcommands = {
      "validate",  "simulate",  "invariant", "poisson",       "homogenize",
      "converge",  "fluctuate", "ergodicity", "langevin-demo"};

  auto read_files = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string rel = fs::relative(entry.path(), dir).string();
      if (rel == "manifest.json") continue;  // carries timestamps
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      files[rel] = ss.str();
    }
    return files;
  };

  std::ostringstream os;
  bool all_ok = true;
  for (const auto& sub : subcommands) {
    const json& cfg = sub == "langevin-demo" ? langevin_cfg : common;
    const fs::path cfg_path = base / (sub + ".json");
    {
      std::ofstream out(cfg_path);
      out << cfg.dump(2);
    }
    const fs::path out1 = base / (sub + "_run1");
    const fs::path out2 = base / (sub + "_run2");
    for (int run = 0; run < 2; ++run) {
      const fs::path& out_dir = run == 0 ? out1 : out2;
      const int threads = run == 0 ? 1 : 4;
      std::ostringstream cmd;
      cmd << bin << " " << sub << " --config " << cfg_path << " --out "
          << out_dir << " --threads " << threads << " > /dev/null 2>&1";
      const int rc = std::system(cmd.str().c_str());
      const int code = WEXITSTATUS(rc);
      if (code != 0 && code != 1) {
        all_ok = false;
        os << " [" << sub << ": exit " << code << "]";
      }
    }
    const auto f1 = read_files(out1);
    const auto f2 = read_files(out2);
    if (f1.empty() || f1.size() != f2.size()) {
      all_ok = false;
      os << " [" << sub << ": file sets differ or empty]";
      continue;
    }
    for (const auto& [name, content] : f1) {
      auto it = f2.find(name);
      if (it == f2.end() || it->second != content) {
        all_ok = false;
        os << " [" << sub << "/" << name << ": differs]";
      }
    }
  }
  Outcome out;
  out.pass = all_ok;
  out.detail = all_ok ? "all subcommands bitwise reproducible across threads"
                      : os.str();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
      only = std::atoi(argv[i + 1]);
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"frozen invariant measure", criterion_1},
      {"Poisson solution and residual", criterion_2},
      {"Poisson derivatives", criterion_3},
      {"homogenized coefficients", criterion_4},
      {"limit equation variance", criterion_5},
      {"weak convergence rate", criterion_6},
      {"fluctuation scaling", criterion_7},
      {"tangent flow decay", criterion_8},
      {"W2 oracle equivalence", criterion_9},
      {"CLI determinism", criterion_10},
  };

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int idx = static_cast<int>(k) + 1;
    if (only != 0 && only != idx) continue;
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    std::printf("[criterion %d] %s — %s: %s\n", idx, out.pass ? "PASS" : "FAIL",
                criteria[k].first.c_str(), out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}

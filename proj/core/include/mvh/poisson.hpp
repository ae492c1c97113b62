#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <vector>

#include "mvh/dynamics.hpp"
#include "mvh/model.hpp"

namespace mvh {

struct PoissonConfig {
  std::size_t paths = 10000;         // MC batch per evaluation, >= 2
  std::size_t law_particles = 2000;  // frozen-path particle count (upsampled)
  double h = 0.01;
  double truncation_tol = 1e-3;
  double horizon_override = 0.0;  // > 0 forces the integration horizon
  double max_horizon = 64.0;
  double min_horizon = 1.0;
  double fd_hx = 1e-3;
  double fd_hy = 1e-3;
  double fd_hnu = 0.02;
  int threads = 1;
  std::uint64_t seed = 0;
  bool check_centering = true;  // cheap quadrature guard per evaluation
};

struct PhiEstimate {
  std::vector<double> value;  // d1 components
  std::vector<double> se;
  double truncation_bound = 0.0;
  bool centering_warning = false;
  double centering_value = 0.0;
  double centering_se = 0.0;

  double scalar() const { return value.at(0); }
  double scalar_se() const { return se.at(0); }
};

// Quadrature of y -> f(x, mu, y, zeta_hat) against zeta_hat, bootstrap SE.
struct CenteringCheck {
  std::vector<double> value;
  std::vector<double> se;
  bool centered(double n_sigmas = 3.0, double abs_tol = 1e-9) const;
};
CenteringCheck check_centering(const ModelSpec& model, const SlowCoefficientFn& f,
                               PointView x, const Ensemble& mu,
                               const InvariantMeasureEstimate& zeta_hat,
                               int bootstrap = 64, std::uint64_t seed = 0);

// Monte-Carlo evaluation of Phi(x, mu, y, nu) = E int_0^Tinf f(x, mu, Y_t, L_t) dt
// along decoupled tagged paths, with the frozen-law path cached per initial nu
// and shared across evaluations (finite-difference pairs then couple through
// common random numbers automatically).
class PoissonEvaluator {
 public:
  PoissonEvaluator(const ModelSpec& model, std::vector<double> x, Ensemble mu,
                   InvariantMeasureEstimate zeta_hat, PoissonConfig cfg);

  double horizon() const { return horizon_; }
  std::size_t horizon_steps() const { return horizon_steps_; }
  double truncation_bound() const { return truncation_bound_; }

  PhiEstimate evaluate_phi(const SlowCoefficientFn& f, PointView y,
                           const Ensemble& nu) const;
  // Same estimate but with the horizon scaled (truncation soundness checks).
  PhiEstimate evaluate_phi_with_horizon(const SlowCoefficientFn& f, PointView y,
                                        const Ensemble& nu,
                                        double horizon_scale) const;

  // Per-path time integrals of component `comp` of f; basis for generator
  // assembly and the linearity property.
  std::vector<double> phi_path_integrals(const SlowCoefficientFn& f,
                                         std::size_t comp, PointView y,
                                         const Ensemble& nu) const;

  // Central difference in x_k. The paths do not depend on x, so the shifted
  // evaluations ride along one simulation sweep.
  PhiEstimate derivative_x(const SlowCoefficientFn& f, PointView y,
                           const Ensemble& nu, std::size_t k) const;
  // Central difference in y_k under common random numbers.
  PhiEstimate derivative_y(const SlowCoefficientFn& f, PointView y,
                           const Ensemble& nu, std::size_t k) const;
  // Lions difference: atom `i` of nu shifted by fd_hnu along coordinate k,
  // rescaled by nu.count()/fd_hnu; estimates d_nu Phi(x,mu,y,nu)(z_i)_k.
  PhiEstimate lions_derivative_nu(const SlowCoefficientFn& f, PointView y,
                                  const Ensemble& nu, std::size_t atom,
                                  std::size_t k) const;

  const ModelSpec& model() const { return *model_; }
  const std::vector<double>& x() const { return x_; }
  const Ensemble& mu() const { return mu_; }
  const InvariantMeasureEstimate& zeta() const { return zeta_; }
  const PoissonConfig& config() const { return cfg_; }

  // Cached frozen path started from nu (upsampled to law_particles).
  const EnsemblePath& frozen_path_for(const Ensemble& nu) const;

 private:
  PhiEstimate reduce(const std::vector<std::vector<double>>& integrals) const;

  const ModelSpec* model_;
  std::vector<double> x_;
  Ensemble mu_;
  InvariantMeasureEstimate zeta_;
  PoissonConfig cfg_;
  double horizon_ = 0.0;
  std::size_t horizon_steps_ = 0;
  double truncation_bound_ = 0.0;

  mutable std::mutex cache_mutex_;
  mutable std::list<std::pair<std::uint64_t, EnsemblePath>> path_cache_;
};

// One application of the generator
//   L0 phi = 1/2 a : d2y phi + b . dy phi
//          + int [ b(mu,z,nu) . d_nu phi(y,nu)(z)
//                + 1/2 a(mu,z,nu) : d_z d_nu phi(y,nu)(z) ] nu(dz)
// by central differences in y and empirical-projection differences in nu.
struct GeneratorApplication {
  double value = 0.0;
  double part_second_order = 0.0;  // 1/2 a : Hessian_y
  double part_first_order = 0.0;   // b . grad_y
  double part_measure = 0.0;       // nu-integral of the Lions terms
  double std_error = 0.0;          // 0 for deterministic test functions
};

struct FdSteps {
  double hy = 1e-4;
  double hnu = 1e-4;
};

using MeasureTestFn = std::function<double(PointView y, const Ensemble& nu)>;

GeneratorApplication apply_generator_L0(const ModelSpec& model,
                                        const MeasureTestFn& phi,
                                        const Ensemble& mu, PointView y,
                                        const Ensemble& nu, const FdSteps& fd);

// Generator applied to the MC solution itself: all finite differences are
// assembled path by path under common random numbers, so the reported SE is
// the real spread of the combined estimator.
GeneratorApplication generator_on_phi_hat(const PoissonEvaluator& ev,
                                          const SlowCoefficientFn& f,
                                          std::size_t comp, PointView y,
                                          const Ensemble& nu);

struct ResidualProbe {
  std::vector<double> y;
  std::uint64_t nu_hash = 0;
  double residual = 0.0;   // L0 Phi + f at the probe
  double std_error = 0.0;
  double fd_budget = 0.0;
  GeneratorApplication generator;
};

struct ResidualReport {
  std::vector<ResidualProbe> probes;
  double max_abs = 0.0;
  double rms = 0.0;
  bool mc_mode = false;
};

// L0 Phi + f over a probe grid; phi_analytic overrides the MC solution when
// provided (closed-form checks).
ResidualReport poisson_residual(const PoissonEvaluator& ev,
                                const SlowCoefficientFn& f,
                                const std::vector<std::pair<std::vector<double>, Ensemble>>& probes,
                                const std::optional<MeasureTestFn>& phi_analytic = {});

}  // namespace mvh

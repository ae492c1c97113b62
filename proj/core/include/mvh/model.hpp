#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvh/ensemble.hpp"

namespace mvh {

// Evaluators write their value into `out` (row-major for matrices) instead of
// returning vectors; the particle kernels call them hot and must not allocate.
// All evaluators have to be deterministic, total on finite inputs, and
// reentrant (model objects are shared across workers).
using SlowCoefficientFn = std::function<void(
    PointView x, const Ensemble& mu, PointView y, const Ensemble& nu, MutView out)>;
using FastCoefficientFn =
    std::function<void(const Ensemble& mu, PointView y, const Ensemble& nu, MutView out)>;

struct CoefficientSet {
  SlowCoefficientFn F;      // R^{d1}
  SlowCoefficientFn H;      // R^{d1}, the 1/eps slow drift; must be centered
  SlowCoefficientFn G;      // R^{d1 x d1}
  SlowCoefficientFn c;      // R^{d2}, the 1/eps fast drift
  FastCoefficientFn b;      // R^{d2}; no slow-state argument by construction
  FastCoefficientFn sigma;  // R^{d2 x d2}

  // Optional analytic y-Jacobians for the tangent flow. When absent the
  // integrator falls back to central differences with step 1e-5 * (1 + |y|).
  FastCoefficientFn b_jac_y;      // out[i*d2 + k]        = d b_i / d y_k
  FastCoefficientFn sigma_jac_y;  // out[(i*d2 + l)*d2+k] = d sigma_il / d y_k
};

struct DissipativityParams {
  double c1 = 0.0;  // Wasserstein coupling gain
  double c2 = 0.0;  // state contraction; requires c2 > c1 >= 0
  bool declared = false;  // analytic vs empirically probed
};

// Closed forms of the built-in linear test model; the oracle everything else
// is checked against.
struct LinearClosedForm {
  double kappa = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double g_slow = 0.0;
  double c_const = 0.0;

  double stationary_variance() const { return sigma * sigma / (2.0 * kappa); }
  // Solution of the Poisson equation for f = H = y.
  double phi(double y, double nu_mean) const {
    return y / kappa + alpha * nu_mean / (kappa * (kappa - alpha));
  }
  double dphi_dy() const { return 1.0 / kappa; }
  double dphi_dnu() const { return alpha / (kappa * (kappa - alpha)); }
  // Effective diffusion squared of the limit equation.
  double limit_diffusion_sq() const {
    return g_slow * g_slow + 2.0 * phi_h_average();
  }
  // <H phi, zeta> = Var(zeta)/kappa for H = y.
  double phi_h_average() const { return stationary_variance() / kappa; }
};

struct ModelSpec {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  CoefficientSet coefficients;
  DissipativityParams dissipativity;

  std::string name;                      // builtin name or "custom"
  std::map<std::string, double> params;  // recorded in run manifests

  std::optional<LinearClosedForm> linear_form;
  std::optional<double> langevin_beta;  // set when b = H, c = F (Langevin shape)
};

struct ValidationProbe {
  double margin = 0.0;  // rhs - lhs of the dissipativity inequality
  double w2 = 0.0;
  double dy2 = 0.0;
};

struct ValidationReport {
  bool passed = false;
  bool structural_ok = false;
  bool dissipativity_ok = false;
  int probes = 0;
  int violations = 0;
  double worst_margin = 0.0;
  double tolerance = 0.0;
  std::string message;
};

// Probes the dissipativity inequality
//   ||sigma(mu,y1,nu1)-sigma(mu,y2,nu2)||^2 + <b(mu,y1,nu1)-b(mu,y2,nu2), y1-y2>
//     <= c1 W2(nu1,nu2)^2 - c2 |y1-y2|^2
// on random pairs and checks evaluator output shapes on sample inputs.
ValidationReport validate_model(const ModelSpec& spec, int probes,
                                std::uint64_t rng_seed, double tolerance = 1e-8);

struct LinearModelParams {
  double kappa = 2.0;
  double alpha = 1.0;
  double sigma = 2.0;
  double g_slow = 1.4142135623730950488;  // sqrt(2)
  double c_const = 0.0;
};

// 1-d analytic test model:
//   F = -x, H = y, G = g_slow, c = c_const,
//   b(mu,y,nu) = -kappa y + alpha mean(nu), sigma = s.
// Frozen invariant law N(0, s^2/(2 kappa)); Poisson solution
// phi(y,nu) = y/kappa + alpha mean(nu)/(kappa (kappa - alpha)).
ModelSpec builtin_linear_model(const LinearModelParams& p);

using LangevinFieldFn =
    std::function<void(PointView z, const Ensemble& law, MutView out)>;

// Two-time-scale Langevin system rewritten with Y = X/eps:
//   slow drift F + H/eps with G = sqrt(2/beta) I,
//   fast drift F/eps + H/eps^2 with sigma = sqrt(2/beta) I,
// i.e. b := H and c := F in the general template.
ModelSpec builtin_langevin_model(std::size_t dim, LangevinFieldFn F_eval,
                                 LangevinFieldFn H_eval, double beta,
                                 DissipativityParams declared);

// Langevin model with linear fields F(x,mu) = -fa x + fb mean(mu),
// H(y,nu) = -ha y + hb mean(nu); the config-selectable variant.
ModelSpec builtin_langevin_linear(double fa, double fb, double ha, double hb,
                                  double beta);

}  // namespace mvh

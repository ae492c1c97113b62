#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "mvh/dynamics.hpp"
#include "mvh/model.hpp"
#include "mvh/poisson.hpp"

namespace mvh {

struct NotPsdError : std::runtime_error {
  NotPsdError(std::string msg, std::vector<double> spectrum)
      : std::runtime_error(std::move(msg)), eigenvalues(std::move(spectrum)) {}
  std::vector<double> eigenvalues;
};

// Symmetrizes, clips eigenvalues in [-tol, 0) to zero, errors below -tol,
// returns the principal square root S with S S^T equal to the clipped input.
Eigen::MatrixXd effective_diffusion_sqrt(const Eigen::MatrixXd& a, double tol);

struct HomogenizeConfig {
  PoissonConfig poisson;
  IntegratorConfig frozen_cfg;    // integrator for estimate_invariant
  InvariantOptions invariant;     // stationarity policy per mu
  std::size_t quad_nodes = 256;   // y-quadrature nodes drawn from zeta_hat
  std::size_t nu_particles = 64;  // sub-ensemble standing in for zeta in Phi's nu slot
  std::size_t c2_y_nodes = 8;     // outer y-nodes of the double-bar integral
  double psd_tol = 1e-8;          // relative to trace
  // Lattice spacing for coefficient caching in simulate_limit. Large spacing
  // collapses everything into one cell (the right setting when coefficients
  // are state-independent, e.g. the linear acceptance model).
  double lattice_dx = 0.25;
  double lattice_dmean = 1e18;
  double lattice_dcov = 1e18;
};

struct VectorEstimate {
  std::vector<double> value;
  std::vector<double> se;
};

struct MatrixEstimate {
  Eigen::MatrixXd value;
  double se = 0.0;  // worst entrywise standard error
};

// The double-bar correction field x_tilde -> R^{d1}: atoms y_j of the
// zeta sub-ensemble with Lions coefficients L_j (d1 x d2 each); the field is
// (1/K) sum_j c(x_tilde, mu, y_j, zeta) . L_j, which the limit simulator
// averages over its own ensemble for the copy-space expectation.
struct NuCorrectionField {
  Ensemble atoms;
  std::vector<Eigen::MatrixXd> lions;  // one d1 x d2 block per atom
  double se = 0.0;
  bool identically_zero = true;
};

struct CorrectionDrifts {
  VectorEstimate h_dx;  // overline{H . d_x Phi}
  VectorEstimate c_dy;  // overline{c . d_y Phi}
  NuCorrectionField c_dnu;
  bool c_identically_zero = false;  // c vanished at every probe: exact zeros
};

struct LangevinConstants {
  double c1 = 0.0, c1_se = 0.0;
  double c2 = 0.0, c2_se = 0.0;
  double c3 = 0.0, c3_se = 0.0;
  double beta = 0.0;
  // Limit drift is (1+c1) F + c2 E[F]; diffusion sqrt(2/beta + 2 c3).
  double effective_diffusion_sq() const { return 2.0 / beta + 2.0 * c3; }
};

struct LimitRunConfig {
  double h = 0.01;
  int output_stride = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  bool zero_noise = false;
};

struct LimitSummary {
  double t = 0.0;
  std::vector<double> mean, m2;
};

struct LimitTrajectory {
  std::vector<LimitSummary> summaries;
  Ensemble final_ensemble;
};

// Assembles the averaged drift, correction drifts and effective diffusion of
// the limit equation from the invariant measure and the Poisson solution, and
// simulates the limit McKean-Vlasov SDE.
class HomogenizedModel {
 public:
  HomogenizedModel(ModelSpec model, HomogenizeConfig cfg);

  const ModelSpec& model() const { return model_; }
  const HomogenizeConfig& config() const { return cfg_; }

  // Invariant measure machinery for a given slow law (cached by content).
  const InvariantMeasureEstimate& zeta_for(const Ensemble& mu) const;
  const Ensemble& quad_nodes_for(const Ensemble& mu) const;
  const Ensemble& zeta_sub_for(const Ensemble& mu) const;
  std::shared_ptr<PoissonEvaluator> evaluator_at(PointView x, const Ensemble& mu) const;

  // bar F(x, mu) = <F(x, mu, ., zeta), zeta>, bootstrap SE.
  VectorEstimate averaged_drift(PointView x, const Ensemble& mu) const;
  // overline{G G*} + 2 overline{H Phi^T}; PSD is checked downstream.
  MatrixEstimate averaged_diffusion_sq(PointView x, const Ensemble& mu) const;
  CorrectionDrifts correction_drifts(PointView x, const Ensemble& mu) const;

  LimitTrajectory simulate_limit(const Ensemble& xi, double T,
                                 const LimitRunConfig& cfg) const;

 private:
  struct MuContext {
    InvariantMeasureEstimate zeta;
    Ensemble quad_nodes;
    Ensemble zeta_sub;
  };
  struct CellCoeffs {
    std::vector<double> corr_drift;  // h_dx + c_dy combined, R^{d1}
    NuCorrectionField c_dnu;
    Eigen::MatrixXd diffusion_sqrt;
  };

  const MuContext& context_for(const Ensemble& mu) const;
  CellCoeffs build_cell(PointView x, const Ensemble& mu) const;
  std::int64_t cell_key_x(double x) const;

  ModelSpec model_;
  HomogenizeConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<std::uint64_t, MuContext> mu_cache_;
};

// Example-1.2 constants for Langevin-shaped models (d1 = d2 = 1):
//   c1 = <F . dPhi/dy, zeta>, c2 = double quadrature of F(y~) dPhi/dnu(y)(y~),
//   c3 = <H . Phi, zeta>.
LangevinConstants langevin_constants(const ModelSpec& model,
                                     const HomogenizeConfig& cfg);

}  // namespace mvh

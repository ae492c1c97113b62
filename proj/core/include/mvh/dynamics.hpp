#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mvh/ensemble.hpp"
#include "mvh/model.hpp"
#include "mvh/rng.hpp"

namespace mvh {

// Coupled pair of slow/fast ensembles; particle i carries (X_i, Y_i).
struct SlowFastState {
  Ensemble slow;  // d1
  Ensemble fast;  // d2
  double t = 0.0;
  double eps = 1.0;
};

enum class Scheme { EulerMaruyama };

struct IntegratorConfig {
  double h = 1e-3;
  int output_stride = 1;  // steps between recorded summaries
  Scheme scheme = Scheme::EulerMaruyama;
  std::uint64_t seed = 0;
  // Offsets particle stream ids; runs sharing (seed, stream_base) share noise,
  // which is how synchronous couplings and finite-difference pairs are built.
  std::uint64_t stream_base = 0;
  int threads = 1;
  bool zero_noise = false;  // test hook: drift-only stepping
};

struct BlowUpError : std::runtime_error {
  BlowUpError(std::size_t particle_index, double time, const std::string& where)
      : std::runtime_error("blow-up at t=" + std::to_string(time) + " particle " +
                           std::to_string(particle_index) + " in " + where),
        particle(particle_index),
        t(time) {}
  std::size_t particle;
  double t;
};

struct InitialLaw {
  enum class Kind { Point, Gaussian, Sample };
  Kind kind = Kind::Point;
  std::vector<double> point;
  std::vector<double> mean;
  std::vector<double> cov_diag;
  Ensemble sample;

  static InitialLaw point_mass(std::vector<double> z);
  static InitialLaw gaussian(std::vector<double> mean, std::vector<double> cov_diag);
  static InitialLaw from_ensemble(Ensemble e);

  // Deterministic draw: replication for point/sample kinds, seeded normals
  // for the Gaussian kind.
  Ensemble draw(std::size_t n, std::size_t dim, const NoiseSource& noise,
                std::uint64_t stream_tag) const;
};

struct SlowFastSummary {
  double t = 0.0;
  std::vector<double> slow_mean, slow_m2;  // m2 = diagonal second moments
  std::vector<double> fast_mean, fast_m2;
};

struct SlowFastTrajectory {
  std::vector<SlowFastSummary> summaries;
  SlowFastState final_state;
};

struct SlowFastRunSpec {
  double eps = 0.1;
  std::size_t particles = 2;
  double T = 1.0;
  InitialLaw init_slow;
  InitialLaw init_fast;
};

// One Euler-Maruyama step of the coupled system. Every particle reads the
// identical pre-step empirical ensembles; requires cfg.h <= eps^2/10.
SlowFastState step_slow_fast(const SlowFastState& state, const ModelSpec& model,
                             const IntegratorConfig& cfg);
SlowFastState step_slow_fast(const SlowFastState& state, const ModelSpec& model,
                             const IntegratorConfig& cfg, std::uint64_t step_index);

using SlowFastObserver =
    std::function<void(std::size_t step, double t, const SlowFastState&)>;

SlowFastTrajectory simulate_slow_fast(const ModelSpec& model,
                                      const SlowFastRunSpec& spec,
                                      const IntegratorConfig& cfg,
                                      const SlowFastObserver& observer = {});

// Ensemble trajectory on a uniform step grid; snapshots every `stride` steps
// with piecewise-constant holding in between (stride 1 unless the memory cap
// forces thinning).
struct EnsemblePath {
  double h = 0.0;
  int stride = 1;
  std::size_t steps = 0;
  std::vector<Ensemble> snaps;

  const Ensemble& at_step(std::size_t k) const {
    const std::size_t idx = std::min(k / static_cast<std::size_t>(stride),
                                     snaps.size() - 1);
    return snaps[idx];
  }
  const Ensemble& initial() const { return snaps.front(); }
  const Ensemble& terminal() const { return snaps.back(); }
  double t_final() const { return h * static_cast<double>(steps); }
};

// Fast McKean-Vlasov dynamics with the slow law frozen at mu:
//   dY = b(mu, Y, nu_hat) dt + sigma(mu, Y, nu_hat) dW,
// nu_hat being the running empirical law of the N particles.
EnsemblePath simulate_frozen(const ModelSpec& model, const Ensemble& mu,
                             const Ensemble& nu0, double T,
                             const IntegratorConfig& cfg,
                             std::size_t memory_cap_doubles = 25'000'000);

// Replicates particles round-robin up to n (same empirical law).
Ensemble replicate_to(const Ensemble& e, std::size_t n);

// Tagged particles whose law argument is read from a precomputed frozen path
// (time-inhomogeneous SDE), not from their own empirical law.
class DecoupledStepper {
 public:
  // states: M x d2 initial conditions. cfg.h must match path.h.
  DecoupledStepper(const ModelSpec& model, Ensemble mu, const EnsemblePath& path,
                   Ensemble states, const IntegratorConfig& cfg);

  void step();
  const Ensemble& states() const { return states_; }
  const Ensemble& law() const { return path_->at_step(step_); }
  std::size_t step_index() const { return step_; }
  double t() const { return static_cast<double>(step_) * cfg_.h; }

 private:
  const ModelSpec* model_;
  Ensemble mu_;
  const EnsemblePath* path_;
  Ensemble states_;
  IntegratorConfig cfg_;
  std::size_t step_ = 0;
};

struct DecoupledBundle {
  std::vector<double> times;
  std::vector<Ensemble> snapshots;  // each M x d2
};

// M tagged paths started from y0 (or drawn from the path's initial law when
// y0 is empty), following the decoupled dynamics up to T.
DecoupledBundle simulate_decoupled(const ModelSpec& model, const Ensemble& mu,
                                   PointView y0, const EnsemblePath& frozen_path,
                                   double T, std::size_t paths,
                                   const IntegratorConfig& cfg);

struct TangentSummary {
  double t = 0.0;
  double mean_sq_norm = 0.0;  // E ||dY/dy||_F^2 over paths
};

struct TangentTrajectory {
  std::vector<TangentSummary> summaries;
  // Terminal per-path Jacobians, row-major d2 x d2 each.
  std::vector<std::vector<double>> terminal_jacobians;
};

// Co-evolves first-order tangent flows dJ = (db/dy) J dt + (dsigma/dy) J dW
// alongside tagged paths; J(0) = I. Uses analytic Jacobian evaluators when the
// model provides them, central differences (step 1e-5 (1+|y|)) otherwise.
TangentTrajectory tangent_flow_y(const ModelSpec& model, const Ensemble& mu,
                                 PointView y0, const EnsemblePath& frozen_path,
                                 double T, std::size_t paths,
                                 const IntegratorConfig& cfg);

struct ErgodicityDiagnostics {
  std::vector<double> times;
  std::vector<double> w2_to_final;
  std::vector<double> w2_se;  // bootstrap SE per grid point
  double fitted_rate = 0.0;       // lambda-hat
  double fitted_prefactor = 0.0;  // C-hat
  double final_w2_gap = 0.0;      // last doubling-window gap
};

struct InvariantMeasureEstimate {
  Ensemble zeta;
  double burn_in = 0.0;
  std::uint64_t model_params_hash = 0;
  ErgodicityDiagnostics diagnostics;
  bool converged = false;
};

struct InvariantOptions {
  InitialLaw nu0;
  std::size_t particles = 2000;
  double stationarity_tol = 1e-2;
  double max_T = 64.0;
  double window0 = 0.25;  // first doubling-window length
  int w2_bootstrap = 16;
};

// Runs the frozen dynamics, monitors W2 between snapshots separated by a
// doubling window, stops when the gap drops below tol (or flags
// non-converged at max_T), and fits log W2-to-terminal against t.
InvariantMeasureEstimate estimate_invariant(const ModelSpec& model,
                                            const Ensemble& mu,
                                            const IntegratorConfig& cfg,
                                            const InvariantOptions& opts);

std::uint64_t model_params_hash(const ModelSpec& model);

}  // namespace mvh

#include "mvh/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mvh/measure.hpp"
#include "mvh/parallel.hpp"
#include "mvh/stats.hpp"

namespace mvh {

namespace {

constexpr double kStepGuardFactor = 10.0;  // h <= eps^2/10, hard precondition

void require_finite_point(PointView z, std::size_t particle, double t,
                          const char* where) {
  for (double v : z)
    if (!std::isfinite(v)) throw BlowUpError(particle, t, where);
}

std::vector<double> diagonal_second_moment(const Ensemble& e) {
  std::vector<double> m(e.dim(), 0.0);
  for (std::size_t i = 0; i < e.count(); ++i) {
    const auto z = e.particle(i);
    for (std::size_t k = 0; k < e.dim(); ++k) m[k] += z[k] * z[k];
  }
  for (auto& v : m) v /= static_cast<double>(e.count());
  return m;
}

SlowFastSummary summarize(double t, const SlowFastState& s) {
  SlowFastSummary out;
  out.t = t;
  out.slow_mean = s.slow.mean();
  out.slow_m2 = diagonal_second_moment(s.slow);
  out.fast_mean = s.fast.mean();
  out.fast_m2 = diagonal_second_moment(s.fast);
  return out;
}

}  // namespace

InitialLaw InitialLaw::point_mass(std::vector<double> z) {
  InitialLaw law;
  law.kind = Kind::Point;
  law.point = std::move(z);
  return law;
}

InitialLaw InitialLaw::gaussian(std::vector<double> mean,
                                std::vector<double> cov_diag) {
  InitialLaw law;
  law.kind = Kind::Gaussian;
  law.mean = std::move(mean);
  law.cov_diag = std::move(cov_diag);
  return law;
}

InitialLaw InitialLaw::from_ensemble(Ensemble e) {
  InitialLaw law;
  law.kind = Kind::Sample;
  law.sample = std::move(e);
  return law;
}

Ensemble InitialLaw::draw(std::size_t n, std::size_t dim, const NoiseSource& noise,
                          std::uint64_t stream_tag) const {
  switch (kind) {
    case Kind::Point: {
      if (point.size() != dim)
        throw std::invalid_argument("InitialLaw: point dimension mismatch");
      return Ensemble::from_point(point, n);
    }
    case Kind::Gaussian: {
      if (mean.size() != dim || cov_diag.size() != dim)
        throw std::invalid_argument("InitialLaw: gaussian dimension mismatch");
      Ensemble e(n, dim);
      for (std::size_t i = 0; i < n; ++i) {
        auto z = e.mutable_particle(i);
        for (std::size_t k = 0; k < dim; ++k) {
          const double xi = noise.normal(stream_tag, i * dim + k);
          z[k] = mean[k] + std::sqrt(std::max(0.0, cov_diag[k])) * xi;
        }
      }
      return e;
    }
    case Kind::Sample: {
      if (sample.dim() != dim)
        throw std::invalid_argument("InitialLaw: sample dimension mismatch");
      return replicate_to(sample, n);
    }
  }
  throw std::logic_error("InitialLaw: unknown kind");
}

Ensemble replicate_to(const Ensemble& e, std::size_t n) {
  Ensemble out(n, e.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = e.particle(i % e.count());
    std::copy(src.begin(), src.end(), out.mutable_particle(i).begin());
  }
  return out;
}

SlowFastState step_slow_fast(const SlowFastState& state, const ModelSpec& model,
                             const IntegratorConfig& cfg) {
  const auto k = static_cast<std::uint64_t>(std::llround(state.t / cfg.h));
  return step_slow_fast(state, model, cfg, k);
}

SlowFastState step_slow_fast(const SlowFastState& state, const ModelSpec& model,
                             const IntegratorConfig& cfg,
                             std::uint64_t step_index) {
  const double eps = state.eps;
  if (!(eps > 0.0)) throw std::invalid_argument("step_slow_fast: eps must be positive");
  if (!(cfg.h > 0.0)) throw std::invalid_argument("step_slow_fast: h must be positive");
  if (cfg.h > eps * eps / kStepGuardFactor)
    throw std::invalid_argument("step_slow_fast: step guard h <= eps^2/10 violated");
  if (state.slow.count() != state.fast.count())
    throw std::invalid_argument("step_slow_fast: slow/fast particle counts differ");

  const std::size_t n = state.slow.count();
  const std::size_t d1 = model.d1, d2 = model.d2;
  const double h = cfg.h;
  const double sqh = std::sqrt(h);

  SlowFastState next = state;
  next.t = state.t + h;

  const NoiseSource noise_slow(cfg.seed, NoiseDomain::SlowFastSlow);
  const NoiseSource noise_fast(cfg.seed, NoiseDomain::SlowFastFast);

  // Frozen snapshot discipline: every particle reads the pre-step ensembles.
  const Ensemble& mu = state.slow;
  const Ensemble& nu = state.fast;

  parallel_for(n, cfg.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> f(d1), hh(d1), g(d1 * d1), c(d2), b(d2), sig(d2 * d2);
    std::vector<double> xi1(d1, 0.0), xi2(d2, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = state.slow.particle(i);
      const auto y = state.fast.particle(i);
      model.coefficients.F(x, mu, y, nu, f);
      model.coefficients.H(x, mu, y, nu, hh);
      model.coefficients.G(x, mu, y, nu, g);
      model.coefficients.c(x, mu, y, nu, c);
      model.coefficients.b(mu, y, nu, b);
      model.coefficients.sigma(mu, y, nu, sig);
      if (!cfg.zero_noise) {
        noise_slow.normals(cfg.stream_base + i, step_index * d1, xi1);
        noise_fast.normals(cfg.stream_base + i, step_index * d2, xi2);
      }
      auto xn = next.slow.mutable_particle(i);
      for (std::size_t r = 0; r < d1; ++r) {
        double dw = 0.0;
        for (std::size_t l = 0; l < d1; ++l) dw += g[r * d1 + l] * xi1[l];
        xn[r] = x[r] + (f[r] + hh[r] / eps) * h + sqh * dw;
      }
      auto yn = next.fast.mutable_particle(i);
      for (std::size_t r = 0; r < d2; ++r) {
        double dw = 0.0;
        for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi2[l];
        yn[r] = y[r] + (c[r] / eps + b[r] / (eps * eps)) * h + (sqh / eps) * dw;
      }
      require_finite_point(xn, i, next.t, "slow channel");
      require_finite_point(yn, i, next.t, "fast channel");
    }
  });
  return next;
}

SlowFastTrajectory simulate_slow_fast(const ModelSpec& model,
                                      const SlowFastRunSpec& spec,
                                      const IntegratorConfig& cfg,
                                      const SlowFastObserver& observer) {
  if (spec.particles < 2)
    throw std::invalid_argument("simulate_slow_fast: N >= 2 required");
  if (spec.T < 0.0) throw std::invalid_argument("simulate_slow_fast: T >= 0");

  const NoiseSource init_noise(cfg.seed, NoiseDomain::InitialLaw);
  SlowFastState state;
  state.eps = spec.eps;
  state.t = 0.0;
  state.slow = spec.init_slow.draw(spec.particles, model.d1, init_noise, 0);
  state.fast = spec.init_fast.draw(spec.particles, model.d2, init_noise, 1);

  const auto steps =
      static_cast<std::size_t>(std::llround(std::ceil(spec.T / cfg.h - 1e-12)));

  SlowFastTrajectory traj;
  traj.summaries.push_back(summarize(0.0, state));
  if (observer) observer(0, 0.0, state);

  const std::size_t stride = std::max(1, cfg.output_stride);
  for (std::size_t k = 0; k < steps; ++k) {
    state = step_slow_fast(state, model, cfg, k);
    state.t = static_cast<double>(k + 1) * cfg.h;  // exact grid time
    if (observer) observer(k + 1, state.t, state);
    if ((k + 1) % stride == 0 || k + 1 == steps)
      traj.summaries.push_back(summarize(state.t, state));
  }
  traj.final_state = std::move(state);
  return traj;
}

EnsemblePath simulate_frozen(const ModelSpec& model, const Ensemble& mu,
                             const Ensemble& nu0, double T,
                             const IntegratorConfig& cfg,
                             std::size_t memory_cap_doubles) {
  if (mu.dim() != model.d1)
    throw std::invalid_argument("simulate_frozen: mu dimension mismatch");
  if (nu0.dim() != model.d2)
    throw std::invalid_argument("simulate_frozen: nu0 dimension mismatch");
  if (!(cfg.h > 0.0)) throw std::invalid_argument("simulate_frozen: h must be positive");

  const std::size_t n = nu0.count();
  const std::size_t d2 = model.d2;
  const auto steps =
      static_cast<std::size_t>(std::llround(std::ceil(T / cfg.h - 1e-12)));

  EnsemblePath path;
  path.h = cfg.h;
  path.steps = steps;
  const std::size_t per_snap = n * d2;
  std::size_t stride = 1;
  if ((steps + 1) * per_snap > memory_cap_doubles && per_snap > 0)
    stride = (steps + 1) * per_snap / memory_cap_doubles + 1;
  path.stride = static_cast<int>(stride);
  path.snaps.reserve(steps / stride + 2);

  const NoiseSource noise(cfg.seed, NoiseDomain::Frozen);
  const double sqh = std::sqrt(cfg.h);

  Ensemble cur = nu0;
  Ensemble nxt = nu0;
  path.snaps.push_back(cur);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t_next = static_cast<double>(k + 1) * cfg.h;
    parallel_for(n, cfg.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> b(d2), sig(d2 * d2), xi(d2, 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const auto y = cur.particle(i);
        model.coefficients.b(mu, y, cur, b);
        model.coefficients.sigma(mu, y, cur, sig);
        if (!cfg.zero_noise) noise.normals(cfg.stream_base + i, k * d2, xi);
        auto yn = nxt.mutable_particle(i);
        for (std::size_t r = 0; r < d2; ++r) {
          double dw = 0.0;
          for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi[l];
          yn[r] = y[r] + b[r] * cfg.h + sqh * dw;
        }
        require_finite_point(yn, i, t_next, "frozen equation");
      }
    });
    std::swap(cur, nxt);
    if ((k + 1) % stride == 0 || k + 1 == steps) path.snaps.push_back(cur);
  }
  if (path.snaps.empty()) path.snaps.push_back(cur);
  return path;
}

DecoupledStepper::DecoupledStepper(const ModelSpec& model, Ensemble mu,
                                   const EnsemblePath& path, Ensemble states,
                                   const IntegratorConfig& cfg)
    : model_(&model),
      mu_(std::move(mu)),
      path_(&path),
      states_(std::move(states)),
      cfg_(cfg) {
  if (states_.dim() != model.d2)
    throw std::invalid_argument("DecoupledStepper: state dimension mismatch");
  if (std::abs(cfg_.h - path.h) > 1e-12 * std::max(1.0, std::abs(path.h)))
    throw std::invalid_argument("DecoupledStepper: step grid mismatch with frozen path");
}

void DecoupledStepper::step() {
  if (step_ >= path_->steps)
    throw std::invalid_argument("DecoupledStepper: stepping past the frozen path");
  const std::size_t d2 = model_->d2;
  const Ensemble& law = path_->at_step(step_);
  const double sqh = std::sqrt(cfg_.h);
  const NoiseSource noise(cfg_.seed, NoiseDomain::Decoupled);
  const std::size_t m = states_.count();
  Ensemble next = states_;
  const double t_next = static_cast<double>(step_ + 1) * cfg_.h;
  parallel_for(m, cfg_.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> b(d2), sig(d2 * d2), xi(d2, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto y = states_.particle(i);
      model_->coefficients.b(mu_, y, law, b);
      model_->coefficients.sigma(mu_, y, law, sig);
      if (!cfg_.zero_noise) noise.normals(cfg_.stream_base + i, step_ * d2, xi);
      auto yn = next.mutable_particle(i);
      for (std::size_t r = 0; r < d2; ++r) {
        double dw = 0.0;
        for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi[l];
        yn[r] = y[r] + b[r] * cfg_.h + sqh * dw;
      }
      require_finite_point(yn, i, t_next, "decoupled equation");
    }
  });
  states_ = std::move(next);
  ++step_;
}

DecoupledBundle simulate_decoupled(const ModelSpec& model, const Ensemble& mu,
                                   PointView y0, const EnsemblePath& frozen_path,
                                   double T, std::size_t paths,
                                   const IntegratorConfig& cfg) {
  const auto steps =
      static_cast<std::size_t>(std::llround(std::ceil(T / cfg.h - 1e-12)));
  if (steps > frozen_path.steps)
    throw std::invalid_argument("simulate_decoupled: frozen path does not cover [0,T]");

  Ensemble init = y0.empty()
                      ? replicate_to(frozen_path.initial(), paths)
                      : Ensemble::from_point(y0, paths);
  DecoupledStepper stepper(model, mu, frozen_path, std::move(init), cfg);

  DecoupledBundle bundle;
  const std::size_t stride = std::max(1, cfg.output_stride);
  bundle.times.push_back(0.0);
  bundle.snapshots.push_back(stepper.states());
  for (std::size_t k = 0; k < steps; ++k) {
    stepper.step();
    if ((k + 1) % stride == 0 || k + 1 == steps) {
      bundle.times.push_back(stepper.t());
      bundle.snapshots.push_back(stepper.states());
    }
  }
  return bundle;
}

namespace {

// Central-difference Jacobians used when the model carries no analytic ones.
void fd_b_jacobian(const ModelSpec& model, const Ensemble& mu, PointView y,
                   const Ensemble& law, MutView out, std::vector<double>& scratch) {
  const std::size_t d2 = model.d2;
  double ynorm = 0.0;
  for (double v : y) ynorm += v * v;
  const double h = 1e-5 * (1.0 + std::sqrt(ynorm));
  std::vector<double> yp(y.begin(), y.end());
  scratch.resize(2 * d2);
  MutView up(scratch.data(), d2), dn(scratch.data() + d2, d2);
  for (std::size_t k = 0; k < d2; ++k) {
    yp[k] = y[k] + h;
    model.coefficients.b(mu, yp, law, up);
    yp[k] = y[k] - h;
    model.coefficients.b(mu, yp, law, dn);
    yp[k] = y[k];
    for (std::size_t i = 0; i < d2; ++i)
      out[i * d2 + k] = (up[i] - dn[i]) / (2.0 * h);
  }
}

void fd_sigma_jacobian(const ModelSpec& model, const Ensemble& mu, PointView y,
                       const Ensemble& law, MutView out,
                       std::vector<double>& scratch) {
  const std::size_t d2 = model.d2;
  double ynorm = 0.0;
  for (double v : y) ynorm += v * v;
  const double h = 1e-5 * (1.0 + std::sqrt(ynorm));
  std::vector<double> yp(y.begin(), y.end());
  scratch.resize(2 * d2 * d2);
  MutView up(scratch.data(), d2 * d2), dn(scratch.data() + d2 * d2, d2 * d2);
  for (std::size_t k = 0; k < d2; ++k) {
    yp[k] = y[k] + h;
    model.coefficients.sigma(mu, yp, law, up);
    yp[k] = y[k] - h;
    model.coefficients.sigma(mu, yp, law, dn);
    yp[k] = y[k];
    for (std::size_t i = 0; i < d2; ++i)
      for (std::size_t l = 0; l < d2; ++l)
        out[(i * d2 + l) * d2 + k] = (up[i * d2 + l] - dn[i * d2 + l]) / (2.0 * h);
  }
}

}  // namespace

TangentTrajectory tangent_flow_y(const ModelSpec& model, const Ensemble& mu,
                                 PointView y0, const EnsemblePath& frozen_path,
                                 double T, std::size_t paths,
                                 const IntegratorConfig& cfg) {
  const auto steps =
      static_cast<std::size_t>(std::llround(std::ceil(T / cfg.h - 1e-12)));
  if (steps > frozen_path.steps)
    throw std::invalid_argument("tangent_flow_y: frozen path does not cover [0,T]");
  const std::size_t d2 = model.d2;

  Ensemble states = Ensemble::from_point(y0, paths);
  // Jacobians start at the identity.
  std::vector<double> jac(paths * d2 * d2, 0.0);
  for (std::size_t m = 0; m < paths; ++m)
    for (std::size_t r = 0; r < d2; ++r) jac[m * d2 * d2 + r * d2 + r] = 1.0;

  const NoiseSource noise(cfg.seed, NoiseDomain::Decoupled);
  const double sqh = std::sqrt(cfg.h);

  TangentTrajectory out;
  auto record = [&](double t) {
    double msq = 0.0;
    for (double v : jac) msq += v * v;
    out.summaries.push_back({t, msq / static_cast<double>(paths)});
  };
  record(0.0);

  const std::size_t stride = std::max(1, cfg.output_stride);
  std::vector<double> next_jac(jac.size());
  Ensemble next = states;
  for (std::size_t k = 0; k < steps; ++k) {
    const Ensemble& law = frozen_path.at_step(k);
    const double t_next = static_cast<double>(k + 1) * cfg.h;
    parallel_for(paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> b(d2), sig(d2 * d2), xi(d2, 0.0);
      std::vector<double> bj(d2 * d2), sj(d2 * d2 * d2), scratch;
      for (std::size_t m = begin; m < end; ++m) {
        const auto y = states.particle(m);
        model.coefficients.b(mu, y, law, b);
        model.coefficients.sigma(mu, y, law, sig);
        if (model.coefficients.b_jac_y)
          model.coefficients.b_jac_y(mu, y, law, bj);
        else
          fd_b_jacobian(model, mu, y, law, bj, scratch);
        if (model.coefficients.sigma_jac_y)
          model.coefficients.sigma_jac_y(mu, y, law, sj);
        else
          fd_sigma_jacobian(model, mu, y, law, sj, scratch);
        if (!cfg.zero_noise) noise.normals(cfg.stream_base + m, k * d2, xi);

        const double* J = jac.data() + m * d2 * d2;
        double* Jn = next_jac.data() + m * d2 * d2;
        // dJ_ij = (db_i/dy_k) J_kj dt + (dsigma_il/dy_k) J_kj dW_l
        for (std::size_t i = 0; i < d2; ++i) {
          for (std::size_t j = 0; j < d2; ++j) {
            double drift = 0.0;
            for (std::size_t kk = 0; kk < d2; ++kk)
              drift += bj[i * d2 + kk] * J[kk * d2 + j];
            double diff = 0.0;
            for (std::size_t l = 0; l < d2; ++l) {
              double a = 0.0;
              for (std::size_t kk = 0; kk < d2; ++kk)
                a += sj[(i * d2 + l) * d2 + kk] * J[kk * d2 + j];
              diff += a * xi[l];
            }
            Jn[i * d2 + j] = J[i * d2 + j] + drift * cfg.h + diff * sqh;
          }
        }
        auto yn = next.mutable_particle(m);
        for (std::size_t r = 0; r < d2; ++r) {
          double dw = 0.0;
          for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi[l];
          yn[r] = y[r] + b[r] * cfg.h + sqh * dw;
        }
        require_finite_point(yn, m, t_next, "tangent flow");
      }
    });
    std::swap(jac, next_jac);
    states = next;
    if ((k + 1) % stride == 0 || k + 1 == steps) record(t_next);
  }

  out.terminal_jacobians.resize(paths);
  for (std::size_t m = 0; m < paths; ++m)
    out.terminal_jacobians[m] =
        std::vector<double>(jac.begin() + m * d2 * d2, jac.begin() + (m + 1) * d2 * d2);
  return out;
}

std::uint64_t model_params_hash(const ModelSpec& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  eat_bytes(model.name.data(), model.name.size());
  eat_bytes(&model.d1, sizeof(model.d1));
  eat_bytes(&model.d2, sizeof(model.d2));
  for (const auto& [k, v] : model.params) {
    eat_bytes(k.data(), k.size());
    eat_bytes(&v, sizeof(v));
  }
  return h;
}

InvariantMeasureEstimate estimate_invariant(const ModelSpec& model,
                                            const Ensemble& mu,
                                            const IntegratorConfig& cfg,
                                            const InvariantOptions& opts) {
  if (!(opts.max_T > 0.0))
    throw std::invalid_argument("estimate_invariant: max_T must be positive");

  const NoiseSource init_noise(cfg.seed, NoiseDomain::InitialLaw);
  Ensemble cur = opts.nu0.draw(opts.particles, model.d2, init_noise, 2);

  // Check times on a sqrt(2)-geometric grid; the stationarity stop compares
  // snapshots one doubling apart (two grid slots).
  std::vector<double> check_times;
  for (double t = opts.window0; t < opts.max_T; t *= std::sqrt(2.0))
    check_times.push_back(t);
  check_times.push_back(opts.max_T);

  const W2Method method = model.d2 == 1 ? W2Method::Exact1D : W2Method::Sliced;

  std::vector<double> times{0.0};
  std::vector<Ensemble> snaps{cur};
  bool converged = false;
  double final_gap = std::numeric_limits<double>::infinity();
  double stop_time = opts.max_T;

  std::size_t done_steps = 0;
  IntegratorConfig seg_cfg = cfg;
  for (std::size_t ci = 0; ci < check_times.size(); ++ci) {
    const auto target_steps = static_cast<std::size_t>(
        std::llround(std::ceil(check_times[ci] / cfg.h - 1e-12)));
    if (target_steps > done_steps) {
      // continue the same noise streams: counters advance with absolute step
      // index, so simulate the increment with a shifted-time wrapper.
      const std::size_t seg = target_steps - done_steps;
      const std::size_t d2 = model.d2;
      const NoiseSource noise(cfg.seed, NoiseDomain::Frozen);
      const double sqh = std::sqrt(cfg.h);
      Ensemble nxt = cur;
      for (std::size_t k = 0; k < seg; ++k) {
        const std::size_t abs_step = done_steps + k;
        const double t_next = static_cast<double>(abs_step + 1) * cfg.h;
        parallel_for(cur.count(), cfg.threads, [&](std::size_t begin, std::size_t end) {
          std::vector<double> b(d2), sig(d2 * d2), xi(d2, 0.0);
          for (std::size_t i = begin; i < end; ++i) {
            const auto y = cur.particle(i);
            model.coefficients.b(mu, y, cur, b);
            model.coefficients.sigma(mu, y, cur, sig);
            if (!cfg.zero_noise)
              noise.normals(cfg.stream_base + i, abs_step * d2, xi);
            auto yn = nxt.mutable_particle(i);
            for (std::size_t r = 0; r < d2; ++r) {
              double dw = 0.0;
              for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi[l];
              yn[r] = y[r] + b[r] * cfg.h + sqh * dw;
            }
            require_finite_point(yn, i, t_next, "frozen equation");
          }
        });
        std::swap(cur, nxt);
      }
      done_steps = target_steps;
    }
    times.push_back(static_cast<double>(done_steps) * cfg.h);
    snaps.push_back(cur);
    if (snaps.size() >= 3) {
      const Ensemble& half = snaps[snaps.size() - 3];  // one doubling back
      final_gap = wasserstein2(half, cur, method);
      if (final_gap < opts.stationarity_tol) {
        converged = true;
        stop_time = times.back();
        break;
      }
    }
  }
  (void)seg_cfg;

  InvariantMeasureEstimate est;
  est.zeta = cur;
  est.burn_in = stop_time;
  est.model_params_hash = model_params_hash(model);
  est.converged = converged;
  est.diagnostics.final_w2_gap = final_gap;
  est.diagnostics.times = times;

  const Ensemble& terminal = cur;
  for (std::size_t j = 0; j < snaps.size(); ++j) {
    const double w2 = wasserstein2(snaps[j], terminal, method);
    est.diagnostics.w2_to_final.push_back(w2);
    double se = 0.0;
    if (opts.w2_bootstrap >= 2) {
      NoiseSource bnoise(cfg.seed ^ 0x5eedULL, NoiseDomain::Bootstrap);
      std::vector<double> vals;
      vals.reserve(opts.w2_bootstrap);
      for (int bb = 0; bb < opts.w2_bootstrap; ++bb) {
        Ensemble ra(snaps[j].count(), snaps[j].dim());
        Ensemble rb(terminal.count(), terminal.dim());
        for (std::size_t i = 0; i < ra.count(); ++i) {
          const double u = bnoise.uniform(2 * j * opts.w2_bootstrap + bb, i);
          auto idx = std::min<std::size_t>(
              static_cast<std::size_t>(u * static_cast<double>(ra.count())),
              ra.count() - 1);
          auto src = snaps[j].particle(idx);
          std::copy(src.begin(), src.end(), ra.mutable_particle(i).begin());
        }
        for (std::size_t i = 0; i < rb.count(); ++i) {
          const double u =
              bnoise.uniform((2 * j + 1) * opts.w2_bootstrap + bb, i + 1000003);
          auto idx = std::min<std::size_t>(
              static_cast<std::size_t>(u * static_cast<double>(rb.count())),
              rb.count() - 1);
          auto src = terminal.particle(idx);
          std::copy(src.begin(), src.end(), rb.mutable_particle(i).begin());
        }
        vals.push_back(wasserstein2(ra, rb, method));
      }
      double m = 0.0;
      for (double v : vals) m += v;
      m /= vals.size();
      double q = 0.0;
      for (double v : vals) q += (v - m) * (v - m);
      se = std::sqrt(q / (vals.size() - 1));
    }
    est.diagnostics.w2_se.push_back(se);
  }

  // Fit log W2 against t on points meaningfully above the estimator noise
  // floor (the terminal point is identically zero and never enters).
  const W2NoiseFloor floor =
      w2_noise_floor(terminal, method, std::max(8, opts.w2_bootstrap), cfg.seed);
  const double cut = std::max(floor.mean + 3.0 * floor.sd, 1e-14);
  std::vector<double> fx, fy, fw;
  for (std::size_t j = 0; j + 1 < snaps.size(); ++j) {
    const double w2 = est.diagnostics.w2_to_final[j];
    if (w2 > cut) {
      fx.push_back(est.diagnostics.times[j]);
      fy.push_back(std::log(w2));
      const double rel = est.diagnostics.w2_se[j] > 0.0
                             ? est.diagnostics.w2_se[j] / w2
                             : 1.0;
      fw.push_back(1.0 / (rel * rel + 1e-6));
    }
  }
  if (fx.size() >= 2) {
    const LineFit fit = weighted_line_fit(fx, fy, fw);
    est.diagnostics.fitted_rate = -fit.slope;
    est.diagnostics.fitted_prefactor = std::exp(fit.intercept);
  }
  return est;
}

}  // namespace mvh

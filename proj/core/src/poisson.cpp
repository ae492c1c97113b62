#include "mvh/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvh/measure.hpp"
#include "mvh/parallel.hpp"
#include "mvh/stats.hpp"

namespace mvh {

bool CenteringCheck::centered(double n_sigmas, double abs_tol) const {
  for (std::size_t k = 0; k < value.size(); ++k)
    if (std::abs(value[k]) > n_sigmas * se[k] + abs_tol) return false;
  return true;
}

CenteringCheck check_centering(const ModelSpec& model, const SlowCoefficientFn& f,
                               PointView x, const Ensemble& mu,
                               const InvariantMeasureEstimate& zeta_hat,
                               int bootstrap, std::uint64_t seed) {
  if (!zeta_hat.converged)
    throw std::invalid_argument("check_centering: zeta_hat not converged");
  const std::size_t d1 = model.d1;
  const Ensemble& zeta = zeta_hat.zeta;
  CenteringCheck out;
  out.value = quadrature_vec(zeta, d1, [&](PointView y, MutView v) {
    f(x, mu, y, zeta, v);
  });
  out.se.resize(d1, 0.0);
  for (std::size_t k = 0; k < d1; ++k) {
    const std::size_t comp = k;
    out.se[k] = bootstrap_se(
        zeta,
        [&](const Ensemble& res) {
          return quadrature(res, [&](PointView y) {
            std::vector<double> v(d1);
            f(x, mu, y, zeta, v);
            return v[comp];
          });
        },
        bootstrap, seed);
  }
  return out;
}

PoissonEvaluator::PoissonEvaluator(const ModelSpec& model, std::vector<double> x,
                                   Ensemble mu, InvariantMeasureEstimate zeta_hat,
                                   PoissonConfig cfg)
    : model_(&model),
      x_(std::move(x)),
      mu_(std::move(mu)),
      zeta_(std::move(zeta_hat)),
      cfg_(cfg) {
  if (!zeta_.converged)
    throw std::invalid_argument(
        "PoissonEvaluator: refusing a non-converged invariant measure estimate");
  if (cfg_.paths < 2)
    throw std::invalid_argument("PoissonEvaluator: batch must be >= 2");
  if (x_.size() != model.d1)
    throw std::invalid_argument("PoissonEvaluator: x dimension mismatch");

  const double lam = zeta_.diagnostics.fitted_rate;
  const double pref = std::max(zeta_.diagnostics.fitted_prefactor, 1e-6);
  double T;
  if (cfg_.horizon_override > 0.0) {
    T = cfg_.horizon_override;
  } else if (lam > 0.0) {
    T = std::log(std::max(pref / cfg_.truncation_tol, 2.0)) / lam;
    T = std::clamp(T, cfg_.min_horizon, cfg_.max_horizon);
  } else {
    T = cfg_.max_horizon;
  }
  horizon_steps_ =
      static_cast<std::size_t>(std::llround(std::ceil(T / cfg_.h - 1e-12)));
  horizon_ = static_cast<double>(horizon_steps_) * cfg_.h;
  truncation_bound_ = lam > 0.0 ? pref * std::exp(-lam * horizon_) : pref;
}

const EnsemblePath& PoissonEvaluator::frozen_path_for(const Ensemble& nu) const {
  // Replicating atoms round-robin preserves the empirical law exactly, so the
  // upsampled system starts from nu itself.
  const std::size_t n_law = std::max(cfg_.law_particles, nu.count());
  const std::uint64_t key = hash_combine(nu.content_hash(), n_law);

  std::scoped_lock lock(cache_mutex_);
  for (auto it = path_cache_.begin(); it != path_cache_.end(); ++it) {
    if (it->first == key) {
      path_cache_.splice(path_cache_.begin(), path_cache_, it);
      return path_cache_.front().second;
    }
  }
  IntegratorConfig icfg;
  icfg.h = cfg_.h;
  icfg.seed = cfg_.seed;
  icfg.threads = cfg_.threads;
  // Cover 1.5x the horizon so truncation-soundness re-runs reuse the cache.
  EnsemblePath path = simulate_frozen(*model_, mu_, replicate_to(nu, n_law),
                                      1.5 * horizon_ + cfg_.h, icfg);
  path_cache_.emplace_front(key, std::move(path));
  while (path_cache_.size() > 4) path_cache_.pop_back();
  return path_cache_.front().second;
}

namespace {

using VecIntegrand =
    std::function<void(PointView y, const Ensemble& law, MutView out)>;

// Simulates cfg.paths tagged particles from y0 against the frozen law path and
// accumulates per-path trapezoid integrals of the integrand over [0, steps*h].
std::vector<double> sweep_integrals(const ModelSpec& model, const Ensemble& mu,
                                    const PoissonConfig& cfg,
                                    const EnsemblePath& path, PointView y0,
                                    std::size_t dim, const VecIntegrand& integrand,
                                    std::size_t steps) {
  if (steps > path.steps)
    throw std::invalid_argument("poisson sweep: frozen path shorter than horizon");
  const std::size_t m = cfg.paths;
  const std::size_t d2 = model.d2;
  const double sqh = std::sqrt(cfg.h);
  const NoiseSource noise(cfg.seed, NoiseDomain::Decoupled);

  Ensemble states = Ensemble::from_point(y0, m);
  Ensemble next = states;
  std::vector<double> acc(m * dim, 0.0);

  for (std::size_t k = 0; k <= steps; ++k) {
    const Ensemble& law = path.at_step(k);
    const double w = (k == 0 || k == steps) ? cfg.h / 2.0 : cfg.h;
    const bool do_step = k < steps;
    const double t_next = static_cast<double>(k + 1) * cfg.h;
    parallel_for(m, cfg.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> val(dim), b(d2), sig(d2 * d2), xi(d2, 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const auto y = states.particle(i);
        integrand(y, law, val);
        for (std::size_t c = 0; c < dim; ++c) {
          if (!std::isfinite(val[c]))
            throw std::runtime_error("poisson sweep: non-finite integrand");
          acc[i * dim + c] += w * val[c];
        }
        if (!do_step) continue;
        model.coefficients.b(mu, y, law, b);
        model.coefficients.sigma(mu, y, law, sig);
        noise.normals(i, k * d2, xi);
        auto yn = next.mutable_particle(i);
        for (std::size_t r = 0; r < d2; ++r) {
          double dw = 0.0;
          for (std::size_t l = 0; l < d2; ++l) dw += sig[r * d2 + l] * xi[l];
          yn[r] = y[r] + b[r] * cfg.h + sqh * dw;
        }
        for (double v : yn)
          if (!std::isfinite(v)) throw BlowUpError(i, t_next, "poisson sweep");
      }
    });
    if (do_step) std::swap(states, next);
  }
  return acc;
}

MeanSe column_stats(const std::vector<double>& acc, std::size_t dim,
                    std::size_t comp, std::size_t paths) {
  std::vector<double> col(paths);
  for (std::size_t i = 0; i < paths; ++i) col[i] = acc[i * dim + comp];
  return mean_se(col);
}

}  // namespace

PhiEstimate PoissonEvaluator::evaluate_phi(const SlowCoefficientFn& f, PointView y,
                                           const Ensemble& nu) const {
  return evaluate_phi_with_horizon(f, y, nu, 1.0);
}

PhiEstimate PoissonEvaluator::evaluate_phi_with_horizon(const SlowCoefficientFn& f,
                                                        PointView y,
                                                        const Ensemble& nu,
                                                        double horizon_scale) const {
  const std::size_t d1 = model_->d1;
  const EnsemblePath& path = frozen_path_for(nu);
  const auto steps = std::min(
      path.steps, static_cast<std::size_t>(std::llround(
                      std::ceil(horizon_scale * horizon_ / cfg_.h - 1e-12))));
  VecIntegrand integrand = [&](PointView yy, const Ensemble& law, MutView out) {
    f(x_, mu_, yy, law, out);
  };
  const auto acc =
      sweep_integrals(*model_, mu_, cfg_, path, y, d1, integrand, steps);

  PhiEstimate est;
  est.value.resize(d1);
  est.se.resize(d1);
  for (std::size_t c = 0; c < d1; ++c) {
    const MeanSe ms = column_stats(acc, d1, c, cfg_.paths);
    est.value[c] = ms.mean;
    est.se[c] = ms.se;
  }
  est.truncation_bound = truncation_bound_;
  if (cfg_.check_centering) {
    const CenteringCheck cc =
        check_centering(*model_, f, x_, mu_, zeta_, 16, cfg_.seed);
    est.centering_value = cc.value[0];
    est.centering_se = cc.se[0];
    est.centering_warning = !cc.centered();
  }
  return est;
}

std::vector<double> PoissonEvaluator::phi_path_integrals(const SlowCoefficientFn& f,
                                                         std::size_t comp,
                                                         PointView y,
                                                         const Ensemble& nu) const {
  const std::size_t d1 = model_->d1;
  const EnsemblePath& path = frozen_path_for(nu);
  VecIntegrand integrand = [&](PointView yy, const Ensemble& law, MutView out) {
    f(x_, mu_, yy, law, out);
  };
  const auto acc =
      sweep_integrals(*model_, mu_, cfg_, path, y, d1, integrand, horizon_steps_);
  std::vector<double> col(cfg_.paths);
  for (std::size_t i = 0; i < cfg_.paths; ++i) col[i] = acc[i * d1 + comp];
  return col;
}

PhiEstimate PoissonEvaluator::derivative_x(const SlowCoefficientFn& f, PointView y,
                                           const Ensemble& nu, std::size_t k) const {
  const std::size_t d1 = model_->d1;
  if (k >= d1) throw std::invalid_argument("derivative_x: component out of range");
  const double h = cfg_.fd_hx;
  std::vector<double> xp(x_), xm(x_);
  xp[k] += h;
  xm[k] -= h;
  const EnsemblePath& path = frozen_path_for(nu);
  // One sweep; the tagged dynamics do not depend on x.
  VecIntegrand integrand = [&](PointView yy, const Ensemble& law, MutView out) {
    std::vector<double> up(d1), dn(d1);
    f(xp, mu_, yy, law, up);
    f(xm, mu_, yy, law, dn);
    for (std::size_t c = 0; c < d1; ++c) out[c] = (up[c] - dn[c]) / (2.0 * h);
  };
  const auto acc =
      sweep_integrals(*model_, mu_, cfg_, path, y, d1, integrand, horizon_steps_);
  PhiEstimate est;
  est.value.resize(d1);
  est.se.resize(d1);
  for (std::size_t c = 0; c < d1; ++c) {
    const MeanSe ms = column_stats(acc, d1, c, cfg_.paths);
    est.value[c] = ms.mean;
    est.se[c] = ms.se;
  }
  est.truncation_bound = truncation_bound_;
  return est;
}

PhiEstimate PoissonEvaluator::derivative_y(const SlowCoefficientFn& f, PointView y,
                                           const Ensemble& nu, std::size_t k) const {
  const std::size_t d1 = model_->d1;
  const std::size_t d2 = model_->d2;
  if (k >= d2) throw std::invalid_argument("derivative_y: component out of range");
  const double h = cfg_.fd_hy;
  std::vector<double> yp(y.begin(), y.end()), ym(y.begin(), y.end());
  yp[k] += h;
  ym[k] -= h;
  const EnsemblePath& path = frozen_path_for(nu);
  VecIntegrand integrand = [&](PointView yy, const Ensemble& law, MutView out) {
    f(x_, mu_, yy, law, out);
  };
  const auto up =
      sweep_integrals(*model_, mu_, cfg_, path, yp, d1, integrand, horizon_steps_);
  const auto dn =
      sweep_integrals(*model_, mu_, cfg_, path, ym, d1, integrand, horizon_steps_);
  PhiEstimate est;
  est.value.resize(d1);
  est.se.resize(d1);
  std::vector<double> diff(cfg_.paths);
  for (std::size_t c = 0; c < d1; ++c) {
    for (std::size_t i = 0; i < cfg_.paths; ++i)
      diff[i] = (up[i * d1 + c] - dn[i * d1 + c]) / (2.0 * h);
    const MeanSe ms = mean_se(diff);
    est.value[c] = ms.mean;
    est.se[c] = ms.se;
  }
  est.truncation_bound = truncation_bound_;
  return est;
}

PhiEstimate PoissonEvaluator::lions_derivative_nu(const SlowCoefficientFn& f,
                                                  PointView y, const Ensemble& nu,
                                                  std::size_t atom,
                                                  std::size_t k) const {
  const std::size_t d1 = model_->d1;
  if (atom >= nu.count())
    throw std::invalid_argument("lions_derivative_nu: atom out of range");
  if (k >= model_->d2)
    throw std::invalid_argument("lions_derivative_nu: coordinate out of range");
  const double h = cfg_.fd_hnu;
  const double n = static_cast<double>(nu.count());
  const Ensemble nu_shift = nu.with_shifted(atom, k, h);
  VecIntegrand integrand = [&](PointView yy, const Ensemble& law, MutView out) {
    f(x_, mu_, yy, law, out);
  };
  // Sweep each path before requesting the next one; cache eviction would
  // invalidate a held reference.
  const auto base = sweep_integrals(*model_, mu_, cfg_, frozen_path_for(nu), y,
                                    d1, integrand, horizon_steps_);
  const auto shift = sweep_integrals(*model_, mu_, cfg_, frozen_path_for(nu_shift),
                                     y, d1, integrand, horizon_steps_);
  PhiEstimate est;
  est.value.resize(d1);
  est.se.resize(d1);
  std::vector<double> diff(cfg_.paths);
  for (std::size_t c = 0; c < d1; ++c) {
    for (std::size_t i = 0; i < cfg_.paths; ++i)
      diff[i] = n * (shift[i * d1 + c] - base[i * d1 + c]) / h;
    const MeanSe ms = mean_se(diff);
    est.value[c] = ms.mean;
    est.se[c] = ms.se;
  }
  est.truncation_bound = truncation_bound_;
  return est;
}

namespace {

void matmul_sigma_sq(const std::vector<double>& sig, std::size_t d, MutView a) {
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t l = 0; l < d; ++l) s += sig[r * d + l] * sig[c * d + l];
      a[r * d + c] = s;
    }
}

}  // namespace

GeneratorApplication apply_generator_L0(const ModelSpec& model,
                                        const MeasureTestFn& phi,
                                        const Ensemble& mu, PointView y,
                                        const Ensemble& nu, const FdSteps& fd) {
  const std::size_t d2 = model.d2;
  const std::size_t n = nu.count();
  const double hy = fd.hy, hn = fd.hnu;

  auto eval = [&](PointView yy, const Ensemble& nn) {
    const double v = phi(yy, nn);
    if (!std::isfinite(v))
      throw std::runtime_error("apply_generator_L0: non-finite test function");
    return v;
  };

  const double base = eval(y, nu);
  std::vector<double> yv(y.begin(), y.end());

  // grad_y and Hessian_y by central differences.
  std::vector<double> grad(d2), hess(d2 * d2);
  for (std::size_t k = 0; k < d2; ++k) {
    yv[k] = y[k] + hy;
    const double up = eval(yv, nu);
    yv[k] = y[k] - hy;
    const double dn = eval(yv, nu);
    yv[k] = y[k];
    grad[k] = (up - dn) / (2.0 * hy);
    hess[k * d2 + k] = (up - 2.0 * base + dn) / (hy * hy);
  }
  for (std::size_t k = 0; k < d2; ++k)
    for (std::size_t l = k + 1; l < d2; ++l) {
      yv[k] = y[k] + hy;
      yv[l] = y[l] + hy;
      const double pp = eval(yv, nu);
      yv[l] = y[l] - hy;
      const double pm = eval(yv, nu);
      yv[k] = y[k] - hy;
      const double mm = eval(yv, nu);
      yv[l] = y[l] + hy;
      const double mp = eval(yv, nu);
      yv[k] = y[k];
      yv[l] = y[l];
      const double v = (pp - pm - mp + mm) / (4.0 * hy * hy);
      hess[k * d2 + l] = v;
      hess[l * d2 + k] = v;
    }

  std::vector<double> bvec(d2), sig(d2 * d2), amat(d2 * d2);
  model.coefficients.b(mu, y, nu, bvec);
  model.coefficients.sigma(mu, y, nu, sig);
  matmul_sigma_sq(sig, d2, amat);

  GeneratorApplication out;
  for (std::size_t k = 0; k < d2; ++k) {
    out.part_first_order += bvec[k] * grad[k];
    for (std::size_t l = 0; l < d2; ++l)
      out.part_second_order += 0.5 * amat[k * d2 + l] * hess[k * d2 + l];
  }

  // nu-integral: empirical mean over atoms of b . d_nu phi + 1/2 a : d_z d_nu phi.
  double measure_acc = 0.0;
  std::vector<double> bz(d2), sigz(d2 * d2), az(d2 * d2);
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> lions(d2), dlion(d2 * d2);
    for (std::size_t k = 0; k < d2; ++k) {
      const double up = eval(y, nu.with_shifted(i, k, hn));
      const double dn = eval(y, nu.with_shifted(i, k, -hn));
      lions[k] = nn * (up - dn) / (2.0 * hn);
      dlion[k * d2 + k] = nn * (up - 2.0 * base + dn) / (hn * hn);
    }
    for (std::size_t k = 0; k < d2; ++k)
      for (std::size_t l = k + 1; l < d2; ++l) {
        const double pp = eval(y, nu.with_shifted(i, k, hn).with_shifted(i, l, hn));
        const double pm = eval(y, nu.with_shifted(i, k, hn).with_shifted(i, l, -hn));
        const double mp = eval(y, nu.with_shifted(i, k, -hn).with_shifted(i, l, hn));
        const double mm = eval(y, nu.with_shifted(i, k, -hn).with_shifted(i, l, -hn));
        const double v = nn * (pp - pm - mp + mm) / (4.0 * hn * hn);
        dlion[k * d2 + l] = v;
        dlion[l * d2 + k] = v;
      }
    const auto z = nu.particle(i);
    model.coefficients.b(mu, z, nu, bz);
    model.coefficients.sigma(mu, z, nu, sigz);
    matmul_sigma_sq(sigz, d2, az);
    double term = 0.0;
    for (std::size_t k = 0; k < d2; ++k) {
      term += bz[k] * lions[k];
      for (std::size_t l = 0; l < d2; ++l)
        term += 0.5 * az[k * d2 + l] * dlion[k * d2 + l];
    }
    measure_acc += term;
  }
  out.part_measure = measure_acc / nn;
  out.value = out.part_second_order + out.part_first_order + out.part_measure;
  out.std_error = 0.0;
  return out;
}

GeneratorApplication generator_on_phi_hat(const PoissonEvaluator& ev,
                                          const SlowCoefficientFn& f,
                                          std::size_t comp, PointView y,
                                          const Ensemble& nu) {
  const ModelSpec& model = ev.model();
  const std::size_t d2 = model.d2;
  const std::size_t n = nu.count();
  const std::size_t m = ev.config().paths;
  const double hy = ev.config().fd_hy;
  const double hn = ev.config().fd_hnu;
  const double nn = static_cast<double>(n);

  auto integrals = [&](PointView yy, const Ensemble& nnu) {
    return ev.phi_path_integrals(f, comp, yy, nnu);
  };

  const std::vector<double> base = integrals(y, nu);
  std::vector<double> yv(y.begin(), y.end());

  // Per-path gradient/Hessian combinations in y.
  std::vector<std::vector<double>> grad(d2), hess_diag(d2);
  for (std::size_t k = 0; k < d2; ++k) {
    yv[k] = y[k] + hy;
    const auto up = integrals(yv, nu);
    yv[k] = y[k] - hy;
    const auto dn = integrals(yv, nu);
    yv[k] = y[k];
    grad[k].resize(m);
    hess_diag[k].resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      grad[k][i] = (up[i] - dn[i]) / (2.0 * hy);
      hess_diag[k][i] = (up[i] - 2.0 * base[i] + dn[i]) / (hy * hy);
    }
  }
  std::vector<std::vector<double>> hess_off(d2 * d2);
  for (std::size_t k = 0; k < d2; ++k)
    for (std::size_t l = k + 1; l < d2; ++l) {
      yv[k] = y[k] + hy;
      yv[l] = y[l] + hy;
      const auto pp = integrals(yv, nu);
      yv[l] = y[l] - hy;
      const auto pm = integrals(yv, nu);
      yv[k] = y[k] - hy;
      const auto mm = integrals(yv, nu);
      yv[l] = y[l] + hy;
      const auto mp = integrals(yv, nu);
      yv[k] = y[k];
      yv[l] = y[l];
      auto& h = hess_off[k * d2 + l];
      h.resize(m);
      for (std::size_t i = 0; i < m; ++i)
        h[i] = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * hy * hy);
    }

  // Per-path Lions fields at every atom.
  std::vector<std::vector<double>> lions(n * d2), dlion_diag(n * d2);
  std::vector<std::vector<double>> dlion_off(n * d2 * d2);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t k = 0; k < d2; ++k) {
      const auto up = integrals(y, nu.with_shifted(a, k, hn));
      const auto dn = integrals(y, nu.with_shifted(a, k, -hn));
      auto& lk = lions[a * d2 + k];
      auto& dk = dlion_diag[a * d2 + k];
      lk.resize(m);
      dk.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        lk[i] = nn * (up[i] - dn[i]) / (2.0 * hn);
        dk[i] = nn * (up[i] - 2.0 * base[i] + dn[i]) / (hn * hn);
      }
    }
    for (std::size_t k = 0; k < d2; ++k)
      for (std::size_t l = k + 1; l < d2; ++l) {
        const auto pp = integrals(y, nu.with_shifted(a, k, hn).with_shifted(a, l, hn));
        const auto pm = integrals(y, nu.with_shifted(a, k, hn).with_shifted(a, l, -hn));
        const auto mp = integrals(y, nu.with_shifted(a, k, -hn).with_shifted(a, l, hn));
        const auto mm = integrals(y, nu.with_shifted(a, k, -hn).with_shifted(a, l, -hn));
        auto& hoff = dlion_off[(a * d2 + k) * d2 + l];
        hoff.resize(m);
        for (std::size_t i = 0; i < m; ++i)
          hoff[i] = nn * (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * hn * hn);
      }
  }

  std::vector<double> bvec(d2), sig(d2 * d2), amat(d2 * d2);
  model.coefficients.b(ev.mu(), y, nu, bvec);
  model.coefficients.sigma(ev.mu(), y, nu, sig);
  matmul_sigma_sq(sig, d2, amat);
  std::vector<std::vector<double>> bz(n), az(n);
  for (std::size_t a = 0; a < n; ++a) {
    bz[a].resize(d2);
    az[a].resize(d2 * d2);
    std::vector<double> sz(d2 * d2);
    model.coefficients.b(ev.mu(), nu.particle(a), nu, bz[a]);
    model.coefficients.sigma(ev.mu(), nu.particle(a), nu, sz);
    matmul_sigma_sq(sz, d2, az[a]);
  }

  // Assemble the generator sample path by path; the common random numbers
  // make each g_i a coherent draw of the full combination.
  std::vector<double> g(m, 0.0), p2(m, 0.0), p1(m, 0.0), pm_part(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double second = 0.0, first = 0.0;
    for (std::size_t k = 0; k < d2; ++k) {
      first += bvec[k] * grad[k][i];
      second += 0.5 * amat[k * d2 + k] * hess_diag[k][i];
      for (std::size_t l = k + 1; l < d2; ++l)
        second += amat[k * d2 + l] * hess_off[k * d2 + l][i];
    }
    double meas = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t k = 0; k < d2; ++k) {
        meas += bz[a][k] * lions[a * d2 + k][i];
        meas += 0.5 * az[a][k * d2 + k] * dlion_diag[a * d2 + k][i];
        for (std::size_t l = k + 1; l < d2; ++l)
          meas += az[a][k * d2 + l] * dlion_off[(a * d2 + k) * d2 + l][i];
      }
    }
    meas /= nn;
    p2[i] = second;
    p1[i] = first;
    pm_part[i] = meas;
    g[i] = second + first + meas;
  }

  GeneratorApplication out;
  const MeanSe gs = mean_se(g);
  out.value = gs.mean;
  out.std_error = gs.se;
  out.part_second_order = mean_se(p2).mean;
  out.part_first_order = mean_se(p1).mean;
  out.part_measure = mean_se(pm_part).mean;
  return out;
}

ResidualReport poisson_residual(
    const PoissonEvaluator& ev, const SlowCoefficientFn& f,
    const std::vector<std::pair<std::vector<double>, Ensemble>>& probes,
    const std::optional<MeasureTestFn>& phi_analytic) {
  const ModelSpec& model = ev.model();
  const std::size_t d1 = model.d1;
  ResidualReport rep;
  rep.mc_mode = !phi_analytic.has_value();
  if (phi_analytic && d1 != 1)
    throw std::invalid_argument("poisson_residual: analytic mode supports d1 == 1");

  double sq_sum = 0.0;
  for (const auto& [y, nu] : probes) {
    ResidualProbe pr;
    pr.y = y;
    pr.nu_hash = nu.content_hash();
    double worst = 0.0, worst_se = 0.0;
    GeneratorApplication worst_gen;
    for (std::size_t c = 0; c < d1; ++c) {
      GeneratorApplication gen;
      if (phi_analytic) {
        gen = apply_generator_L0(model, *phi_analytic, ev.mu(), y, nu,
                                 {ev.config().fd_hy, ev.config().fd_hnu});
      } else {
        gen = generator_on_phi_hat(ev, f, c, y, nu);
      }
      std::vector<double> fv(d1);
      f(ev.x(), ev.mu(), y, nu, fv);
      const double res = gen.value + fv[c];
      if (std::abs(res) >= std::abs(worst)) {
        worst = res;
        worst_se = gen.std_error;
        worst_gen = gen;
      }
    }
    pr.residual = worst;
    pr.std_error = worst_se;
    pr.fd_budget = 10.0 * (ev.config().fd_hy * ev.config().fd_hy +
                           ev.config().fd_hnu * ev.config().fd_hnu);
    pr.generator = worst_gen;
    rep.max_abs = std::max(rep.max_abs, std::abs(worst));
    sq_sum += worst * worst;
    rep.probes.push_back(std::move(pr));
  }
  if (!probes.empty()) rep.rms = std::sqrt(sq_sum / probes.size());
  return rep;
}

}  // namespace mvh

#include "mvh/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "mvh/measure.hpp"
#include "mvh/rng.hpp"

namespace mvh {

namespace {

double mean1(const Ensemble& e) { return e.cached_mean()[0]; }

bool filled_finite(PointView out) {
  for (double v : out)
    if (!std::isfinite(v)) return false;
  return true;
}

void fill_nan(MutView out) {
  for (auto& v : out) v = std::numeric_limits<double>::quiet_NaN();
}

Ensemble random_ensemble(const NoiseSource& noise, std::uint64_t stream,
                         std::size_t count, std::size_t dim) {
  Ensemble e(count, dim);
  const double center = 4.0 * (noise.uniform(stream, 0) - 0.5);
  const double spread = 0.3 + 1.7 * noise.uniform(stream, 1);
  std::uint64_t ctr = 2;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < dim; ++k)
      e.mutable_particle(i)[k] = center + spread * noise.normal(stream, ctr++);
  return e;
}

}  // namespace

ValidationReport validate_model(const ModelSpec& spec, int probes,
                                std::uint64_t rng_seed, double tolerance) {
  if (probes < 1) throw std::invalid_argument("validate_model: probes >= 1");
  if (!spec.coefficients.F || !spec.coefficients.H || !spec.coefficients.G ||
      !spec.coefficients.c || !spec.coefficients.b || !spec.coefficients.sigma)
    throw std::invalid_argument("validate_model: missing coefficient evaluator");

  ValidationReport rep;
  rep.probes = probes;
  rep.tolerance = tolerance;
  rep.worst_margin = std::numeric_limits<double>::infinity();

  const std::size_t d1 = spec.d1, d2 = spec.d2;
  NoiseSource noise(rng_seed, NoiseDomain::Probe);

  // Structural pass: sentinel-prefilled outputs catch evaluators that leave
  // components unwritten or produce non-finite values.
  {
    const Ensemble mu = random_ensemble(noise, 0, 8, d1);
    const Ensemble nu = random_ensemble(noise, 1, 8, d2);
    std::vector<double> x(d1, 0.5), y(d2, -0.5);
    std::vector<double> out_d1(d1), out_d1d1(d1 * d1), out_d2(d2), out_d2d2(d2 * d2);
    auto check = [&](const char* name, MutView out, auto&& call) {
      fill_nan(out);
      call();
      if (!filled_finite(out)) {
        rep.structural_ok = false;
        rep.message = std::string(name) + ": output not fully written or non-finite";
        return false;
      }
      return true;
    };
    rep.structural_ok = true;
    const auto& cf = spec.coefficients;
    bool ok =
        check("F", out_d1, [&] { cf.F(x, mu, y, nu, out_d1); }) &&
        check("H", out_d1, [&] { cf.H(x, mu, y, nu, out_d1); }) &&
        check("G", out_d1d1, [&] { cf.G(x, mu, y, nu, out_d1d1); }) &&
        check("c", out_d2, [&] { cf.c(x, mu, y, nu, out_d2); }) &&
        check("b", out_d2, [&] { cf.b(mu, y, nu, out_d2); }) &&
        check("sigma", out_d2d2, [&] { cf.sigma(mu, y, nu, out_d2d2); });
    if (!ok) {
      rep.passed = false;
      return rep;
    }
  }

  const double c1 = spec.dissipativity.c1;
  const double c2 = spec.dissipativity.c2;
  rep.dissipativity_ok = true;
  if (!(c2 > c1 && c1 >= 0.0)) {
    rep.dissipativity_ok = false;
    rep.passed = false;
    rep.message = "dissipativity constants must satisfy c2 > c1 >= 0";
    return rep;
  }

  std::vector<double> y1(d2), y2(d2), b1(d2), b2(d2);
  std::vector<double> s1(d2 * d2), s2(d2 * d2);
  const std::size_t nu_count = 12;
  for (int p = 0; p < probes; ++p) {
    const std::uint64_t s = 16 + 8 * static_cast<std::uint64_t>(p);
    const Ensemble mu = random_ensemble(noise, s, 8, d1);
    const Ensemble nu1 = random_ensemble(noise, s + 1, nu_count, d2);
    const Ensemble nu2 = random_ensemble(noise, s + 2, nu_count, d2);
    for (std::size_t k = 0; k < d2; ++k) {
      y1[k] = 2.0 * noise.normal(s + 3, k);
      y2[k] = 2.0 * noise.normal(s + 4, k);
    }
    spec.coefficients.b(mu, y1, nu1, b1);
    spec.coefficients.b(mu, y2, nu2, b2);
    spec.coefficients.sigma(mu, y1, nu1, s1);
    spec.coefficients.sigma(mu, y2, nu2, s2);
    if (!filled_finite(b1) || !filled_finite(b2) || !filled_finite(s1) ||
        !filled_finite(s2))
      throw std::runtime_error("validate_model: non-finite evaluator output");

    double sig_sq = 0.0;
    for (std::size_t k = 0; k < d2 * d2; ++k) {
      const double d = s1[k] - s2[k];
      sig_sq += d * d;
    }
    double b_dy = 0.0, dy2 = 0.0;
    for (std::size_t k = 0; k < d2; ++k) {
      const double dy = y1[k] - y2[k];
      b_dy += (b1[k] - b2[k]) * dy;
      dy2 += dy * dy;
    }
    const double w2 = wasserstein2(nu1, nu2, W2Method::ExactAssignment);
    const double lhs = sig_sq + b_dy;
    const double rhs = c1 * w2 * w2 - c2 * dy2;
    const double margin = rhs - lhs;
    rep.worst_margin = std::min(rep.worst_margin, margin);
    if (margin < -tolerance) ++rep.violations;
  }
  rep.passed = rep.structural_ok && rep.dissipativity_ok && rep.violations == 0;
  if (!rep.passed && rep.message.empty())
    rep.message = "dissipativity inequality violated on " +
                  std::to_string(rep.violations) + " of " +
                  std::to_string(rep.probes) + " probes";
  return rep;
}

ModelSpec builtin_linear_model(const LinearModelParams& p) {
  if (!(p.kappa > p.alpha && p.alpha >= 0.0))
    throw std::invalid_argument("builtin_linear_model: needs kappa > alpha >= 0");
  if (!(p.sigma > 0.0))
    throw std::invalid_argument("builtin_linear_model: needs sigma > 0");

  ModelSpec spec;
  spec.d1 = 1;
  spec.d2 = 1;
  spec.name = "linear";
  spec.params = {{"kappa", p.kappa}, {"alpha", p.alpha},   {"sigma", p.sigma},
                 {"g_slow", p.g_slow}, {"c_const", p.c_const}};

  const double kappa = p.kappa, alpha = p.alpha, s = p.sigma, g = p.g_slow,
               c0 = p.c_const;
  spec.coefficients.F = [](PointView x, const Ensemble&, PointView, const Ensemble&,
                           MutView out) { out[0] = -x[0]; };
  spec.coefficients.H = [](PointView, const Ensemble&, PointView y, const Ensemble&,
                           MutView out) { out[0] = y[0]; };
  spec.coefficients.G = [g](PointView, const Ensemble&, PointView, const Ensemble&,
                            MutView out) { out[0] = g; };
  spec.coefficients.c = [c0](PointView, const Ensemble&, PointView, const Ensemble&,
                             MutView out) { out[0] = c0; };
  spec.coefficients.b = [kappa, alpha](const Ensemble&, PointView y,
                                       const Ensemble& nu, MutView out) {
    out[0] = -kappa * y[0] + alpha * mean1(nu);
  };
  spec.coefficients.sigma = [s](const Ensemble&, PointView, const Ensemble&,
                                MutView out) { out[0] = s; };
  spec.coefficients.b_jac_y = [kappa](const Ensemble&, PointView, const Ensemble&,
                                      MutView out) { out[0] = -kappa; };
  spec.coefficients.sigma_jac_y = [](const Ensemble&, PointView, const Ensemble&,
                                     MutView out) { out[0] = 0.0; };

  // Young's inequality on the cross term gives these constants for any
  // kappa > alpha; c2 - c1 = kappa - alpha is the W2 contraction rate.
  spec.dissipativity = {alpha / 2.0, kappa - alpha / 2.0, true};
  spec.linear_form = LinearClosedForm{kappa, alpha, s, g, c0};
  return spec;
}

ModelSpec builtin_langevin_model(std::size_t dim, LangevinFieldFn F_eval,
                                 LangevinFieldFn H_eval, double beta,
                                 DissipativityParams declared) {
  if (!(beta > 0.0))
    throw std::invalid_argument("builtin_langevin_model: needs beta > 0");
  if (!F_eval || !H_eval)
    throw std::invalid_argument("builtin_langevin_model: missing field evaluator");

  ModelSpec spec;
  spec.d1 = dim;
  spec.d2 = dim;
  spec.name = "langevin";
  spec.params = {{"beta", beta}};
  spec.dissipativity = declared;
  spec.langevin_beta = beta;

  const double noise_coeff = std::sqrt(2.0 / beta);
  spec.coefficients.F = [F_eval](PointView x, const Ensemble& mu, PointView,
                                 const Ensemble&, MutView out) { F_eval(x, mu, out); };
  spec.coefficients.H = [H_eval](PointView, const Ensemble&, PointView y,
                                 const Ensemble& nu, MutView out) { H_eval(y, nu, out); };
  spec.coefficients.G = [noise_coeff, dim](PointView, const Ensemble&, PointView,
                                           const Ensemble&, MutView out) {
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c)
        out[r * dim + c] = (r == c) ? noise_coeff : 0.0;
  };
  spec.coefficients.c = [F_eval](PointView x, const Ensemble& mu, PointView,
                                 const Ensemble&, MutView out) { F_eval(x, mu, out); };
  spec.coefficients.b = [H_eval](const Ensemble&, PointView y, const Ensemble& nu,
                                 MutView out) { H_eval(y, nu, out); };
  spec.coefficients.sigma = [noise_coeff, dim](const Ensemble&, PointView,
                                               const Ensemble&, MutView out) {
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c)
        out[r * dim + c] = (r == c) ? noise_coeff : 0.0;
  };
  spec.coefficients.sigma_jac_y = [dim](const Ensemble&, PointView, const Ensemble&,
                                        MutView out) {
    for (auto& v : out) v = 0.0;
    (void)dim;
  };
  return spec;
}

ModelSpec builtin_langevin_linear(double fa, double fb, double ha, double hb,
                                  double beta) {
  if (!(ha > hb && hb >= 0.0))
    throw std::invalid_argument("builtin_langevin_linear: needs ha > hb >= 0");
  LangevinFieldFn F = [fa, fb](PointView z, const Ensemble& law, MutView out) {
    out[0] = -fa * z[0] + fb * mean1(law);
  };
  LangevinFieldFn H = [ha, hb](PointView z, const Ensemble& law, MutView out) {
    out[0] = -ha * z[0] + hb * mean1(law);
  };
  DissipativityParams d{hb / 2.0, ha - hb / 2.0, true};
  ModelSpec spec = builtin_langevin_model(1, std::move(F), std::move(H), beta, d);
  spec.coefficients.b_jac_y = [ha](const Ensemble&, PointView, const Ensemble&,
                                   MutView out) { out[0] = -ha; };
  spec.params = {{"beta", beta}, {"fa", fa}, {"fb", fb}, {"ha", ha}, {"hb", hb}};
  return spec;
}

}  // namespace mvh

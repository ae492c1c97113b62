#include <doctest.h>

#include <cmath>

#include "mvh/measure.hpp"
#include "mvh/poisson.hpp"
#include "oracles.hpp"

using namespace mvh;

namespace {

ModelSpec linear_model() {
  return builtin_linear_model({2.0, 1.0, 2.0, std::sqrt(2.0), 0.0});
}

InvariantMeasureEstimate make_zeta(const ModelSpec& m, const Ensemble& mu,
                                   std::uint64_t seed, std::size_t n = 4000) {
  IntegratorConfig cfg;
  cfg.h = 0.01;
  cfg.seed = seed;
  InvariantOptions opts;
  opts.nu0 = InitialLaw::gaussian({0.0}, {1.0});
  opts.particles = n;
  opts.stationarity_tol = 0.05;
  opts.max_T = 24.0;
  return estimate_invariant(m, mu, cfg, opts);
}

PoissonConfig small_budget(std::uint64_t seed, std::size_t paths = 2000) {
  PoissonConfig cfg;
  cfg.paths = paths;
  cfg.law_particles = 1000;
  cfg.h = 0.01;
  cfg.truncation_tol = 1e-3;
  cfg.seed = seed;
  cfg.check_centering = false;
  return cfg;
}

struct Fixture {
  ModelSpec model = linear_model();
  Ensemble mu = Ensemble::from_points({0.0, 0.0});
  InvariantMeasureEstimate zeta = make_zeta(model, mu, 51);
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("centering checks") {
  const Fixture& fx = fixture();
  const std::vector<double> x{0.0};

  const CenteringCheck cy = check_centering(fx.model, fx.model.coefficients.H, x,
                                            fx.mu, fx.zeta, 64, 1);
  CHECK(cy.centered());

  const SlowCoefficientFn one = [](PointView, const Ensemble&, PointView,
                                   const Ensemble&, MutView out) { out[0] = 1.0; };
  const CenteringCheck c1 = check_centering(fx.model, one, x, fx.mu, fx.zeta, 64, 1);
  CHECK(c1.value[0] == doctest::Approx(1.0));
  CHECK_FALSE(c1.centered());

  const SlowCoefficientFn hermite = [](PointView, const Ensemble&, PointView y,
                                       const Ensemble&, MutView out) {
    out[0] = y[0] * y[0] - 1.0;
  };
  const CenteringCheck c2 =
      check_centering(fx.model, hermite, x, fx.mu, fx.zeta, 64, 1);
  CHECK(c2.centered());
}

TEST_CASE("evaluator refuses a non-converged invariant estimate") {
  const Fixture& fx = fixture();
  InvariantMeasureEstimate bad = fx.zeta;
  bad.converged = false;
  CHECK_THROWS_AS(
      PoissonEvaluator(fx.model, {0.0}, fx.mu, bad, small_budget(1)),
      std::invalid_argument);
  PoissonConfig tiny = small_budget(1);
  tiny.paths = 1;
  CHECK_THROWS_AS(PoissonEvaluator(fx.model, {0.0}, fx.mu, fx.zeta, tiny),
                  std::invalid_argument);
}

TEST_CASE("MC solution matches the closed form") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(2, 4000));

  // phi(1, delta_0) = 0.5
  {
    const Ensemble nu = Ensemble::from_points({0.0, 0.0, 0.0, 0.0});
    const PhiEstimate phi =
        ev.evaluate_phi(fx.model.coefficients.H, std::vector<double>{1.0}, nu);
    CHECK(std::abs(phi.value[0] - 0.5) <
          3.0 * (phi.se[0] + phi.truncation_bound));
    CHECK(phi.se[0] > 0.0);
  }
  // phi(0, nu with mean 2) = 1.0
  {
    const Ensemble nu = Ensemble::from_points({1.5, 2.5, 2.0, 2.0});
    const PhiEstimate phi =
        ev.evaluate_phi(fx.model.coefficients.H, std::vector<double>{0.0}, nu);
    CHECK(std::abs(phi.value[0] - 1.0) <
          3.0 * (phi.se[0] + phi.truncation_bound));
  }
}

TEST_CASE("zero forcing gives exactly zero") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(3, 128));
  const SlowCoefficientFn zero = [](PointView, const Ensemble&, PointView,
                                    const Ensemble&, MutView out) { out[0] = 0.0; };
  const Ensemble nu = Ensemble::from_points({0.5, -0.5});
  const PhiEstimate phi = ev.evaluate_phi(zero, std::vector<double>{0.3}, nu);
  CHECK(phi.value[0] == 0.0);
  CHECK(phi.se[0] == 0.0);
}

TEST_CASE("linearity under common random numbers") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(4, 512));
  const Ensemble nu = Ensemble::from_points({0.2, -0.6, 1.0});
  const std::vector<double> y{0.8};
  const SlowCoefficientFn f = fx.model.coefficients.H;
  const SlowCoefficientFn f2 = [](PointView, const Ensemble&, PointView yy,
                                  const Ensemble&, MutView out) {
    out[0] = 2.0 * yy[0];
  };
  const SlowCoefficientFn g = [](PointView, const Ensemble&, PointView yy,
                                 const Ensemble& law, MutView out) {
    double m = 0.0;
    for (std::size_t i = 0; i < law.count(); ++i) m += law.value(i, 0);
    out[0] = std::sin(yy[0]) + m / static_cast<double>(law.count());
  };
  const SlowCoefficientFn fg = [&](PointView x, const Ensemble& mu, PointView yy,
                                   const Ensemble& law, MutView out) {
    std::vector<double> a(1), b(1);
    f(x, mu, yy, law, a);
    g(x, mu, yy, law, b);
    out[0] = a[0] + b[0];
  };
  // Doubling the integrand doubles the estimate bitwise (power-of-two scaling
  // commutes with rounding along the identical path sweep).
  const PhiEstimate p1 = ev.evaluate_phi(f, y, nu);
  const PhiEstimate p2 = ev.evaluate_phi(f2, y, nu);
  CHECK(p2.value[0] == 2.0 * p1.value[0]);
  // Additivity holds to rounding under CRN.
  const PhiEstimate pg = ev.evaluate_phi(g, y, nu);
  const PhiEstimate psum = ev.evaluate_phi(fg, y, nu);
  CHECK(psum.value[0] ==
        doctest::Approx(p1.value[0] + pg.value[0]).epsilon(1e-12));
}

TEST_CASE("x-derivative of an x-independent forcing is exactly zero") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.4}, fx.mu, fx.zeta, small_budget(5, 256));
  const Ensemble nu = Ensemble::from_points({0.0, 1.0});
  const PhiEstimate d =
      ev.derivative_x(fx.model.coefficients.H, std::vector<double>{0.5}, nu, 0);
  CHECK(d.value[0] == 0.0);
  CHECK(d.se[0] == 0.0);
}

TEST_CASE("y-derivative matches 1/kappa") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(6, 2000));
  const Ensemble nu = Ensemble::from_points({0.3, -0.3, 0.9, 0.1});
  for (const double y0 : {-0.5, 0.0, 1.0}) {
    const PhiEstimate d =
        ev.derivative_y(fx.model.coefficients.H, std::vector<double>{y0}, nu, 0);
    CHECK(std::abs(d.value[0] - 0.5) < 3.0 * d.se[0] + 1e-3);
  }
}

TEST_CASE("halving the y step moves the estimate within noise") {
  const Fixture& fx = fixture();
  PoissonConfig a = small_budget(7, 1000);
  PoissonConfig b = a;
  b.fd_hy = a.fd_hy / 2.0;
  const PoissonEvaluator ev_a(fx.model, {0.0}, fx.mu, fx.zeta, a);
  const PoissonEvaluator ev_b(fx.model, {0.0}, fx.mu, fx.zeta, b);
  const Ensemble nu = Ensemble::from_points({0.0, 0.5});
  const std::vector<double> y{0.2};
  const PhiEstimate da = ev_a.derivative_y(fx.model.coefficients.H, y, nu, 0);
  const PhiEstimate db = ev_b.derivative_y(fx.model.coefficients.H, y, nu, 0);
  const double comb = std::sqrt(da.se[0] * da.se[0] + db.se[0] * db.se[0]);
  CHECK(std::abs(da.value[0] - db.value[0]) < 3.0 * comb + 1e-6);
}

TEST_CASE("Lions derivative matches alpha/(kappa(kappa-alpha))") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(8, 2000));
  const Ensemble nu = Ensemble::from_points({0.4, -0.2, 0.8, -0.6});
  const std::vector<double> y{1.0};
  for (std::size_t atom = 0; atom < nu.count(); ++atom) {
    const PhiEstimate d =
        ev.lions_derivative_nu(fx.model.coefficients.H, y, nu, atom, 0);
    CHECK(std::abs(d.value[0] - 0.5) < 3.0 * d.se[0] + 2e-3);
  }
  const SlowCoefficientFn zero = [](PointView, const Ensemble&, PointView,
                                    const Ensemble&, MutView out) { out[0] = 0.0; };
  const PhiEstimate z = ev.lions_derivative_nu(zero, y, nu, 0, 0);
  CHECK(z.value[0] == 0.0);
}

TEST_CASE("Lions field averaged over the stationary sub-ensemble") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(9, 1000));
  Ensemble zsub(8, 1);
  for (std::size_t i = 0; i < 8; ++i)
    zsub.mutable_particle(i)[0] = fx.zeta.zeta.value((i * fx.zeta.zeta.count()) / 8, 0);
  const std::vector<double> y{0.0};
  double acc = 0.0, se_acc = 0.0;
  for (std::size_t atom = 0; atom < zsub.count(); ++atom) {
    const PhiEstimate d =
        ev.lions_derivative_nu(fx.model.coefficients.H, y, zsub, atom, 0);
    acc += d.value[0];
    se_acc += d.se[0];
  }
  acc /= static_cast<double>(zsub.count());
  se_acc /= static_cast<double>(zsub.count());
  CHECK(std::abs(acc - 0.5) < 3.0 * se_acc + 2e-3);
}

TEST_CASE("generator on the closed-form solution") {
  const Fixture& fx = fixture();
  REQUIRE(fx.model.linear_form.has_value());
  const LinearClosedForm lf = *fx.model.linear_form;
  const MeasureTestFn phi = [lf](PointView y, const Ensemble& nu) {
    return lf.phi(y[0], nu.mean()[0]);
  };
  oracles::Lcg rng(33);
  for (int probe = 0; probe < 6; ++probe) {
    const std::vector<double> y{2.0 * rng.normal()};
    std::vector<double> atoms(5);
    for (auto& v : atoms) v = rng.normal();
    const Ensemble nu(atoms, 1);
    const GeneratorApplication gen =
        apply_generator_L0(fx.model, phi, fx.mu, y, nu, {1e-4, 1e-4});
    CHECK(std::abs(gen.value - (-y[0])) < 1e-3);
    CHECK(gen.value ==
          doctest::Approx(gen.part_second_order + gen.part_first_order +
                          gen.part_measure));
  }
}

TEST_CASE("generator of a constant vanishes") {
  const Fixture& fx = fixture();
  const MeasureTestFn phi = [](PointView, const Ensemble&) { return 3.7; };
  const Ensemble nu = Ensemble::from_points({0.1, -0.4});
  const GeneratorApplication gen =
      apply_generator_L0(fx.model, phi, fx.mu, std::vector<double>{0.2}, nu,
                         {1e-4, 1e-4});
  CHECK(gen.value == 0.0);
}

TEST_CASE("generator of the mean observable picks out b") {
  // phi(y, nu) = mean(nu) at nu = delta_z: L0 phi = b(mu, z, nu) = -z for
  // kappa = 2, alpha = 1.
  const Fixture& fx = fixture();
  const MeasureTestFn phi = [](PointView, const Ensemble& nu) {
    return nu.mean()[0];
  };
  const double z = 0.7;
  const Ensemble nu = Ensemble::from_points({z});
  const GeneratorApplication gen = apply_generator_L0(
      fx.model, phi, fx.mu, std::vector<double>{0.0}, nu, {1e-4, 1e-4});
  CHECK(gen.value == doctest::Approx(-z).epsilon(1e-6));
  CHECK(gen.part_second_order == doctest::Approx(0.0));
  CHECK(gen.part_first_order == doctest::Approx(0.0));
}

TEST_CASE("analytic residual over a probe grid") {
  const Fixture& fx = fixture();
  const LinearClosedForm lf = *fx.model.linear_form;
  const MeasureTestFn phi = [lf](PointView y, const Ensemble& nu) {
    return lf.phi(y[0], nu.mean()[0]);
  };
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(10, 128));
  std::vector<std::pair<std::vector<double>, Ensemble>> probes;
  oracles::Lcg rng(44);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> atoms(4);
    for (auto& v : atoms) v = rng.normal();
    probes.emplace_back(std::vector<double>{rng.normal()}, Ensemble(atoms, 1));
  }
  const ResidualReport rep =
      poisson_residual(ev, fx.model.coefficients.H, probes, phi);
  CHECK(rep.max_abs <= 1e-3);
  CHECK_FALSE(rep.mc_mode);
  CHECK(rep.probes.size() == 10);
}

TEST_CASE("MC residual stays within its own error budget") {
  const Fixture& fx = fixture();
  PoissonConfig cfg = small_budget(11, 3000);
  cfg.fd_hy = 0.05;
  cfg.fd_hnu = 0.05;
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, cfg);
  std::vector<std::pair<std::vector<double>, Ensemble>> probes;
  probes.emplace_back(std::vector<double>{0.5},
                      Ensemble::from_points({0.2, -0.2, 0.6, -0.6}));
  const ResidualReport rep = poisson_residual(ev, fx.model.coefficients.H, probes);
  CHECK(rep.mc_mode);
  for (const auto& p : rep.probes) {
    CHECK(std::abs(p.residual) <= 5.0 * (p.std_error + p.fd_budget));
    CHECK(p.std_error > 0.0);
  }
}

TEST_CASE("truncation soundness under a longer horizon") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(12, 2000));
  const Ensemble nu = Ensemble::from_points({0.0, 0.4});
  const std::vector<double> y{1.0};
  const PhiEstimate base = ev.evaluate_phi(fx.model.coefficients.H, y, nu);
  const PhiEstimate longer =
      ev.evaluate_phi_with_horizon(fx.model.coefficients.H, y, nu, 1.5);
  const double comb =
      std::sqrt(base.se[0] * base.se[0] + longer.se[0] * longer.se[0]);
  CHECK(std::abs(longer.value[0] - base.value[0]) <
        ev.config().truncation_tol + 3.0 * comb);
}

TEST_CASE("centering of the MC solution against zeta") {
  const Fixture& fx = fixture();
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, small_budget(13, 1000));
  Ensemble zsub(12, 1);
  for (std::size_t i = 0; i < zsub.count(); ++i)
    zsub.mutable_particle(i)[0] =
        fx.zeta.zeta.value((i * fx.zeta.zeta.count()) / zsub.count(), 0);
  std::vector<double> vals(zsub.count()), ses(zsub.count());
  for (std::size_t i = 0; i < zsub.count(); ++i) {
    const PhiEstimate phi =
        ev.evaluate_phi(fx.model.coefficients.H, zsub.particle(i), zsub);
    vals[i] = phi.value[0];
    ses[i] = phi.se[0] + phi.truncation_bound;
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double sd = 0.0;
  for (double v : vals) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / (vals.size() - 1.0) / vals.size());
  double prop = 0.0;
  for (double s : ses) prop += s * s;
  const double comb =
      std::sqrt(sd * sd + prop / (vals.size() * vals.size()));
  CHECK(std::abs(mean) < 3.0 * comb + 1e-3);
}

TEST_CASE("centering warning is raised for an uncentered forcing") {
  const Fixture& fx = fixture();
  PoissonConfig cfg = small_budget(14, 64);
  cfg.check_centering = true;
  const PoissonEvaluator ev(fx.model, {0.0}, fx.mu, fx.zeta, cfg);
  const SlowCoefficientFn shifted = [](PointView, const Ensemble&, PointView y,
                                       const Ensemble&, MutView out) {
    out[0] = y[0] + 1.0;
  };
  const Ensemble nu = Ensemble::from_points({0.0, 0.2});
  const PhiEstimate phi = ev.evaluate_phi(shifted, std::vector<double>{0.0}, nu);
  CHECK(phi.centering_warning);
  const PhiEstimate ok =
      ev.evaluate_phi(fx.model.coefficients.H, std::vector<double>{0.0}, nu);
  CHECK_FALSE(ok.centering_warning);
}

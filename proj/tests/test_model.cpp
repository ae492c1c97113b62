#include <doctest.h>

#include <cmath>

#include "mvh/model.hpp"
#include "oracles.hpp"

using namespace mvh;

TEST_CASE("builtin linear model structure") {
  const ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, std::sqrt(2.0), 0.0});
  CHECK(m.d1 == 1);
  CHECK(m.d2 == 1);
  REQUIRE(m.linear_form.has_value());
  CHECK(m.linear_form->stationary_variance() == doctest::Approx(1.0));
  CHECK(m.linear_form->phi(1.0, 0.0) == doctest::Approx(0.5));
  CHECK(m.linear_form->phi(0.0, 2.0) == doctest::Approx(1.0));
  CHECK(m.linear_form->dphi_dy() == doctest::Approx(0.5));
  CHECK(m.linear_form->dphi_dnu() == doctest::Approx(0.5));
  CHECK(m.linear_form->limit_diffusion_sq() == doctest::Approx(3.0));
  CHECK(m.dissipativity.c2 - m.dissipativity.c1 == doctest::Approx(1.0));

  CHECK_THROWS_AS(builtin_linear_model({1.0, 1.0, 2.0, 1.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(builtin_linear_model({2.0, 1.0, 0.0, 1.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("coefficient evaluation is pure") {
  const ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, std::sqrt(2.0), 0.0});
  const Ensemble mu = Ensemble::from_points({0.2, -0.4});
  const Ensemble nu = Ensemble::from_points({1.0, 3.0});
  const std::vector<double> x{0.7}, y{-1.3};
  std::vector<double> a(1), b(1);
  m.coefficients.b(mu, y, nu, a);
  m.coefficients.b(mu, y, nu, b);
  CHECK(a[0] == b[0]);
  CHECK(a[0] == doctest::Approx(-2.0 * (-1.3) + 1.0 * 2.0));
  m.coefficients.F(x, mu, y, nu, a);
  m.coefficients.F(x, mu, y, nu, b);
  CHECK(a[0] == b[0]);
  CHECK(a[0] == doctest::Approx(-0.7));
}

TEST_CASE("validate_model passes the linear model") {
  const ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, std::sqrt(2.0), 0.0});
  const ValidationReport rep = validate_model(m, 400, 123);
  CHECK(rep.passed);
  CHECK(rep.structural_ok);
  CHECK(rep.violations == 0);
  CHECK(rep.worst_margin >= -rep.tolerance);
}

TEST_CASE("declared Young constants pass for any kappa > alpha") {
  // c2 = kappa - alpha/2, c1 = alpha/2, probed over 1000 random pairs even
  // close to the degenerate edge.
  for (const double kappa : {1.2, 1.6, 3.0}) {
    const ModelSpec m = builtin_linear_model({kappa, 1.0, 1.5, 1.0, 0.0});
    CHECK(m.dissipativity.c1 == doctest::Approx(0.5));
    CHECK(m.dissipativity.c2 == doctest::Approx(kappa - 0.5));
    const ValidationReport rep = validate_model(m, 1000, 77);
    CHECK(rep.passed);
  }
}

TEST_CASE("anti-dissipative drift fails validation") {
  ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, 1.0, 0.0});
  m.coefficients.b = [](const Ensemble&, PointView y, const Ensemble&, MutView out) {
    out[0] = +y[0];
  };
  const ValidationReport rep = validate_model(m, 200, 5);
  CHECK_FALSE(rep.passed);
  CHECK(rep.violations > 0);
}

TEST_CASE("zero drift cannot be strictly dissipative") {
  ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, 1.0, 0.0});
  m.coefficients.b = [](const Ensemble&, PointView, const Ensemble&, MutView out) {
    out[0] = 0.0;
  };
  m.dissipativity = {0.0, 0.1, true};
  const ValidationReport rep = validate_model(m, 200, 5);
  CHECK_FALSE(rep.passed);
}

TEST_CASE("structural check catches partial writes") {
  ModelSpec m = builtin_linear_model({2.0, 1.0, 2.0, 1.0, 0.0});
  m.d1 = 2;  // declared 2-d but F writes only one component
  m.coefficients.H = [](PointView, const Ensemble&, PointView y, const Ensemble&,
                        MutView out) { out[0] = y[0]; };
  const ValidationReport rep = validate_model(m, 10, 1);
  CHECK_FALSE(rep.passed);
  CHECK_FALSE(rep.structural_ok);
}

TEST_CASE("langevin template wiring") {
  const ModelSpec m = builtin_langevin_linear(1.0, 0.0, 2.0, 0.0, 1.0);
  CHECK(m.langevin_beta.has_value());
  const Ensemble mu = Ensemble::from_points({0.0});
  const Ensemble nu = Ensemble::from_points({0.0});
  const std::vector<double> x{1.0}, y{1.0};
  std::vector<double> out(1);
  // slow drift F + H/eps at eps = 1: -1 + (-2) = -3
  m.coefficients.F(x, mu, y, nu, out);
  const double F = out[0];
  m.coefficients.H(x, mu, y, nu, out);
  const double H = out[0];
  CHECK(F + H == doctest::Approx(-3.0));
  // b := H, c := F per the template
  m.coefficients.b(mu, y, nu, out);
  CHECK(out[0] == doctest::Approx(H));
  m.coefficients.c(x, mu, y, nu, out);
  CHECK(out[0] == doctest::Approx(F));
  // noise channels sqrt(2/beta)
  m.coefficients.G(x, mu, y, nu, out);
  CHECK(out[0] == doctest::Approx(std::sqrt(2.0)));
  m.coefficients.sigma(mu, y, nu, out);
  CHECK(out[0] == doctest::Approx(std::sqrt(2.0)));

  CHECK_THROWS_AS(builtin_langevin_linear(1.0, 0.0, 2.0, 0.0, -1.0),
                  std::invalid_argument);
}

TEST_CASE("slow drift identity between template and composed form") {
  // The template slow drift F + H/eps must reproduce the direct composition
  // on a sample of points, for several eps.
  const ModelSpec m = builtin_langevin_linear(0.7, 0.2, 2.5, 0.5, 2.0);
  const Ensemble mu = Ensemble::from_points({0.4, -0.2, 1.0});
  const Ensemble nu = Ensemble::from_points({0.1, 0.6, -0.8});
  oracles::Lcg rng(13);
  std::vector<double> out(1);
  for (const double eps : {1.0, 0.5, 0.1}) {
    for (int t = 0; t < 20; ++t) {
      const std::vector<double> x{2.0 * rng.normal()};
      const std::vector<double> y{2.0 * rng.normal()};
      m.coefficients.F(x, mu, y, nu, out);
      const double F = out[0];
      m.coefficients.H(x, mu, y, nu, out);
      const double H = out[0];
      const double direct =
          (-0.7 * x[0] + 0.2 * (0.4 - 0.2 + 1.0) / 3.0) +
          (-2.5 * y[0] + 0.5 * (0.1 + 0.6 - 0.8) / 3.0) / eps;
      CHECK(F + H / eps == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero H langevin fails validation") {
  const ModelSpec m = builtin_langevin_model(
      1,
      [](PointView z, const Ensemble&, MutView out) { out[0] = -z[0]; },
      [](PointView, const Ensemble&, MutView out) { out[0] = 0.0; }, 1.0,
      {0.0, 0.1, false});
  const ValidationReport rep = validate_model(m, 100, 3);
  CHECK_FALSE(rep.passed);
}

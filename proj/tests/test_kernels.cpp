#include <doctest.h>

#include <cmath>

#include "stokesbie/geometry.hpp"
#include "stokesbie/kernels.hpp"

using namespace stokesbie;

namespace {

CurveParams star_params(double r, int prongs, double amp) {
  CurveParams p;
  p.kind = CurveKind::Star;
  p.scale = r;
  p.n_prongs = prongs;
  p.amplitude = amp;
  return p;
}

}  // namespace

TEST_CASE("stokeslet matches hand-computed entries") {
  Vec2 x(1.0, 2.0), y(0.5, 1.0);
  double mu = 2.0;
  // r = (0.5, 1), r^2 = 1.25
  double pref = 1.0 / (4 * kPi * mu);
  double lg = -0.5 * std::log(1.25);
  Mat2 s = stokeslet(x, y, mu);
  CHECK(s(0, 0) == doctest::Approx(pref * (lg + 0.25 / 1.25)).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(pref * (0.5 / 1.25)).epsilon(1e-15));
  CHECK(s(1, 0) == doctest::Approx(s(0, 1)).epsilon(1e-16));
  CHECK(s(1, 1) == doctest::Approx(pref * (lg + 1.0 / 1.25)).epsilon(1e-15));

  // Viscosity only scales the kernel.
  Mat2 s1 = stokeslet(x, y, 1.0);
  CHECK(s1(0, 0) == doctest::Approx(2.0 * s(0, 0)).epsilon(1e-15));
}

TEST_CASE("double layer matches hand-computed entries") {
  Vec2 x(0.0, 0.0), y(1.0, 1.0), n(0.0, 1.0);
  // r = (-1, -1), r^2 = 2, r.n = -1
  Mat2 d = double_layer(x, y, n);
  double c = (1.0 / kPi) * (-1.0 / 4.0);  // (r.n / r^2) / r^2
  CHECK(d(0, 0) == doctest::Approx(c * 1.0).epsilon(1e-15));
  CHECK(d(0, 1) == doctest::Approx(c * 1.0).epsilon(1e-15));
  CHECK(d(1, 1) == doctest::Approx(c * 1.0).epsilon(1e-15));
  // Linear in the normal.
  Mat2 dm = double_layer(x, y, -n);
  CHECK((d + dm).norm() < 1e-16);
}

TEST_CASE("coincident evaluation points are rejected") {
  Vec2 x(0.3, -0.2);
  CHECK_THROWS_AS(stokeslet(x, x, 1.0), SingularEvaluationError);
  CHECK_THROWS_AS(double_layer(x, x, Vec2(1, 0)), SingularEvaluationError);
  CHECK_THROWS_AS(pressure_single(x, x), SingularEvaluationError);
  CHECK_THROWS_AS(pressure_double(x, x, Vec2(1, 0), 1.0), SingularEvaluationError);
}

TEST_CASE("stokeslet flow satisfies the Stokes equations away from the source") {
  Vec2 y(0.2, -0.1), f(0.7, -1.3);
  double mu = 1.7, h = 1e-3;
  Vec2 x(1.1, 0.8);
  auto u = [&](const Vec2& p) { return Vec2(stokeslet(p, y, mu) * f); };
  auto pr = [&](const Vec2& p) { return pressure_single(p, y).dot(f); };

  double div = (u(x + Vec2(h, 0)).x() - u(x - Vec2(h, 0)).x() +
                u(x + Vec2(0, h)).y() - u(x - Vec2(0, h)).y()) /
               (2 * h);
  CHECK(std::fabs(div) < 1e-6);

  // mu lap(u) = grad(p)
  Vec2 lap = (u(x + Vec2(h, 0)) + u(x - Vec2(h, 0)) + u(x + Vec2(0, h)) +
              u(x - Vec2(0, h)) - 4.0 * u(x)) /
             (h * h);
  Vec2 gradp((pr(x + Vec2(h, 0)) - pr(x - Vec2(h, 0))) / (2 * h),
             (pr(x + Vec2(0, h)) - pr(x - Vec2(0, h))) / (2 * h));
  CHECK((mu * lap - gradp).norm() < 1e-6);
}

TEST_CASE("double layer flow satisfies the Stokes equations away from the source") {
  Vec2 y(-0.4, 0.3), n = Vec2(0.6, 0.8), g(1.1, 0.4);
  double mu = 0.9, h = 1e-3;
  Vec2 x(0.7, 1.2);
  auto u = [&](const Vec2& p) { return Vec2(double_layer(p, y, n) * g); };
  auto pr = [&](const Vec2& p) { return pressure_double(p, y, n, mu).dot(g); };

  double div = (u(x + Vec2(h, 0)).x() - u(x - Vec2(h, 0)).x() +
                u(x + Vec2(0, h)).y() - u(x - Vec2(0, h)).y()) /
               (2 * h);
  CHECK(std::fabs(div) < 1e-5);

  Vec2 lap = (u(x + Vec2(h, 0)) + u(x - Vec2(h, 0)) + u(x + Vec2(0, h)) +
              u(x - Vec2(0, h)) - 4.0 * u(x)) /
             (h * h);
  Vec2 gradp((pr(x + Vec2(h, 0)) - pr(x - Vec2(h, 0))) / (2 * h),
             (pr(x + Vec2(0, h)) - pr(x - Vec2(0, h))) / (2 * h));
  CHECK((mu * lap - gradp).norm() < 1e-4);
}

TEST_CASE("double layer limit matches the on-curve extrapolation") {
  ParametricCurve c(star_params(1.0, 5, 0.3));
  for (double t0 : {0.4, 2.0}) {
    Vec2 x = c.position(t0);
    Vec2 tang = c.unit_tangent(t0);
    auto probe = [&](double h) {
      return Mat2(double_layer(x, c.position(t0 + h), c.normal(t0 + h)));
    };
    double h = 1e-4;
    Mat2 rich = 2.0 * probe(h / 2) - probe(h);  // kills the O(h) term
    Mat2 lim = double_layer_limit(tang, c.curvature(t0));
    CHECK((rich - lim).norm() < 1e-6);
    // Same from the other side.
    auto probe2 = [&](double h2) {
      return Mat2(double_layer(x, c.position(t0 - h2), c.normal(t0 - h2)));
    };
    Mat2 rich2 = 2.0 * probe2(h / 2) - probe2(h);
    CHECK((rich2 - lim).norm() < 1e-6);
  }
}

TEST_CASE("double layer limit is consistent under normal flips") {
  CurveParams p = star_params(0.7, 4, 0.25);
  ParametricCurve plain(p);
  p.flip_normal = true;
  ParametricCurve flipped(p);
  double t0 = 1.3;
  Vec2 x = plain.position(t0);
  auto probe = [&](const ParametricCurve& c, double h) {
    return Mat2(double_layer(x, c.position(t0 + h), c.normal(t0 + h)));
  };
  double h = 1e-4;
  Mat2 rich = 2.0 * probe(flipped, h / 2) - probe(flipped, h);
  Mat2 lim = double_layer_limit(flipped.unit_tangent(t0), flipped.curvature(t0));
  CHECK((rich - lim).norm() < 1e-6);
}

TEST_CASE("nullspace completion is the weighted normal flux times the normal") {
  Discretization d = panelize(ParametricCurve(star_params(1.0, 3, 0.2)), 8, 6);
  Vec tau(d.n_unknowns());
  for (Index i = 0; i < tau.size(); ++i) tau[i] = std::sin(0.3 * (double)i + 1.0);
  Index node_end = 4 * 6;  // restrict to the first four panels
  Vec out = nullspace_apply(d, tau, node_end);
  double flux = 0;
  for (Index j = 0; j < node_end; ++j)
    flux += d.w[j] * (tau[2 * j] * d.normal[j].x() + tau[2 * j + 1] * d.normal[j].y());
  for (Index i = 0; i < node_end; ++i) {
    CHECK(out[2 * i] == doctest::Approx(d.normal[i].x() * flux).epsilon(1e-14));
    CHECK(out[2 * i + 1] == doctest::Approx(d.normal[i].y() * flux).epsilon(1e-14));
  }
  for (Index i = 2 * node_end; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("component roles follow the formulation") {
  Discretization wall = panelize(ParametricCurve(star_params(2.0, 3, 0.1)), 12, 8);
  CurveParams hp;
  hp.kind = CurveKind::Circle;
  hp.center = Vec2(0.8, 0.0);
  hp.scale = 0.2;
  auto [mixed, plan] = add_holes(wall, {HoleSpec{hp, 6, 8}});

  Formulation fi{FormulationKind::InteriorDirichlet, 1.0};
  ComponentRole ri = component_role(fi, wall, 0);
  CHECK(ri.jump == -0.5);
  CHECK(!ri.single_layer);
  CHECK(ri.in_nullspace);

  Formulation fe{FormulationKind::ExteriorCombined, 1.0};
  ComponentRole re = component_role(fe, wall, 0);
  CHECK(re.jump == 0.5);
  CHECK(re.single_layer);
  CHECK(!re.in_nullspace);

  Formulation fm{FormulationKind::Mixed, 1.0};
  ComponentRole rw = component_role(fm, mixed, 0);
  ComponentRole rh = component_role(fm, mixed, 1);
  CHECK(rw.jump == -0.5);
  CHECK(!rw.single_layer);
  CHECK(rw.in_nullspace);
  CHECK(rh.jump == -0.5);
  CHECK(rh.single_layer);
  CHECK(!rh.in_nullspace);
}

TEST_CASE("target-space directional derivatives match finite differences") {
  const Vec2 y(0.3, -0.1), n(0.6, 0.8), x(1.4, 0.9);
  const double mu = 1.7, h = 1e-6;
  const Vec2 dirs[] = {Vec2(1, 0), Vec2(0, 1), Vec2(0.6, -0.8)};
  for (const Vec2& d : dirs) {
    Mat2 fd_s = (stokeslet(x + h * d, y, mu) - stokeslet(x - h * d, y, mu)) / (2 * h);
    Mat2 an_s = stokeslet_gradient(x, y, mu, d);
    CHECK((fd_s - an_s).norm() <= 1e-8 * (1.0 + an_s.norm()));

    Mat2 fd_d = (double_layer(x + h * d, y, n) - double_layer(x - h * d, y, n)) / (2 * h);
    Mat2 an_d = double_layer_gradient(x, y, n, d);
    CHECK((fd_d - an_d).norm() <= 1e-8 * (1.0 + an_d.norm()));
  }
}

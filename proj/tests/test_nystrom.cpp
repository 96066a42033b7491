#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <random>

#include "stokesbie/nystrom.hpp"

using namespace stokesbie;

namespace {

CurveParams circle(Vec2 c, double r) {
  CurveParams p;
  p.kind = CurveKind::Circle;
  p.center = c;
  p.scale = r;
  return p;
}

CurveParams star(Vec2 c, double r, int prongs, double amp) {
  CurveParams p;
  p.kind = CurveKind::Star;
  p.center = c;
  p.scale = r;
  p.n_prongs = prongs;
  p.amplitude = amp;
  return p;
}

std::shared_ptr<const Discretization> panelize_shared(const CurveParams& p, int n_panels,
                                                      int q) {
  return std::make_shared<Discretization>(panelize(ParametricCurve(p), n_panels, q));
}

Vec dense_solve(const BieAssembler& a, const Vec& g) {
  Mat A = a.full_matrix();
  return Eigen::PartialPivLU<Mat>(A).solve(g);
}

double field_error(const Discretization& d, const Formulation& f, const Vec& tau,
                   const std::vector<Vec2>& targets,
                   const std::vector<StokesletSource>& src) {
  EvaluationResult r = evaluate_solution(d, f, tau, targets);
  double err = 0;
  for (size_t i = 0; i < targets.size(); ++i) {
    Vec2 ref = field_velocity(src, f.mu, targets[i]);
    err = std::max(err, (r.velocity[i] - ref).norm());
  }
  return err;
}

}  // namespace

TEST_CASE("interior velocity field is reproduced from exterior sources") {
  Formulation f{FormulationKind::InteriorDirichlet, 0.7};
  auto d = panelize_shared(circle(Vec2(0.1, -0.2), 1.3), 8, 16);
  auto src = ring_sources(3, Vec2(0.1, -0.2), 3.0);
  Vec g = boundary_data(*d, src, f.mu);
  CHECK(std::fabs(normal_flux(*d, g)) < 1e-12);

  BieAssembler a(d, f);
  Vec tau = dense_solve(a, g);
  std::vector<Vec2> targets = {Vec2(0.1, -0.2), Vec2(0.6, 0.1), Vec2(-0.3, -0.6),
                               Vec2(0.1, 0.5)};
  CHECK(field_error(*d, f, tau, targets, src) < 1e-9);
}

TEST_CASE("interior solve converges fast under panel refinement") {
  Formulation f{FormulationKind::InteriorDirichlet, 1.0};
  auto src = ring_sources(4, Vec2::Zero(), 4.0);
  std::vector<Vec2> targets = {Vec2(0.2, 0.1), Vec2(-0.4, 0.3), Vec2(0.0, -0.5)};
  double prev = 0;
  std::vector<double> errs;
  for (int np : {8, 16, 32}) {
    auto d = panelize_shared(star(Vec2::Zero(), 1.0, 5, 0.3), np, 16);
    Vec g = boundary_data(*d, src, f.mu);
    BieAssembler a(d, f);
    Vec tau = dense_solve(a, g);
    errs.push_back(field_error(*d, f, tau, targets, src));
    (void)prev;
  }
  CHECK(errs[2] < 1e-8);
  CHECK(errs[2] < errs[0] * 1e-2);
}

TEST_CASE("exterior velocity field is reproduced from interior sources") {
  Formulation f{FormulationKind::ExteriorCombined, 1.3};
  auto d = panelize_shared(star(Vec2::Zero(), 1.0, 5, 0.3), 24, 16);
  auto src = ring_sources(3, Vec2::Zero(), 0.15);
  Vec g = boundary_data(*d, src, f.mu);

  BieAssembler a(d, f);
  CHECK(a.has_single_layer());
  CHECK(!a.has_nullspace());
  Vec tau = dense_solve(a, g);
  std::vector<Vec2> targets = {Vec2(2.5, 0.3), Vec2(-2.0, 1.0), Vec2(0.5, -3.0),
                               Vec2(3.0, 3.0)};
  CHECK(field_error(*d, f, tau, targets, src) < 1e-8);
}

TEST_CASE("mixed wall-plus-holes field is reproduced from out-of-fluid sources") {
  Formulation f{FormulationKind::Mixed, 1.0};
  Discretization wall = panelize(ParametricCurve(circle(Vec2::Zero(), 2.0)), 20, 16);
  auto [dm, plan] = add_holes(wall, {HoleSpec{circle(Vec2(0.8, 0.0), 0.3), 10, 16},
                                     HoleSpec{circle(Vec2(-0.8, 0.0), 0.3), 10, 16}});
  auto d = std::make_shared<Discretization>(dm);

  auto src = ring_sources(4, Vec2::Zero(), 3.0);
  src.push_back({Vec2(0.8, 0.0), Vec2(1.0, 0.5)});
  src.push_back({Vec2(-0.8, 0.0), Vec2(-0.3, 1.0)});
  Vec g = boundary_data(*d, src, f.mu);
  CHECK(std::fabs(normal_flux(*d, g)) < 1e-12);

  BieAssembler a(d, f);
  Vec tau = dense_solve(a, g);
  std::vector<Vec2> targets = {Vec2(0.0, 1.2), Vec2(0.0, -1.2), Vec2(1.4, 0.3),
                               Vec2(-1.3, -0.4), Vec2(0.3, 0.5)};
  CHECK(field_error(*d, f, tau, targets, src) < 1e-8);

  // Adding a multiple of the wall normals to the density leaves the field
  // unchanged; the completion term absorbs exactly that direction.
  Vec shifted = tau;
  Index wall_nodes = d->components[1].node_offset;
  for (Index i = 0; i < wall_nodes; ++i) {
    shifted[2 * i] += 0.37 * d->normal[i].x();
    shifted[2 * i + 1] += 0.37 * d->normal[i].y();
  }
  EvaluationResult r0 = evaluate_solution(*d, f, tau, targets);
  EvaluationResult r1 = evaluate_solution(*d, f, shifted, targets);
  for (size_t i = 0; i < targets.size(); ++i)
    CHECK((r0.velocity[i] - r1.velocity[i]).norm() < 1e-9);
}

TEST_CASE("wall normals span the mixed nullspace absent the completion term") {
  Formulation f{FormulationKind::Mixed, 1.0};
  Discretization wall = panelize(ParametricCurve(circle(Vec2::Zero(), 2.0)), 10, 8);
  auto [dm, plan] = add_holes(wall, {HoleSpec{circle(Vec2(0.7, 0.1), 0.25), 6, 8}});
  auto d = std::make_shared<Discretization>(dm);
  BieAssembler a(d, f);
  Mat A = a.full_matrix();

  Index wn = d->components[1].node_offset;  // wall node count
  Mat N = Mat::Zero(A.rows(), A.cols());
  for (Index i = 0; i < wn; ++i)
    for (Index j = 0; j < wn; ++j) {
      N(2 * i, 2 * j) = d->normal[i].x() * d->w[j] * d->normal[j].x();
      N(2 * i, 2 * j + 1) = d->normal[i].x() * d->w[j] * d->normal[j].y();
      N(2 * i + 1, 2 * j) = d->normal[i].y() * d->w[j] * d->normal[j].x();
      N(2 * i + 1, 2 * j + 1) = d->normal[i].y() * d->w[j] * d->normal[j].y();
    }
  Mat A0 = A - N;

  Vec v = Vec::Zero(A.cols());
  for (Index i = 0; i < wn; ++i) {
    v[2 * i] = d->normal[i].x();
    v[2 * i + 1] = d->normal[i].y();
  }
  v /= v.norm();
  CHECK((A0 * v).norm() < 1e-8);

  Eigen::BDCSVD<Mat> s0(A0);
  Eigen::BDCSVD<Mat> s1(A);
  CHECK(s0.singularValues().tail(1)(0) < 1e-8);
  CHECK(s1.singularValues().tail(1)(0) > 1e-3);
}

TEST_CASE("submatrix reproduces dense entries exactly") {
  Formulation f{FormulationKind::ExteriorCombined, 1.0};
  auto d = panelize_shared(star(Vec2::Zero(), 1.0, 4, 0.25), 10, 8);
  BieAssembler a(d, f);
  Mat A = a.full_matrix();

  std::mt19937 rng(1234);
  std::uniform_int_distribution<Index> pick(0, a.disc().n_unknowns() - 1);
  std::vector<Index> rows, cols;
  for (int k = 0; k < 37; ++k) rows.push_back(pick(rng));
  for (int k = 0; k < 23; ++k) cols.push_back(pick(rng));
  Mat S = a.submatrix(rows, cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) CHECK(S(i, j) == A(rows[i], cols[j]));

  Mat R = a.submatrix_range(5, 21, 40, 44);
  for (Index i = 0; i < 16; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(R(i, j) == A(5 + i, 40 + j));
}

TEST_CASE("matrix-free apply agrees with the dense product") {
  Formulation f{FormulationKind::Mixed, 0.8};
  Discretization wall = panelize(ParametricCurve(star(Vec2::Zero(), 2.0, 3, 0.15)), 12, 8);
  auto [dm, plan] = add_holes(wall, {HoleSpec{circle(Vec2(0.6, 0.4), 0.2), 6, 8}});
  auto d = std::make_shared<Discretization>(dm);
  BieAssembler a(d, f);
  Mat A = a.full_matrix();
  std::mt19937 rng(99);
  std::normal_distribution<double> gauss;
  Vec x(a.disc().n_unknowns());
  for (Index i = 0; i < x.size(); ++i) x[i] = gauss(rng);
  Vec y1 = a.apply_dense_free(x);
  Vec y2 = A * x;
  CHECK((y1 - y2).norm() / y2.norm() < 1e-13);
}

TEST_CASE("refinement blocks agree with the dense assemblies on both grids") {
  Formulation f{FormulationKind::ExteriorCombined, 1.0};
  auto d0 = panelize_shared(star(Vec2::Zero(), 1.0, 5, 0.3), 12, 8);
  auto [d1m, plan] = refine(*d0, {2, 3, 9}, 2);
  auto d1 = std::make_shared<Discretization>(d1m);

  auto a0 = std::make_shared<BieAssembler>(d0, f);
  auto a1 = std::make_shared<BieAssembler>(d1, f);
  BlockSource src(a0, a1, plan);
  DenseBlocks blocks = assemble_blocks(src);

  Mat A0 = a0->full_matrix();
  Mat A1 = a1->full_matrix();

  const auto& ko = src.kept_old_scalar();
  const auto& kn = src.kept_new_scalar();
  const auto& cu = src.cut_scalar();
  const auto& ad = src.added_scalar();

  for (size_t i = 0; i < ko.size(); ++i)
    for (size_t j = 0; j < ko.size(); ++j) CHECK(blocks.kk(i, j) == A0(ko[i], ko[j]));
  for (size_t i = 0; i < ko.size(); ++i)
    for (size_t j = 0; j < cu.size(); ++j) {
      CHECK(blocks.kc(i, j) == A0(ko[i], cu[j]));
      CHECK(blocks.ck(j, i) == A0(cu[j], ko[i]));
    }
  for (size_t i = 0; i < cu.size(); ++i)
    for (size_t j = 0; j < cu.size(); ++j) CHECK(blocks.cc(i, j) == A0(cu[i], cu[j]));
  for (size_t i = 0; i < kn.size(); ++i)
    for (size_t j = 0; j < ad.size(); ++j) {
      CHECK(blocks.kp(i, j) == A1(kn[i], ad[j]));
      CHECK(blocks.pk(j, i) == A1(ad[j], kn[i]));
    }
  for (size_t i = 0; i < ad.size(); ++i)
    for (size_t j = 0; j < ad.size(); ++j) CHECK(blocks.pp(i, j) == A1(ad[i], ad[j]));

  // Kept-by-kept entries are identical in the old and new systems.
  for (size_t i = 0; i < ko.size(); ++i)
    for (size_t j = 0; j < ko.size(); ++j) CHECK(A0(ko[i], ko[j]) == A1(kn[i], kn[j]));
}

TEST_CASE("matrix dump and load round trip exactly") {
  Formulation f{FormulationKind::InteriorDirichlet, 1.0};
  auto d = panelize_shared(circle(Vec2::Zero(), 1.0), 6, 6);
  BieAssembler a(d, f);
  Mat A = a.full_matrix();
  dump_matrix("roundtrip.mat", A);
  Mat B = load_matrix("roundtrip.mat");
  REQUIRE(B.rows() == A.rows());
  REQUIRE(B.cols() == A.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) CHECK(A(i, j) == B(i, j));
  std::remove("roundtrip.mat");
}

TEST_CASE("evaluation flags targets hugging the boundary") {
  Formulation f{FormulationKind::InteriorDirichlet, 1.0};
  auto d = panelize_shared(circle(Vec2::Zero(), 1.0), 32, 8);
  Vec tau = Vec::Ones(d->n_unknowns());
  EvaluationResult r =
      evaluate_solution(*d, f, tau, {Vec2(0.97, 0.0), Vec2(0.2, 0.1)});
  CHECK(r.near_boundary[0]);
  CHECK(!r.near_boundary[1]);
}

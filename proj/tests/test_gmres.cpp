#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "stokesbie/gmres.hpp"

using namespace stokesbie;

namespace {

Mat random_system(Index n, double offdiag, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Mat a = Mat::Identity(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) += offdiag * gauss(rng);
  return a;
}

std::function<Vec(const Vec&)> op_of(const Mat& a) {
  return [&a](const Vec& v) { return Vec(a * v); };
}

}  // namespace

TEST_CASE("the identity converges in one iteration") {
  const Vec b = Vec::Random(40);
  GmresResult r = gmres([](const Vec& v) { return v; }, b);
  CHECK(r.n_iter == 1);
  CHECK((r.x - b).norm() < 1e-12 * b.norm());
  CHECK(r.residual_history.front() == 1.0);
  CHECK(r.residual_history.back() <= 1e-11);
}

TEST_CASE("an exact inverse preconditioner closes the solve immediately") {
  const Mat a = random_system(60, 0.05, 2);
  const Vec b = Vec::Random(60);
  Eigen::PartialPivLU<Mat> lu(a);
  GmresConfig cfg;
  cfg.precond = [&lu](const Vec& v) { return Vec(lu.solve(v)); };
  GmresResult r = gmres(op_of(a), b, cfg);
  CHECK(r.n_iter <= 2);
  CHECK((a * r.x - b).norm() < 1e-9 * b.norm());
}

TEST_CASE("residual history decreases monotonically to the target") {
  const Mat a = random_system(100, 0.3, 5);
  const Vec b = Vec::Random(100);
  GmresResult r = gmres(op_of(a), b);
  CHECK((a * r.x - b).norm() / b.norm() <= 1e-11);
  for (size_t i = 1; i < r.residual_history.size(); ++i)
    CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1 + 1e-12));
  CHECK(r.n_iter + 1 == static_cast<Index>(r.residual_history.size()));
}

TEST_CASE("restarted cycles still reach the target") {
  const Mat a = random_system(80, 0.05, 7);
  const Vec b = Vec::Random(80);
  GmresConfig cfg;
  cfg.restart = 15;
  GmresResult r = gmres(op_of(a), b, cfg);
  CHECK((a * r.x - b).norm() / b.norm() <= 1e-11);
  for (size_t i = 1; i < r.residual_history.size(); ++i)
    CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1 + 1e-12));
}

TEST_CASE("a singular operator stagnates and surrenders its best iterate") {
  const Index n = 60;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(1.0, 2.0);
  Vec diag(n);
  for (Index i = 0; i < n; ++i) diag(i) = unif(rng);
  diag(n - 1) = 0.0;
  const Vec b = Vec::Ones(n);
  auto apply = [&diag](const Vec& v) { return Vec(diag.asDiagonal() * v); };
  try {
    gmres(apply, b);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.best_iterate.allFinite());
    CHECK(e.best_iterate.size() == n);
    CHECK(e.residual_history.size() >= 2);
    // The reachable part of the solution is recovered; the unreachable
    // direction pollutes the basis, so machine precision is off the table.
    double err = 0;
    for (Index i = 0; i + 1 < n; ++i)
      err = std::max(err, std::abs(e.best_iterate(i) - 1.0 / diag(i)));
    CHECK(err < 1e-5);
  }
}

TEST_CASE("a tight iteration budget raises the non-convergence error") {
  const Mat a = random_system(100, 0.3, 13);
  const Vec b = Vec::Random(100);
  GmresConfig cfg;
  cfg.max_iter = 4;
  try {
    gmres(op_of(a), b, cfg);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual_history.size() == 5);
    CHECK(e.best_iterate.allFinite());
    // The partial iterate is still the least-squares optimum so far.
    CHECK((a * e.best_iterate - b).norm() / b.norm() ==
          doctest::Approx(e.residual_history.back()).epsilon(1e-6));
  }
}

TEST_CASE("configuration domains are enforced") {
  const Vec b = Vec::Ones(5);
  auto id = [](const Vec& v) { return v; };
  GmresConfig bad;
  bad.tol = 0.0;
  CHECK_THROWS(gmres(id, b, bad));
  bad.tol = 1.5;
  CHECK_THROWS(gmres(id, b, bad));
  bad.tol = 1e-11;
  bad.max_iter = 0;
  CHECK_THROWS(gmres(id, b, bad));
}

TEST_CASE("a zero right-hand side returns the zero solution") {
  GmresResult r = gmres([](const Vec& v) { return v; }, Vec(Vec::Zero(12)));
  CHECK(r.x.norm() == 0.0);
  CHECK(r.n_iter == 0);
}

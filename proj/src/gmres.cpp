#include "stokesbie/gmres.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace stokesbie {

namespace {

constexpr Index kStagnationWindow = 50;

}  // namespace

GmresResult gmres(const std::function<Vec(const Vec&)>& apply, const Vec& b,
                  const GmresConfig& cfg) {
  require(cfg.tol > 0.0 && cfg.tol < 1.0, "gmres: tolerance out of (0,1)");
  require(cfg.max_iter >= 1, "gmres: iteration budget must be positive");
  require(b.allFinite(), "gmres: right-hand side not finite");

  const Index n = b.size();
  auto left = [&](const Vec& v) { return cfg.precond ? cfg.precond(v) : v; };

  GmresResult res;
  res.x = Vec::Zero(n);
  const Vec mb = left(b);
  const double beta0 = mb.norm();
  res.residual_history.push_back(1.0);
  if (beta0 == 0.0) return res;

  const Index cycle =
      cfg.restart > 0 ? std::min(cfg.restart, cfg.max_iter) : cfg.max_iter;
  Mat v(n, cycle + 1);
  Mat h = Mat::Zero(cycle + 1, cycle);
  Vec cs(cycle), sn(cycle), g(cycle + 1);

  double best = 1.0;
  Index since_best = 0;
  Index total = 0;

  while (true) {
    // The outer residual is exact; an inner convergence claim is only
    // honored once it survives this recomputation.  That guards against the
    // estimated residual drifting below the true one after a near-breakdown.
    const Vec r = left(Vec(b - apply(res.x)));
    const double beta = r.norm();
    if (beta / beta0 <= cfg.tol) return res;
    if (total >= cfg.max_iter)
      throw ConvergenceError(
          "gmres hit the iteration budget before the residual target", res.x,
          res.residual_history);
    v.col(0) = r / beta;
    g.setZero();
    g(0) = beta;

    Index j = 0;
    bool claimed = false;
    for (; j < cycle && total < cfg.max_iter; ++j) {
      Vec w = left(apply(Vec(v.col(j))));
      for (Index i = 0; i <= j; ++i) {
        h(i, j) = v.col(i).dot(w);
        w -= h(i, j) * v.col(i);
      }
      // One clean-up pass keeps the basis orthogonal on ill-conditioned
      // operators, where plain modified Gram-Schmidt stalls.
      for (Index i = 0; i <= j; ++i) {
        const double c = v.col(i).dot(w);
        h(i, j) += c;
        w -= c * v.col(i);
      }
      const double hnext = w.norm();

      for (Index i = 0; i < j; ++i) {
        const double t = cs(i) * h(i, j) + sn(i) * h(i + 1, j);
        h(i + 1, j) = -sn(i) * h(i, j) + cs(i) * h(i + 1, j);
        h(i, j) = t;
      }
      const double denom = std::hypot(h(j, j), hnext);
      cs(j) = denom > 0 ? h(j, j) / denom : 1.0;
      sn(j) = denom > 0 ? hnext / denom : 0.0;
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      g(j + 1) = -sn(j) * g(j);
      g(j) = cs(j) * g(j);

      const double rel = std::abs(g(j + 1)) / beta0;
      res.residual_history.push_back(rel);
      res.n_iter = ++total;

      if (rel < best) {
        best = rel;
        since_best = 0;
      } else {
        ++since_best;
      }

      const bool converged = rel <= cfg.tol;
      if (converged || since_best >= kStagnationWindow || hnext == 0.0 ||
          total >= cfg.max_iter) {
        const Vec y = h.topLeftCorner(j + 1, j + 1)
                          .triangularView<Eigen::Upper>()
                          .solve(g.head(j + 1));
        res.x += v.leftCols(j + 1) * y;
        if (converged || hnext == 0.0) {
          claimed = true;
          break;
        }
        if (since_best >= kStagnationWindow)
          throw ConvergenceError("gmres stagnated: no residual decrease over " +
                                     std::to_string(kStagnationWindow) +
                                     " iterations",
                                 res.x, res.residual_history);
        throw ConvergenceError(
            "gmres hit the iteration budget before the residual target", res.x,
            res.residual_history);
      }
      v.col(j + 1) = w / hnext;
    }
    if (!claimed && j == cycle) {
      // Cycle filled without a terminal event: fold it into x and restart.
      const Vec y = h.topLeftCorner(cycle, cycle)
                        .triangularView<Eigen::Upper>()
                        .solve(g.head(cycle));
      res.x += v.leftCols(cycle) * y;
    }
  }
}

}  // namespace stokesbie

#include "stokesbie/linop.hpp"

#include <memory>
#include <random>

namespace stokesbie {

LinearOp dense_op(Mat a) {
  auto m = std::make_shared<Mat>(std::move(a));
  LinearOp op;
  op.n = m->rows();
  op.apply = [m](const Vec& v) { return Vec(*m * v); };
  op.apply_t = [m](const Vec& v) { return Vec(m->transpose() * v); };
  return op;
}

double operator_norm(const LinearOp& op, int iters, std::uint64_t seed) {
  if (op.n == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(op.n);
  for (Index i = 0; i < op.n; ++i) v(i) = gauss(rng);
  v.normalize();
  double s = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec w = op.apply(v);
    s = w.norm();
    if (s == 0.0) return 0.0;
    v = op.apply_t(w);
    const double nv = v.norm();
    if (nv == 0.0) return s;
    v /= nv;
  }
  return s;
}

double condition_estimate(const LinearOp& fwd, const LinearOp& inv, int iters,
                          std::uint64_t seed) {
  return operator_norm(fwd, iters, seed) * operator_norm(inv, iters, seed + 1);
}

}  // namespace stokesbie

#pragma once

#include <cstdint>
#include <functional>

#include "stokesbie/common.hpp"

namespace stokesbie {

// Matrix-free square operator with forward and transpose applies.
struct LinearOp {
  Index n = 0;
  std::function<Vec(const Vec&)> apply;
  std::function<Vec(const Vec&)> apply_t;
};

LinearOp dense_op(Mat a);

// Largest singular value by power iteration on B B^T with a seeded Gaussian
// start; deterministic per seed, accurate to a few percent on the operators
// used here.
double operator_norm(const LinearOp& op, int iters = 80, std::uint64_t seed = 1);

// kappa(B) ~= ||B|| ||B^{-1}||, the inverse supplied as a solve operator.
double condition_estimate(const LinearOp& fwd, const LinearOp& inv,
                          int iters = 80, std::uint64_t seed = 1);

}  // namespace stokesbie

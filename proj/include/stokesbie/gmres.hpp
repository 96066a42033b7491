#pragma once

#include <functional>
#include <vector>

#include "stokesbie/common.hpp"

namespace stokesbie {

struct GmresConfig {
  double tol = 1e-11;  // relative preconditioned residual target, in (0,1)
  Index max_iter = 600;
  Index restart = 0;  // 0 keeps the full Krylov space
  std::function<Vec(const Vec&)> precond;  // optional left preconditioner
};

struct GmresResult {
  Vec x;
  Index n_iter = 0;
  std::vector<double> residual_history;  // relative, starts at 1
};

// Restarted GMRES with modified Gram-Schmidt plus one reorthogonalization
// pass and Givens-rotation least squares.  Throws ConvergenceError carrying
// the best iterate on stagnation (no residual decrease over 50 iterations)
// or when the iteration budget runs out.
GmresResult gmres(const std::function<Vec(const Vec&)>& apply, const Vec& b,
                  const GmresConfig& cfg = {});

}  // namespace stokesbie

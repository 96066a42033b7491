#pragma once

#include <vector>

#include "stokesbie/common.hpp"

namespace stokesbie {

// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Nodes/weights computed by Newton iteration on P_n; cached per n.
const GaussRule& gauss_rule(int n);

// P_0(x) .. P_{n}(x) by the three-term recurrence.
void legendre_values(int n, double x, double* out);

}  // namespace stokesbie

#pragma once

#include "stokesbie/common.hpp"

namespace stokesbie {

// Legendre functions of the second kind Q_0(u)..Q_n(u) on the real line,
// principal value inside (-1, 1).  |u| must differ from 1.
void legendre_q(int n, double u, long double* out);

// Moments m_k(u) = integral_{-1}^{1} P_k(t) log|t - u| dt for k = 0..n-1.
void log_moments(int n, double u, long double* out);

// Product rule for the panel-local log kernel:
//   sum_j w_j(u) f(xi_j)  ~=  integral_{-1}^{1} f(xi) log|xi - u| dxi
// exact when f is a polynomial of degree < q.  u may lie inside or outside
// [-1, 1]; the rule stays accurate for u within a few panel lengths.
Vec log_rule_weights(int q, double u);

// Cached q x q table of log_rule_weights at the Gauss nodes themselves
// (row i corresponds to u = xi_i).
const Mat& log_rule_self_table(int q);

}  // namespace stokesbie

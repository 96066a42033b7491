#include "stokesbie/gauss.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace stokesbie {

namespace {

// P_n(x) and P_n'(x) in long double for the Newton solve.
void legendre_pair(int n, long double x, long double& p, long double& dp) {
  long double p0 = 1.0L, p1 = x;
  if (n == 0) { p = p0; dp = 0.0L; return; }
  for (int k = 2; k <= n; ++k) {
    long double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0L);
}

GaussRule compute_rule(int n) {
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Chebyshev-like initial guess for the i-th root (descending order).
    long double x = std::cos(kPi * (i + 0.75L) / (n + 0.5L));
    long double p, dp;
    for (int it = 0; it < 100; ++it) {
      legendre_pair(n, x, p, dp);
      long double dx = p / dp;
      x -= dx;
      if (std::fabs((double)dx) < 1e-19) break;
    }
    legendre_pair(n, x, p, dp);
    long double w = 2.0L / ((1.0L - x * x) * dp * dp);
    r.nodes[n - 1 - i] = (double)x;
    r.nodes[i] = (double)(-x);
    r.weights[n - 1 - i] = (double)w;
    r.weights[i] = (double)w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

}  // namespace

const GaussRule& gauss_rule(int n) {
  require(n >= 1 && n <= 512, "gauss_rule: order out of range");
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
  return it->second;
}

void legendre_values(int n, double x, double* out) {
  out[0] = 1.0;
  if (n == 0) return;
  out[1] = x;
  for (int k = 2; k <= n; ++k)
    out[k] = ((2 * k - 1) * x * out[k - 1] - (k - 1) * out[k - 2]) / k;
}

}  // namespace stokesbie

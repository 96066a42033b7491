#include "stokesbie/logquad.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include "stokesbie/gauss.hpp"

namespace stokesbie {

namespace {

// Forward recurrence.  Inside (-1,1) both Legendre solutions stay bounded, so
// this is stable there.
void q_forward(int n, long double u, long double* out) {
  out[0] = 0.5L * std::log((1.0L + u) / (1.0L - u));
  if (n == 0) return;
  out[1] = u * out[0] - 1.0L;
  for (int k = 2; k <= n; ++k)
    out[k] = ((2 * k - 1) * u * out[k - 1] - (k - 1) * out[k - 2]) / k;
}

// Outside [-1,1], Q_k is the minimal solution and the forward recurrence blows
// up.  Miller's algorithm: run the recurrence downward from a start index high
// enough that the contamination by the dominant solution has decayed below
// machine precision, then normalize with the closed-form Q_0.
void q_miller(int n, long double u, long double* out) {
  long double au = std::fabs((long double)u);
  long double rho = au + std::sqrt(au * au - 1.0L);
  int extra = (int)std::ceil(46.0L / std::log(rho));
  if (extra < 20) extra = 20;
  if (extra > 20000) extra = 20000;
  int start = n + extra;
  long double qkp1 = 0.0L, qk = 1e-200L;
  std::vector<long double> tmp(n + 1, 0.0L);
  for (int k = start; k >= 1; --k) {
    long double qkm1 = ((2 * k + 1) * u * qk - (k + 1) * qkp1) / k;
    qkp1 = qk;
    qk = qkm1;
    if (k - 1 <= n) tmp[k - 1] = qk;
    if (std::fabs(qk) > 1e3500L) {  // rescale; only the ratios matter
      qk *= 1e-3500L;
      qkp1 *= 1e-3500L;
      for (auto& v : tmp) v *= 1e-3500L;
    }
  }
  long double q0 = 0.5L * std::log((u + 1.0L) / (u - 1.0L));
  long double scale = q0 / tmp[0];
  for (int k = 0; k <= n; ++k) out[k] = tmp[k] * scale;
}

}  // namespace

void legendre_q(int n, double u, long double* out) {
  require(std::fabs(std::fabs(u) - 1.0) > 1e-14, "legendre_q: |u| too close to 1");
  long double ul = u;
  if (std::fabs(u) < 1.0) {
    q_forward(n, ul, out);
  } else if (u > 1.0) {
    q_miller(n, ul, out);
  } else {
    // Q_k(-u) = (-1)^(k+1) Q_k(u) keeps Miller's algorithm on the u > 1 branch.
    q_miller(n, -ul, out);
    for (int k = 0; k <= n; ++k)
      if (k % 2 == 0) out[k] = -out[k];
  }
}

void log_moments(int n, double u, long double* out) {
  long double ul = u;
  out[0] = (1.0L - ul) * std::log(std::fabs(1.0L - ul)) +
           (1.0L + ul) * std::log(std::fabs(1.0L + ul)) - 2.0L;
  if (n == 1) return;
  std::vector<long double> q(n + 1);
  legendre_q(n, u, q.data());
  // Integration by parts with (P_{k+1}-P_{k-1})/(2k+1) as the antiderivative
  // of P_k; the boundary terms vanish and the remaining integral is a
  // difference of Legendre Q functions.
  for (int k = 1; k < n; ++k)
    out[k] = 2.0L / (2 * k + 1) * (q[k + 1] - q[k - 1]);
}

Vec log_rule_weights(int q, double u) {
  const GaussRule& g = gauss_rule(q);
  std::vector<long double> m(q);
  log_moments(q, u, m.data());
  std::vector<double> pk(q);
  Vec w(q);
  for (int j = 0; j < q; ++j) {
    legendre_values(q - 1, g.nodes[j], pk.data());
    long double s = 0.0L;
    for (int k = 0; k < q; ++k)
      s += (2 * k + 1) * 0.5L * (long double)pk[k] * m[k];
    w[j] = (double)(g.weights[j] * s);
  }
  return w;
}

const Mat& log_rule_self_table(int q) {
  static std::map<int, Mat> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(q);
  if (it == cache.end()) {
    const GaussRule& g = gauss_rule(q);
    Mat t(q, q);
    for (int i = 0; i < q; ++i) t.row(i) = log_rule_weights(q, g.nodes[i]).transpose();
    it = cache.emplace(q, std::move(t)).first;
  }
  return it->second;
}

}  // namespace stokesbie

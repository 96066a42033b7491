#include "stokesbie/idlib.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stokesbie {

Mat IdResult::skeleton_rows(const Mat& w) const {
  Mat s(k, w.cols());
  for (Index i = 0; i < k; ++i) s.row(i) = w.row(J[static_cast<size_t>(i)]);
  return s;
}

Mat IdResult::reconstruct(const Mat& w) const {
  return P * skeleton_rows(w);
}

namespace {

// Builds J and P from the pivoted triangular factor of W^T.  Column i of the
// pivoted W^T is the original row piv(i) of W, so the first k pivots are the
// skeleton rows and T = R11^{-1} R12 carries the interpolation coefficients
// of the remaining rows.
IdResult id_from_cpqr(const Eigen::ColPivHouseholderQR<Mat>& qr, Index m,
                      double eps, Index forced_rank = -1) {
  IdResult out;
  out.eps = eps;
  const auto& piv = qr.colsPermutation().indices();
  out.J.resize(static_cast<size_t>(m));
  for (Index i = 0; i < m; ++i) out.J[static_cast<size_t>(i)] = piv(i);

  const Mat& qrm = qr.matrixQR();
  const Index dmax = std::min(qrm.rows(), qrm.cols());
  Index k;
  if (forced_rank >= 0) {
    // Never extend past the numerically nonzero diagonal of R: the
    // interpolation solve would divide by noise.
    const double r00 = dmax > 0 ? std::abs(qrm(0, 0)) : 0.0;
    k = 0;
    while (k < std::min(forced_rank, dmax) &&
           std::abs(qrm(k, k)) > 1e-15 * r00)
      ++k;
  } else {
    const double r00 = dmax > 0 ? std::abs(qrm(0, 0)) : 0.0;
    k = 0;
    if (r00 > 0.0) {
      while (k < dmax && std::abs(qrm(k, k)) > eps * r00) ++k;
    }
  }
  out.k = k;

  out.P = Mat::Zero(m, k);
  for (Index i = 0; i < k; ++i) out.P(out.J[static_cast<size_t>(i)], i) = 1.0;
  if (k > 0 && k < m) {
    Mat t = qrm.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(
        qrm.block(0, k, k, m - k));
    for (Index j = 0; j < m - k; ++j)
      out.P.row(out.J[static_cast<size_t>(k + j)]) = t.col(j).transpose();
  }
  return out;
}

void check_eps(double eps) {
  if (!(eps > 0.0) || eps > 0.1)
    throw std::invalid_argument("id tolerance must lie in (0, 0.1]");
}

}  // namespace

IdResult row_id(const Mat& w, double eps) {
  check_eps(eps);
  const Index m = w.rows();
  if (m == 0 || w.cols() == 0) {
    IdResult out;
    out.eps = eps;
    out.J.resize(static_cast<size_t>(m));
    std::iota(out.J.begin(), out.J.end(), Index{0});
    out.P = Mat::Zero(m, 0);
    return out;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(w.transpose());
  return id_from_cpqr(qr, m, eps);
}

IdResult row_id_rank(const Mat& w, Index k) {
  const Index m = w.rows();
  if (m == 0 || w.cols() == 0 || k <= 0) {
    IdResult out;
    out.J.resize(static_cast<size_t>(m));
    std::iota(out.J.begin(), out.J.end(), Index{0});
    out.P = Mat::Zero(m, 0);
    return out;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(w.transpose());
  return id_from_cpqr(qr, m, 0.0, k);
}

IdResult randomized_row_id(const Mat& w, double eps, std::uint64_t seed,
                           int oversample, int power_iters) {
  check_eps(eps);
  const Index m = w.rows();
  const Index n = w.cols();
  if (m == 0 || n == 0) return row_id(w, eps);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Index l = n + std::max(0, oversample);
  Mat omega(n, l);
  for (Index j = 0; j < l; ++j)
    for (Index i = 0; i < n; ++i) omega(i, j) = gauss(rng);

  // Reduce the sketch to an orthonormal n x n rotation of the row space:
  // each power iteration maps G <- orth(W^T (W G)).  Rotations leave row
  // norms, angles, and singular values of W G unchanged, so the pivot order
  // and the eps rank rule match the deterministic path.
  Mat g = Eigen::HouseholderQR<Mat>(omega).householderQ() *
          Mat::Identity(n, std::min(n, l));
  for (int it = 0; it < power_iters; ++it) {
    Mat z = w.transpose() * (w * g);
    g = Eigen::HouseholderQR<Mat>(z).householderQ() *
        Mat::Identity(n, z.cols());
  }

  Mat sketch = w * g;
  Eigen::ColPivHouseholderQR<Mat> qr(sketch.transpose());
  IdResult out = id_from_cpqr(qr, m, eps);
  out.eps = eps;
  return out;
}

TruncatedSvd truncated_svd(const Mat& w, double eps) {
  check_eps(eps);
  TruncatedSvd out;
  if (w.rows() == 0 || w.cols() == 0) {
    out.u = Mat::Zero(w.rows(), 0);
    out.sv = Vec::Zero(0);
    out.v = Mat::Zero(w.cols(), 0);
    return out;
  }
  Eigen::BDCSVD<Mat> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  Index k = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    while (k < s.size() && s(k) > eps * s(0)) ++k;
  }
  out.k = k;
  out.u = svd.matrixU().leftCols(k);
  out.sv = s.head(k);
  out.v = svd.matrixV().leftCols(k);
  return out;
}

double spectral_norm_estimate(const Mat& w, int iters) {
  if (w.rows() == 0 || w.cols() == 0) return 0.0;
  Vec v = Vec::Ones(w.cols());
  v.normalize();
  double s = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec z = w.transpose() * (w * v);
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    s = std::sqrt(nz);
    v = z / nz;
  }
  return s;
}

}  // namespace stokesbie

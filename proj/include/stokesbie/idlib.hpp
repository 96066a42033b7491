#pragma once

#include <cstdint>
#include <vector>

#include "stokesbie/common.hpp"

namespace stokesbie {

// Row interpolative decomposition W ~= P * W(J(0:k), :).
// J is a full permutation of the row indices; the first k entries are the
// skeleton rows.  P is m x k and contains the k x k identity on the skeleton
// rows exactly.
struct IdResult {
  std::vector<Index> J;
  Mat P;
  Index k = 0;
  double eps = 0.0;

  // Rows of W indexed by the skeleton, in skeleton order.
  Mat skeleton_rows(const Mat& w) const;
  // P * W(J(0:k), :), the rank-k reconstruction.
  Mat reconstruct(const Mat& w) const;
};

// Deterministic row ID via column-pivoted orthogonal triangularization of
// W^T.  Rank rule: keep diagonal entries with |r_ii| > eps * |r_00|.
// Pivot ties resolve to the first index.  eps must lie in (0, 0.1].
IdResult row_id(const Mat& w, double eps);

// Row ID cut at a caller-chosen rank along the same pivot order; used to
// equalize row and column skeleton sizes.  The cut never extends past the
// numerically nonzero part of the triangular factor, so the returned rank can
// be smaller than requested.
IdResult row_id_rank(const Mat& w, Index k);

// Row ID of a tall matrix through a Gaussian sketch with cols(W) + oversample
// samples and power_iters power iterations.  The small factor is
// orthonormalized between iterations, so the sketch is an exact rotation of
// the row geometry and the eps truncation rule keeps its meaning.
// Deterministic for a fixed seed.
IdResult randomized_row_id(const Mat& w, double eps, std::uint64_t seed,
                           int oversample = 10, int power_iters = 1);

// Rank-truncated singular value decomposition W ~= U * diag(sv) * V^T,
// keeping singular values sv_j > eps * sv_0.
struct TruncatedSvd {
  Mat u;
  Vec sv;
  Mat v;
  Index k = 0;
};

TruncatedSvd truncated_svd(const Mat& w, double eps);

// Largest singular value by power iteration on W^T W; exact enough for
// norm-relative error checks.
double spectral_norm_estimate(const Mat& w, int iters = 30);

}  // namespace stokesbie

#pragma once

#include <Eigen/LU>
#include <memory>

#include "stokesbie/common.hpp"
#include "stokesbie/hbs.hpp"
#include "stokesbie/lowrank.hpp"
#include "stokesbie/nystrom.hpp"

namespace stokesbie {

// Direct solver for a locally modified discretization.  The unchanged
// diagonal part is reused through its hierarchical inverse; the modification
// enters as a compressed low-rank update and is folded in with a Woodbury
// correction.  Extended unknown ordering is (kept, cut, added) scalars.
struct ElsSolver {
  std::shared_ptr<const HbsOperator> a_oo;  // old-mesh block, inverse attached

  // Diagonal block of the added unknowns: dense below the size threshold,
  // hierarchical above it.
  Mat app_dense;
  Eigen::PartialPivLU<Mat> app_lu;
  std::shared_ptr<const HbsOperator> app_h;

  LowRankUpdate update;
  Mat x;                          // solve of the left factor, n_ext x k
  Mat w;                          // I + R x
  Eigen::PartialPivLU<Mat> w_lu;  // pivoted factorization, not an inverse

  RefinementPlan plan;
  std::shared_ptr<const BieAssembler> old_a, new_a;
  std::vector<Index> kept_old_s, kept_new_s, cut_s, added_s;

  Index n_k = 0, n_c = 0, n_p = 0;  // scalar counts per block
  Index n_ext() const { return n_k + n_c + n_p; }
};

// Threshold below which the added-unknown diagonal block stays dense.
inline constexpr Index kDenseAddedLimit = 2048;

ElsSolver els_build(std::shared_ptr<const HbsOperator> a_oo,
                    const BlockSource& blocks, const RefinementPlan& plan,
                    LowRankUpdate update);

// Hole insertion has no cut block; the kept solver covers the whole old mesh.
ElsSolver els_build_holes(std::shared_ptr<const HbsOperator> a_kk,
                          const BlockSource& blocks, const RefinementPlan& plan,
                          LowRankUpdate update);

// Solves the extended system for data on the kept and added unknowns and
// returns the full extended solution (kept, dummy, added).
Vec els_solve_extended(const ElsSolver& s, const Vec& g_n);

// As above but discards the dummy block: input 2(N_k+N_p) data, output the
// density on the kept and added unknowns.
Vec els_solve(const ElsSolver& s, const Vec& g_n);

// Applies the extended operator (diagonal part plus low-rank update).
Vec els_apply_forward(const ElsSolver& s, const Vec& v);
Vec els_apply_forward_t(const ElsSolver& s, const Vec& v);

// Solve and transpose solve for arbitrary extended right-hand sides; used by
// the conditioning estimators.
Mat els_solve_raw(const ElsSolver& s, const Mat& g_ext);
Mat els_solve_raw_t(const ElsSolver& s, const Mat& g_ext);

// Scatters an (kept, added) solution into new-mesh node ordering.
Vec density_on_refined(const ElsSolver& s, const Vec& tau_n);

struct ConditioningReport {
  double kappa_w = 1.0;      // conditioning of the Woodbury operator
  double kappa_l = 1.0;      // sigma_max/sigma_k of the left factor
  double kappa_r = 1.0;      // sigma_max/sigma_k of the right factor
  double kappa_ext = 1.0;    // conditioning of the extended operator
  double kappa_tilde = 1.0;  // conditioning of its diagonal part
  double bound = 1.0;        // min(kappa_l^2, kappa_r^2) * kappa_ext * kappa_tilde
  bool bound_holds = true;
};

// Dense route computes every conditioning number by SVD; otherwise the two
// large ones fall back to randomized power iteration on the operator and its
// solve.  kappa_w and the factor conditionings are always dense (k x k and
// thin matrices).
ConditioningReport conditioning_report(const ElsSolver& s,
                                       bool dense_oracles_allowed);

}  // namespace stokesbie

#include "stokesbie/els.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "stokesbie/linop.hpp"

namespace stokesbie {

namespace {

std::vector<Index> scalars_of(const std::vector<Index>& nodes) {
  std::vector<Index> s;
  s.reserve(2 * nodes.size());
  for (Index i : nodes) {
    s.push_back(2 * i);
    s.push_back(2 * i + 1);
  }
  return s;
}

// The kept and cut scalars partition the old mesh; the diagonal solver works
// in old-mesh ordering, the extended vectors in (kept, cut) ordering.
Mat to_old_order(const ElsSolver& s, const Mat& v_oc) {
  Mat old = Mat::Zero(s.a_oo->n, v_oc.cols());
  for (Index i = 0; i < s.n_k; ++i)
    old.row(s.kept_old_s[static_cast<size_t>(i)]) = v_oc.row(i);
  for (Index i = 0; i < s.n_c; ++i)
    old.row(s.cut_s[static_cast<size_t>(i)]) = v_oc.row(s.n_k + i);
  return old;
}

Mat from_old_order(const ElsSolver& s, const Mat& v_old) {
  Mat oc(s.n_k + s.n_c, v_old.cols());
  for (Index i = 0; i < s.n_k; ++i)
    oc.row(i) = v_old.row(s.kept_old_s[static_cast<size_t>(i)]);
  for (Index i = 0; i < s.n_c; ++i)
    oc.row(s.n_k + i) = v_old.row(s.cut_s[static_cast<size_t>(i)]);
  return oc;
}

Mat app_solve(const ElsSolver& s, const Mat& v, bool transpose) {
  if (s.n_p == 0) return Mat(0, v.cols());
  if (s.app_h)
    return transpose ? hbs_solve_t(*s.app_h, v) : hbs_solve(*s.app_h, v);
  return transpose ? Mat(s.app_lu.transpose().solve(v)) : Mat(s.app_lu.solve(v));
}

Mat app_apply(const ElsSolver& s, const Mat& v, bool transpose) {
  if (s.n_p == 0) return Mat(0, v.cols());
  if (s.app_h)
    return transpose ? hbs_apply_t(*s.app_h, v) : hbs_apply(*s.app_h, v);
  return transpose ? Mat(s.app_dense.transpose() * v) : Mat(s.app_dense * v);
}

// Block-diagonal solve and apply on extended vectors.
Mat atilde_solve(const ElsSolver& s, const Mat& v, bool transpose) {
  const Mat old = to_old_order(s, v.topRows(s.n_k + s.n_c));
  const Mat sol = transpose ? hbs_solve_t(*s.a_oo, old) : hbs_solve(*s.a_oo, old);
  Mat out(s.n_ext(), v.cols());
  out.topRows(s.n_k + s.n_c) = from_old_order(s, sol);
  out.bottomRows(s.n_p) = app_solve(s, v.bottomRows(s.n_p), transpose);
  return out;
}

Mat atilde_apply(const ElsSolver& s, const Mat& v, bool transpose) {
  const Mat old = to_old_order(s, v.topRows(s.n_k + s.n_c));
  const Mat prod = transpose ? hbs_apply_t(*s.a_oo, old) : hbs_apply(*s.a_oo, old);
  Mat out(s.n_ext(), v.cols());
  out.topRows(s.n_k + s.n_c) = from_old_order(s, prod);
  out.bottomRows(s.n_p) = app_apply(s, v.bottomRows(s.n_p), transpose);
  return out;
}

double lu_rcond(const Eigen::PartialPivLU<Mat>& lu) { return lu.rcond(); }

}  // namespace

ElsSolver els_build(std::shared_ptr<const HbsOperator> a_oo,
                    const BlockSource& blocks, const RefinementPlan& plan,
                    LowRankUpdate update) {
  require(bool(a_oo), "els_build: missing diagonal solver");
  require(a_oo->has_inverse, "els_build: diagonal solver lacks inverse");

  ElsSolver s;
  s.a_oo = std::move(a_oo);
  s.update = std::move(update);
  s.plan = plan;
  s.old_a = blocks.old_oracle_ptr();
  s.new_a = blocks.new_oracle_ptr();
  s.kept_old_s = blocks.kept_old_scalar();
  s.kept_new_s = blocks.kept_new_scalar();
  s.cut_s = blocks.cut_scalar();
  s.added_s = blocks.added_scalar();
  s.n_k = static_cast<Index>(s.kept_old_s.size());
  s.n_c = static_cast<Index>(s.cut_s.size());
  s.n_p = static_cast<Index>(s.added_s.size());
  require(s.a_oo->n == s.n_k + s.n_c,
          "els_build: diagonal solver size does not match the old mesh");
  require(s.update.L.rows() == s.n_ext(),
          "els_build: update factor size does not match the plan");

  if (s.n_p > 0) {
    if (s.n_p <= kDenseAddedLimit) {
      s.app_dense = blocks.eval_full(BlockName::pp);
      s.app_lu.compute(s.app_dense);
      if (lu_rcond(s.app_lu) < 1e-14)
        throw SingularMatrixError("added-unknown diagonal block is singular",
                                  "added block");
    } else {
      HbsOptions o;
      o.eps = s.a_oo->eps;
      HbsOperator h =
          hbs_compress(make_hbs_source_subset(s.new_a, plan.added_new), o);
      hbs_invert(h);
      s.app_h = std::make_shared<const HbsOperator>(std::move(h));
    }
  }

  const Index k = s.update.k;
  if (k > 0) {
    s.x = atilde_solve(s, s.update.L, false);
    s.w = Mat::Identity(k, k) + s.update.R * s.x;
    s.w_lu.compute(s.w);
    const double limit = std::sqrt(std::numeric_limits<double>::epsilon());
    if (lu_rcond(s.w_lu) < limit)
      throw SingularMatrixError(
          "woodbury operator numerically singular; consider the optimal-basis "
          "compression mode",
          "woodbury solve");
  } else {
    s.x = Mat(s.n_ext(), 0);
    s.w = Mat(0, 0);
  }
  return s;
}

ElsSolver els_build_holes(std::shared_ptr<const HbsOperator> a_kk,
                          const BlockSource& blocks, const RefinementPlan& plan,
                          LowRankUpdate update) {
  require(plan.cut_old.empty(),
          "els_build_holes: plan carries cut unknowns; use els_build");
  return els_build(std::move(a_kk), blocks, plan, std::move(update));
}

Mat els_solve_raw(const ElsSolver& s, const Mat& g_ext) {
  require(g_ext.rows() == s.n_ext(), "els_solve: extended size mismatch");
  Mat y = atilde_solve(s, g_ext, false);
  if (s.update.k > 0) y -= s.x * s.w_lu.solve(s.update.R * y);
  return y;
}

Mat els_solve_raw_t(const ElsSolver& s, const Mat& g_ext) {
  require(g_ext.rows() == s.n_ext(), "els_solve: extended size mismatch");
  // Transpose of (I - X W^{-1} R) Atilde^{-1}.
  Mat y = g_ext;
  if (s.update.k > 0) {
    const Mat tmp = s.w_lu.transpose().solve(Mat(s.x.transpose() * y));
    y -= s.update.R.transpose() * tmp;
  }
  return atilde_solve(s, y, true);
}

Vec els_solve_extended(const ElsSolver& s, const Vec& g_n) {
  require(g_n.size() == s.n_k + s.n_p, "els_solve: data size mismatch");
  Mat g_ext = Mat::Zero(s.n_ext(), 1);
  g_ext.topRows(s.n_k) = g_n.head(s.n_k);
  g_ext.bottomRows(s.n_p) = g_n.tail(s.n_p);
  return Vec(els_solve_raw(s, g_ext));
}

Vec els_solve(const ElsSolver& s, const Vec& g_n) {
  const Vec ext = els_solve_extended(s, g_n);
  Vec tau(s.n_k + s.n_p);
  tau.head(s.n_k) = ext.head(s.n_k);
  tau.tail(s.n_p) = ext.tail(s.n_p);
  return tau;
}

Vec els_apply_forward(const ElsSolver& s, const Vec& v) {
  require(v.size() == s.n_ext(), "els_apply_forward: size mismatch");
  Mat out = atilde_apply(s, v, false);
  if (s.update.k > 0) out += s.update.L * (s.update.R * v);
  return Vec(out);
}

Vec els_apply_forward_t(const ElsSolver& s, const Vec& v) {
  require(v.size() == s.n_ext(), "els_apply_forward: size mismatch");
  Mat out = atilde_apply(s, v, true);
  if (s.update.k > 0) out += s.update.R.transpose() * (s.update.L.transpose() * v);
  return Vec(out);
}

Vec density_on_refined(const ElsSolver& s, const Vec& tau_n) {
  require(tau_n.size() == s.n_k + s.n_p, "density_on_refined: size mismatch");
  Vec out = Vec::Zero(2 * s.new_a->disc().n_nodes());
  for (Index i = 0; i < s.n_k; ++i)
    out(s.kept_new_s[static_cast<size_t>(i)]) = tau_n(i);
  for (Index i = 0; i < s.n_p; ++i)
    out(s.added_s[static_cast<size_t>(i)]) = tau_n(s.n_k + i);
  return out;
}

namespace {

double dense_cond(const Mat& m) {
  if (m.size() == 0) return 1.0;
  Eigen::BDCSVD<Mat> svd(m);
  const Vec sv = svd.singularValues();
  const double lo = sv(sv.size() - 1);
  return lo > 0 ? sv(0) / lo : std::numeric_limits<double>::infinity();
}

// sigma_1 / sigma_k of a thin factor of declared rank k.
double factor_cond(const Mat& m, Index k) {
  if (k == 0) return 1.0;
  Eigen::BDCSVD<Mat> svd(m);
  const Vec sv = svd.singularValues();
  const double lo = sv(k - 1);
  return lo > 0 ? sv(0) / lo : std::numeric_limits<double>::infinity();
}

Mat dense_atilde(const ElsSolver& s) {
  std::vector<Index> oc = s.kept_old_s;
  oc.insert(oc.end(), s.cut_s.begin(), s.cut_s.end());
  Mat a = Mat::Zero(s.n_ext(), s.n_ext());
  a.topLeftCorner(s.n_k + s.n_c, s.n_k + s.n_c) = s.old_a->submatrix(oc, oc);
  if (s.n_p > 0)
    a.bottomRightCorner(s.n_p, s.n_p) = s.new_a->submatrix(s.added_s, s.added_s);
  return a;
}

}  // namespace

ConditioningReport conditioning_report(const ElsSolver& s,
                                       bool dense_oracles_allowed) {
  ConditioningReport r;
  const Index k = s.update.k;
  r.kappa_w = k > 0 ? dense_cond(s.w) : 1.0;
  r.kappa_l = factor_cond(s.update.L, k);
  r.kappa_r = factor_cond(s.update.R, k);

  if (dense_oracles_allowed) {
    const Mat atil = dense_atilde(s);
    r.kappa_tilde = dense_cond(atil);
    Mat ext = atil;
    if (k > 0) ext += s.update.L * s.update.R;
    r.kappa_ext = dense_cond(ext);
  } else {
    LinearOp fwd{s.n_ext(),
                 [&s](const Vec& v) { return els_apply_forward(s, v); },
                 [&s](const Vec& v) { return els_apply_forward_t(s, v); }};
    LinearOp inv{s.n_ext(),
                 [&s](const Vec& v) { return Vec(els_solve_raw(s, Mat(v))); },
                 [&s](const Vec& v) { return Vec(els_solve_raw_t(s, Mat(v))); }};
    r.kappa_ext = condition_estimate(fwd, inv);
    LinearOp tfwd{s.n_ext(),
                  [&s](const Vec& v) { return Vec(atilde_apply(s, Mat(v), false)); },
                  [&s](const Vec& v) { return Vec(atilde_apply(s, Mat(v), true)); }};
    LinearOp tinv{s.n_ext(),
                  [&s](const Vec& v) { return Vec(atilde_solve(s, Mat(v), false)); },
                  [&s](const Vec& v) { return Vec(atilde_solve(s, Mat(v), true)); }};
    r.kappa_tilde = condition_estimate(tfwd, tinv);
  }
  r.bound = std::min(r.kappa_l * r.kappa_l, r.kappa_r * r.kappa_r) *
            r.kappa_ext * r.kappa_tilde;
  r.bound_holds = r.kappa_w <= r.bound * 1.000001;
  return r;
}

}  // namespace stokesbie

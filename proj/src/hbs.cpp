#include "stokesbie/hbs.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>

#include "stokesbie/idlib.hpp"
#include "stokesbie/kernels.hpp"
#include "stokesbie/proxy.hpp"

namespace stokesbie {

Index HbsOperator::total_skeleton() const {
  Index t = 0;
  for (const auto& nd : nodes) t += nd.k;
  return t;
}

HbsSource make_hbs_source(std::shared_ptr<const BieAssembler> a) {
  HbsSource src;
  const Discretization& d = a->disc();
  src.points = d.x;
  src.source_normal = d.normal;
  src.source_weight = d.w;
  src.mu = a->formulation().mu;
  src.source_single_layer.resize(static_cast<size_t>(d.n_nodes()));
  for (Index i = 0; i < d.n_nodes(); ++i)
    src.source_single_layer[static_cast<size_t>(i)] =
        a->role(d.component_of_node(i)).single_layer ? 1 : 0;
  if (a->has_nullspace()) {
    src.row_null.resize(static_cast<size_t>(d.n_nodes()));
    src.col_null.resize(static_cast<size_t>(d.n_nodes()));
    for (Index i = 0; i < d.n_nodes(); ++i) {
      const bool in_null = a->role(d.component_of_node(i)).in_nullspace;
      src.row_null[static_cast<size_t>(i)] =
          in_null ? d.normal[static_cast<size_t>(i)] : Vec2::Zero();
      src.col_null[static_cast<size_t>(i)] =
          in_null ? Vec2(d.w[i] * d.normal[static_cast<size_t>(i)])
                  : Vec2::Zero();
    }
  }
  src.entries = [a](const std::vector<Index>& rows,
                    const std::vector<Index>& cols) {
    return a->submatrix(rows, cols);
  };
  return src;
}

HbsSource make_hbs_source_subset(std::shared_ptr<const BieAssembler> a,
                                 std::vector<Index> nodes) {
  HbsSource full = make_hbs_source(a);
  HbsSource src;
  src.mu = full.mu;
  const Index m = static_cast<Index>(nodes.size());
  src.points.resize(static_cast<size_t>(m));
  src.source_normal.resize(static_cast<size_t>(m));
  src.source_weight.resize(m);
  src.source_single_layer.resize(static_cast<size_t>(m));
  const bool has_null = !full.row_null.empty();
  if (has_null) {
    src.row_null.resize(static_cast<size_t>(m));
    src.col_null.resize(static_cast<size_t>(m));
  }
  for (Index i = 0; i < m; ++i) {
    const Index g = nodes[static_cast<size_t>(i)];
    src.points[static_cast<size_t>(i)] = full.points[static_cast<size_t>(g)];
    src.source_normal[static_cast<size_t>(i)] =
        full.source_normal[static_cast<size_t>(g)];
    src.source_weight(i) = full.source_weight(g);
    src.source_single_layer[static_cast<size_t>(i)] =
        full.source_single_layer[static_cast<size_t>(g)];
    if (has_null) {
      src.row_null[static_cast<size_t>(i)] =
          full.row_null[static_cast<size_t>(g)];
      src.col_null[static_cast<size_t>(i)] =
          full.col_null[static_cast<size_t>(g)];
    }
  }
  auto map = std::make_shared<std::vector<Index>>(std::move(nodes));
  src.entries = [a, map](const std::vector<Index>& rows,
                         const std::vector<Index>& cols) {
    std::vector<Index> gr, gc;
    gr.reserve(rows.size());
    gc.reserve(cols.size());
    for (Index r : rows)
      gr.push_back(2 * (*map)[static_cast<size_t>(r / 2)] + r % 2);
    for (Index c : cols)
      gc.push_back(2 * (*map)[static_cast<size_t>(c / 2)] + c % 2);
    return a->submatrix(gr, gc);
  };
  return src;
}

namespace {

using Oracle =
    std::function<Mat(const std::vector<Index>&, const std::vector<Index>&)>;

struct NodeRegion {
  Vec2 center = Vec2::Zero();
  double r0 = 0.0;
};

NodeRegion node_region(const HbsSource& src, Index begin, Index end) {
  NodeRegion reg;
  for (Index i = begin; i < end; ++i)
    reg.center += src.points[static_cast<size_t>(i)];
  reg.center /= double(end - begin);
  for (Index i = begin; i < end; ++i)
    reg.r0 = std::max(reg.r0,
                      (src.points[static_cast<size_t>(i)] - reg.center).norm());
  reg.r0 = std::max(reg.r0, 1e-12);
  return reg;
}

std::vector<Index> scalars_of_range(Index begin, Index end) {
  std::vector<Index> s;
  s.reserve(static_cast<size_t>(2 * (end - begin)));
  for (Index i = begin; i < end; ++i) {
    s.push_back(2 * i);
    s.push_back(2 * i + 1);
  }
  return s;
}

// Outgoing basis columns: fields at the candidate targets from single-layer
// and radial-dipole sources on the circle, plus the completion direction.
Mat row_proxy_block(const HbsSource& src, const std::vector<Index>& cand,
                    const std::vector<ProxyGeometry::Sample>& samples) {
  const Index m = static_cast<Index>(cand.size());
  const Index ns = static_cast<Index>(samples.size());
  const bool has_null = !src.row_null.empty();
  Mat w(m, 4 * ns + (has_null ? 1 : 0));
  for (Index r = 0; r < m; ++r) {
    const Index cs = cand[static_cast<size_t>(r)];
    const Index i = cs / 2;
    const Index a = cs % 2;
    const Vec2& x = src.points[static_cast<size_t>(i)];
    for (Index s = 0; s < ns; ++s) {
      const auto& smp = samples[static_cast<size_t>(s)];
      const Mat2 sl = stokeslet(x, smp.p, src.mu);
      const Mat2 dl = double_layer(x, smp.p, smp.radial);
      w(r, 4 * s + 0) = sl(a, 0);
      w(r, 4 * s + 1) = sl(a, 1);
      w(r, 4 * s + 2) = dl(a, 0);
      w(r, 4 * s + 3) = dl(a, 1);
    }
    if (has_null) w(r, 4 * ns) = src.row_null[static_cast<size_t>(i)](a);
  }
  return w;
}

// Incoming test rows, stored transposed (candidate-major): velocity and
// radial-derivative evaluations of the candidate source columns at the
// circle samples, plus the weighted completion functional.
Mat col_proxy_block_t(const HbsSource& src, const std::vector<Index>& cand,
                      const std::vector<ProxyGeometry::Sample>& samples) {
  const Index m = static_cast<Index>(cand.size());
  const Index ns = static_cast<Index>(samples.size());
  const bool has_null = !src.col_null.empty();
  Mat w(m, 4 * ns + (has_null ? 1 : 0));
  for (Index c = 0; c < m; ++c) {
    const Index cs = cand[static_cast<size_t>(c)];
    const Index j = cs / 2;
    const Index b = cs % 2;
    const Vec2& y = src.points[static_cast<size_t>(j)];
    const Vec2& nj = src.source_normal[static_cast<size_t>(j)];
    const double wj = src.source_weight(j);
    const bool sl = src.source_single_layer[static_cast<size_t>(j)] != 0;
    for (Index s = 0; s < ns; ++s) {
      const auto& smp = samples[static_cast<size_t>(s)];
      Mat2 val = double_layer(smp.p, y, nj);
      Mat2 grad = double_layer_gradient(smp.p, y, nj, smp.radial);
      if (sl) {
        val += stokeslet(smp.p, y, src.mu);
        grad += stokeslet_gradient(smp.p, y, src.mu, smp.radial);
      }
      w(c, 4 * s + 0) = wj * val(0, b);
      w(c, 4 * s + 1) = wj * val(1, b);
      w(c, 4 * s + 2) = wj * grad(0, b);
      w(c, 4 * s + 3) = wj * grad(1, b);
    }
    if (has_null) w(c, 4 * ns) = src.col_null[static_cast<size_t>(j)](b);
  }
  return w;
}

struct SettledId {
  IdResult id;
  Mat sample;
};

// Doubles the circle sample count until the rank settles to within 2, then
// keeps the finer result.
SettledId settled_row_id(
    const std::function<Mat(int)>& make, double eps, int n0,
    std::vector<std::string>& notes, const char* tag) {
  Mat w = make(n0);
  IdResult prev = row_id(w, eps);
  for (int ns = 2 * n0; ns <= 2048; ns *= 2) {
    Mat w2 = make(ns);
    IdResult cur = row_id(w2, eps);
    const bool settled = std::abs(double(cur.k) - double(prev.k)) <= 2.0;
    prev = std::move(cur);
    w = std::move(w2);
    if (settled) return {std::move(prev), std::move(w)};
  }
  notes.push_back(std::string(tag) + ": proxy sample cap reached");
  return {std::move(prev), std::move(w)};
}

struct TreeBuilder {
  const HbsSource& src;
  const HbsOptions& opts;
  HbsOperator& op;
  Oracle entries;
  std::vector<NodeRegion> regions;
  std::vector<std::vector<Index>> levels;  // node ids per depth

  std::vector<Index> row_candidates(const HbsNode& nd) const {
    if (nd.is_leaf()) return scalars_of_range(nd.begin, nd.end);
    std::vector<Index> cand = op.nodes[static_cast<size_t>(nd.left)].row_skel;
    const auto& r = op.nodes[static_cast<size_t>(nd.right)].row_skel;
    cand.insert(cand.end(), r.begin(), r.end());
    return cand;
  }
  std::vector<Index> col_candidates(const HbsNode& nd) const {
    if (nd.is_leaf()) return scalars_of_range(nd.begin, nd.end);
    std::vector<Index> cand = op.nodes[static_cast<size_t>(nd.left)].col_skel;
    const auto& r = op.nodes[static_cast<size_t>(nd.right)].col_skel;
    cand.insert(cand.end(), r.begin(), r.end());
    return cand;
  }

  // Scalars outside the node that must be sampled exactly.  Leaves take
  // every geometric neighbor; internal nodes take the candidate scalars of
  // intersecting same-depth nodes, which contain every skeleton the upper
  // levels can draw from that region.
  void near_sets(Index id, std::vector<Index>& near_cols,
                 std::vector<Index>& near_rows) const {
    const HbsNode& nd = op.nodes[static_cast<size_t>(id)];
    const NodeRegion& reg = regions[static_cast<size_t>(id)];
    const double rad = opts.div_factor * reg.r0;
    if (nd.is_leaf()) {
      for (Index j = 0; j < src.n_nodes(); ++j) {
        if (j >= nd.begin && j < nd.end) continue;
        if ((src.points[static_cast<size_t>(j)] - reg.center).norm() <= rad) {
          near_cols.push_back(2 * j);
          near_cols.push_back(2 * j + 1);
        }
      }
      near_rows = near_cols;
      return;
    }
    for (Index other : levels[static_cast<size_t>(nd.depth)]) {
      if (other == id) continue;
      const NodeRegion& oreg = regions[static_cast<size_t>(other)];
      if ((oreg.center - reg.center).norm() > rad + oreg.r0) continue;
      const HbsNode& ond = op.nodes[static_cast<size_t>(other)];
      std::vector<Index> cc = col_candidates(ond);
      std::vector<Index> rc = row_candidates(ond);
      near_cols.insert(near_cols.end(), cc.begin(), cc.end());
      near_rows.insert(near_rows.end(), rc.begin(), rc.end());
    }
  }

  void compress_node(Index id) {
    HbsNode& nd = op.nodes[static_cast<size_t>(id)];
    const std::vector<Index> row_cand = row_candidates(nd);
    const std::vector<Index> col_cand = col_candidates(nd);
    const NodeRegion& reg = regions[static_cast<size_t>(id)];

    ProxyGeometry pg;
    pg.circles = {ProxyCircle{reg.center, reg.r0}};
    pg.bas_factor = opts.bas_factor;
    pg.div_factor = opts.div_factor;

    std::vector<Index> near_cols, near_rows;
    near_sets(id, near_cols, near_rows);
    const Mat rnear = near_cols.empty()
                          ? Mat(static_cast<Index>(row_cand.size()), 0)
                          : entries(row_cand, near_cols);
    const Mat cnear_t = near_rows.empty()
                            ? Mat(static_cast<Index>(col_cand.size()), 0)
                            : Mat(entries(near_rows, col_cand).transpose());

    auto make_row = [&](int ns) {
      Mat p = row_proxy_block(src, row_cand, pg.surface_samples(
                                                 ProxySurface::Basis, ns));
      Mat w(p.rows(), p.cols() + rnear.cols());
      w << p, rnear;
      return w;
    };
    auto make_col = [&](int ns) {
      Mat p = col_proxy_block_t(src, col_cand, pg.surface_samples(
                                                   ProxySurface::Basis, ns));
      Mat w(p.rows(), p.cols() + cnear_t.cols());
      w << p, cnear_t;
      return w;
    };
    SettledId rows =
        settled_row_id(make_row, opts.eps, pg.n_proxy, op.notes, "hbs row");
    SettledId cols =
        settled_row_id(make_col, opts.eps, pg.n_proxy, op.notes, "hbs col");

    Index k = std::max(rows.id.k, cols.id.k);
    if (rows.id.k < k) rows.id = row_id_rank(rows.sample, k);
    if (cols.id.k < k) cols.id = row_id_rank(cols.sample, k);
    k = std::min(rows.id.k, cols.id.k);
    if (rows.id.k > k) rows.id = row_id_rank(rows.sample, k);
    if (cols.id.k > k) cols.id = row_id_rank(cols.sample, k);

    nd.k = k;
    nd.u = rows.id.P;
    nd.v = cols.id.P;
    nd.row_skel.resize(static_cast<size_t>(k));
    nd.col_skel.resize(static_cast<size_t>(k));
    for (Index i = 0; i < k; ++i) {
      nd.row_skel[static_cast<size_t>(i)] =
          row_cand[static_cast<size_t>(rows.id.J[static_cast<size_t>(i)])];
      nd.col_skel[static_cast<size_t>(i)] =
          col_cand[static_cast<size_t>(cols.id.J[static_cast<size_t>(i)])];
    }
    if (k == static_cast<Index>(row_cand.size()))
      op.notes.push_back("node [" + std::to_string(nd.begin) + "," +
                         std::to_string(nd.end) +
                         ") kept at full rank (stored dense)");
  }
};

Index invert_check(const Eigen::PartialPivLU<Mat>& lu, double thr,
                   const HbsNode& nd, const char* what) {
  const double rc = lu.rcond();
  if (!(rc >= thr)) {
    throw SingularMatrixError(
        "singular " + std::string(what) + " block (rcond " +
            std::to_string(rc) + ")",
        "tree node [" + std::to_string(nd.begin) + "," +
            std::to_string(nd.end) + ") depth " + std::to_string(nd.depth));
  }
  return 0;
}

}  // namespace

HbsOperator hbs_compress(const HbsSource& src, const HbsOptions& opts) {
  require(src.n_nodes() > 0, "hbs_compress: empty source");
  require(opts.eps > 0.0 && opts.eps <= 0.1,
          "hbs_compress: tolerance out of range");
  require(opts.leaf_nodes >= 2, "hbs_compress: leaf size too small");

  HbsOperator op;
  op.n = 2 * src.n_nodes();
  op.leaf_nodes = opts.leaf_nodes;
  op.eps = opts.eps;

  // Balanced binary tree over the node range, breadth-first storage.
  struct Pending {
    Index begin, end, parent;
    int depth;
  };
  std::vector<Pending> queue{{0, src.n_nodes(), -1, 0}};
  for (size_t qi = 0; qi < queue.size(); ++qi) {
    const Pending p = queue[qi];
    HbsNode nd;
    nd.begin = p.begin;
    nd.end = p.end;
    nd.parent = p.parent;
    nd.depth = p.depth;
    const Index id = static_cast<Index>(op.nodes.size());
    if (p.parent >= 0) {
      HbsNode& par = op.nodes[static_cast<size_t>(p.parent)];
      (par.left < 0 ? par.left : par.right) = id;
    }
    op.nodes.push_back(nd);
    if (p.end - p.begin > opts.leaf_nodes) {
      const Index mid = p.begin + (p.end - p.begin) / 2;
      queue.push_back({p.begin, mid, id, p.depth + 1});
      queue.push_back({mid, p.end, id, p.depth + 1});
    }
  }

  Index max_block = 0;
  Oracle entries = [&](const std::vector<Index>& r,
                       const std::vector<Index>& c) {
    max_block = std::max(max_block, static_cast<Index>(r.size() * c.size()));
    return src.entries(r, c);
  };

  TreeBuilder tb{src, opts, op, entries, {}, {}};
  tb.regions.resize(op.nodes.size());
  int max_depth = 0;
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    tb.regions[i] = node_region(src, op.nodes[i].begin, op.nodes[i].end);
    max_depth = std::max(max_depth, op.nodes[i].depth);
  }
  tb.levels.assign(static_cast<size_t>(max_depth + 1), {});
  for (size_t i = 0; i < op.nodes.size(); ++i)
    tb.levels[static_cast<size_t>(op.nodes[i].depth)].push_back(
        static_cast<Index>(i));

  // Leaf diagonal blocks.
  for (auto& nd : op.nodes)
    if (nd.is_leaf())
      nd.d = entries(scalars_of_range(nd.begin, nd.end),
                     scalars_of_range(nd.begin, nd.end));

  // Bottom-up skeletonization; the root keeps no factors of its own.
  for (int depth = max_depth; depth >= 1; --depth) {
    for (Index id : tb.levels[static_cast<size_t>(depth)]) tb.compress_node(id);
    for (Index id : tb.levels[static_cast<size_t>(depth)]) {
      HbsNode& nd = op.nodes[static_cast<size_t>(id)];
      const HbsNode& par = op.nodes[static_cast<size_t>(nd.parent)];
      const Index sib = par.left == id ? par.right : par.left;
      nd.b_sib = entries(nd.row_skel,
                         op.nodes[static_cast<size_t>(sib)].col_skel);
    }
  }

  op.max_block_drawn = max_block;
  return op;
}

void hbs_invert(HbsOperator& op) {
  require(!op.nodes.empty(), "hbs_invert: empty operator");
  const double thr = std::max(std::min(10.0 * op.eps, 1e-6), 1e-14);

  int max_depth = 0;
  for (const auto& nd : op.nodes) max_depth = std::max(max_depth, nd.depth);

  for (int depth = max_depth; depth >= 0; --depth) {
    for (size_t i = 0; i < op.nodes.size(); ++i) {
      HbsNode& nd = op.nodes[i];
      if (nd.depth != depth) continue;
      Mat x;
      if (nd.is_leaf()) {
        x = nd.d;
      } else {
        const HbsNode& l = op.nodes[static_cast<size_t>(nd.left)];
        const HbsNode& r = op.nodes[static_cast<size_t>(nd.right)];
        x.resize(l.k + r.k, l.k + r.k);
        x.topLeftCorner(l.k, l.k) = l.dhat;
        x.topRightCorner(l.k, r.k) = l.b_sib;
        x.bottomLeftCorner(r.k, l.k) = r.b_sib;
        x.bottomRightCorner(r.k, r.k) = r.dhat;
      }
      if (i == 0) {
        if (x.rows() == 0) {
          op.root_g = x;
        } else {
          Eigen::PartialPivLU<Mat> lu(x);
          invert_check(lu, thr, nd, "root");
          op.root_g = lu.inverse();
        }
        continue;
      }
      if (x.rows() == 0) {
        nd.dhat = Mat(0, 0);
        nd.e = Mat(0, nd.k);
        nd.f = Mat(nd.k, 0);
        nd.g = x;
        continue;
      }
      Eigen::PartialPivLU<Mat> lu(x);
      invert_check(lu, thr, nd, "diagonal");
      const Mat xi = lu.inverse();
      const Mat t = nd.v.transpose() * xi;  // k x cand
      if (nd.k == 0) {
        nd.dhat = Mat(0, 0);
        nd.e = Mat(x.rows(), 0);
        nd.f = Mat(0, x.rows());
        nd.g = xi;
        continue;
      }
      Eigen::PartialPivLU<Mat> lu2(Mat(t * nd.u));
      invert_check(lu2, thr, nd, "skeleton");
      nd.dhat = lu2.inverse();
      nd.e = xi * nd.u * nd.dhat;
      nd.f = nd.dhat * t;
      nd.g = xi - nd.e * t;
    }
  }
  op.has_inverse = true;
}

namespace {

// Shared traversal buffers for the O(N) sweeps.
struct Sweep {
  const HbsOperator& op;
  std::vector<Mat> hat, inc;

  explicit Sweep(const HbsOperator& o)
      : op(o), hat(o.nodes.size()), inc(o.nodes.size()) {}

  Mat stack_children(const HbsNode& nd) const {
    const Mat& a = hat[static_cast<size_t>(nd.left)];
    const Mat& b = hat[static_cast<size_t>(nd.right)];
    Mat s(a.rows() + b.rows(), a.cols());
    s.topRows(a.rows()) = a;
    s.bottomRows(b.rows()) = b;
    return s;
  }
};

}  // namespace

Mat hbs_apply(const HbsOperator& op, const Mat& v) {
  require(v.rows() == op.n, "hbs_apply: size mismatch");
  if (op.nodes.size() == 1) return op.nodes[0].d * v;
  Sweep sw(op);
  for (size_t i = op.nodes.size(); i-- > 0;) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf())
      sw.hat[i] =
          nd.v.transpose() * v.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin));
    else
      sw.hat[i] = nd.v.transpose() * sw.stack_children(nd);
  }
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf()) continue;
    const auto l = static_cast<size_t>(nd.left), r = static_cast<size_t>(nd.right);
    sw.inc[l] = op.nodes[l].b_sib * sw.hat[r];
    sw.inc[r] = op.nodes[r].b_sib * sw.hat[l];
    if (i != 0) {
      const Mat uw = nd.u * sw.inc[i];
      sw.inc[l] += uw.topRows(op.nodes[l].k);
      sw.inc[r] += uw.bottomRows(op.nodes[r].k);
    }
  }
  Mat out(op.n, v.cols());
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (!nd.is_leaf()) continue;
    out.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) =
        nd.d * v.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) +
        nd.u * sw.inc[i];
  }
  return out;
}

Mat hbs_apply_t(const HbsOperator& op, const Mat& v) {
  require(v.rows() == op.n, "hbs_apply_t: size mismatch");
  if (op.nodes.size() == 1) return op.nodes[0].d.transpose() * v;
  Sweep sw(op);
  for (size_t i = op.nodes.size(); i-- > 0;) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf())
      sw.hat[i] =
          nd.u.transpose() * v.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin));
    else {
      Mat s(op.nodes[static_cast<size_t>(nd.left)].k +
                op.nodes[static_cast<size_t>(nd.right)].k,
            v.cols());
      s.topRows(op.nodes[static_cast<size_t>(nd.left)].k) =
          sw.hat[static_cast<size_t>(nd.left)];
      s.bottomRows(op.nodes[static_cast<size_t>(nd.right)].k) =
          sw.hat[static_cast<size_t>(nd.right)];
      sw.hat[i] = nd.u.transpose() * s;
    }
  }
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf()) continue;
    const auto l = static_cast<size_t>(nd.left), r = static_cast<size_t>(nd.right);
    sw.inc[l] = op.nodes[r].b_sib.transpose() * sw.hat[r];
    sw.inc[r] = op.nodes[l].b_sib.transpose() * sw.hat[l];
    if (i != 0) {
      const Mat vw = nd.v * sw.inc[i];
      sw.inc[l] += vw.topRows(op.nodes[l].k);
      sw.inc[r] += vw.bottomRows(op.nodes[r].k);
    }
  }
  Mat out(op.n, v.cols());
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (!nd.is_leaf()) continue;
    out.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) =
        nd.d.transpose() * v.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) +
        nd.v * sw.inc[i];
  }
  return out;
}

Mat hbs_solve(const HbsOperator& op, const Mat& b) {
  require(op.has_inverse, "hbs_solve: inverse not built");
  require(b.rows() == op.n, "hbs_solve: size mismatch");
  if (op.nodes.size() == 1) return op.root_g * b;
  Sweep sw(op);
  for (size_t i = op.nodes.size(); i-- > 0;) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf())
      sw.hat[i] = nd.f * b.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin));
    else
      sw.hat[i] = nd.f * sw.stack_children(nd);
  }
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf()) continue;
    const auto l = static_cast<size_t>(nd.left), r = static_cast<size_t>(nd.right);
    Mat q(op.nodes[l].k + op.nodes[r].k, b.cols());
    q.topRows(op.nodes[l].k) = sw.hat[l];
    q.bottomRows(op.nodes[r].k) = sw.hat[r];
    Mat y;
    if (i == 0)
      y = op.root_g * q;
    else
      y = nd.g * q + nd.e * sw.inc[i];
    sw.inc[l] = y.topRows(op.nodes[l].k);
    sw.inc[r] = y.bottomRows(op.nodes[r].k);
  }
  Mat out(op.n, b.cols());
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (!nd.is_leaf()) continue;
    out.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) =
        nd.g * b.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) +
        nd.e * sw.inc[i];
  }
  return out;
}

Mat hbs_solve_t(const HbsOperator& op, const Mat& b) {
  require(op.has_inverse, "hbs_solve_t: inverse not built");
  require(b.rows() == op.n, "hbs_solve_t: size mismatch");
  if (op.nodes.size() == 1) return op.root_g.transpose() * b;
  Sweep sw(op);
  for (size_t i = op.nodes.size(); i-- > 0;) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf())
      sw.hat[i] = nd.e.transpose() *
                  b.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin));
    else
      sw.hat[i] = nd.e.transpose() * sw.stack_children(nd);
  }
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (nd.is_leaf()) continue;
    const auto l = static_cast<size_t>(nd.left), r = static_cast<size_t>(nd.right);
    Mat q(op.nodes[l].k + op.nodes[r].k, b.cols());
    q.topRows(op.nodes[l].k) = sw.hat[l];
    q.bottomRows(op.nodes[r].k) = sw.hat[r];
    Mat y;
    if (i == 0)
      y = op.root_g.transpose() * q;
    else
      y = nd.g.transpose() * q + nd.f.transpose() * sw.inc[i];
    sw.inc[l] = y.topRows(op.nodes[l].k);
    sw.inc[r] = y.bottomRows(op.nodes[r].k);
  }
  Mat out(op.n, b.cols());
  for (size_t i = 0; i < op.nodes.size(); ++i) {
    const HbsNode& nd = op.nodes[i];
    if (!nd.is_leaf()) continue;
    out.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) =
        nd.g.transpose() * b.middleRows(2 * nd.begin, 2 * (nd.end - nd.begin)) +
        nd.f.transpose() * sw.inc[i];
  }
  return out;
}

Vec hbs_apply(const HbsOperator& op, const Vec& v) {
  return Vec(hbs_apply(op, Mat(v)));
}
Vec hbs_apply_t(const HbsOperator& op, const Vec& v) {
  return Vec(hbs_apply_t(op, Mat(v)));
}
Vec hbs_solve(const HbsOperator& op, const Vec& b) {
  return Vec(hbs_solve(op, Mat(b)));
}
Vec hbs_solve_t(const HbsOperator& op, const Vec& b) {
  return Vec(hbs_solve_t(op, Mat(b)));
}

namespace {

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <class T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}
void write_mat(std::ostream& os, const Mat& m) {
  write_pod<std::int64_t>(os, m.rows());
  write_pod<std::int64_t>(os, m.cols());
  if (m.size() > 0) write_bytes(os, m.data(), sizeof(double) * m.size());
}
void write_idx(std::ostream& os, const std::vector<Index>& v) {
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(v.size()));
  for (Index i : v) write_pod<std::int64_t>(os, i);
}

void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("hbs_load: truncated file");
}
template <class T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}
Mat read_mat(std::istream& is) {
  const auto r = read_pod<std::int64_t>(is);
  const auto c = read_pod<std::int64_t>(is);
  Mat m(r, c);
  if (m.size() > 0) read_bytes(is, m.data(), sizeof(double) * m.size());
  return m;
}
std::vector<Index> read_idx(std::istream& is) {
  const auto n = read_pod<std::int64_t>(is);
  std::vector<Index> v(static_cast<size_t>(n));
  for (auto& i : v) i = static_cast<Index>(read_pod<std::int64_t>(is));
  return v;
}

}  // namespace

void hbs_save(const HbsOperator& op, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "hbs_save: cannot open " + path);
  os.write("HBS1", 4);
  write_pod<std::uint32_t>(os, 1);
  write_pod<std::uint8_t>(os, op.has_inverse ? 1 : 0);
  write_pod<std::int64_t>(os, op.n);
  write_pod<std::int64_t>(os, op.leaf_nodes);
  write_pod<double>(os, op.eps);
  write_pod<std::int64_t>(os, op.max_block_drawn);
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(op.nodes.size()));
  for (const auto& nd : op.nodes) {
    write_pod<std::int64_t>(os, nd.begin);
    write_pod<std::int64_t>(os, nd.end);
    write_pod<std::int64_t>(os, nd.parent);
    write_pod<std::int64_t>(os, nd.left);
    write_pod<std::int64_t>(os, nd.right);
    write_pod<std::int32_t>(os, nd.depth);
    write_pod<std::int64_t>(os, nd.k);
    write_idx(os, nd.row_skel);
    write_idx(os, nd.col_skel);
    write_mat(os, nd.u);
    write_mat(os, nd.v);
    write_mat(os, nd.d);
    write_mat(os, nd.b_sib);
    write_mat(os, nd.dhat);
    write_mat(os, nd.e);
    write_mat(os, nd.f);
    write_mat(os, nd.g);
  }
  write_mat(os, op.root_g);
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(op.notes.size()));
  for (const auto& s : op.notes) {
    write_pod<std::int64_t>(os, static_cast<std::int64_t>(s.size()));
    write_bytes(os, s.data(), s.size());
  }
  require(bool(os), "hbs_save: write failed");
}

HbsOperator hbs_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "hbs_load: cannot open " + path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, "HBS1", 4) != 0)
    throw std::runtime_error("hbs_load: bad magic bytes");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("hbs_load: unsupported version");
  HbsOperator op;
  op.has_inverse = read_pod<std::uint8_t>(is) != 0;
  op.n = static_cast<Index>(read_pod<std::int64_t>(is));
  op.leaf_nodes = static_cast<Index>(read_pod<std::int64_t>(is));
  op.eps = read_pod<double>(is);
  op.max_block_drawn = static_cast<Index>(read_pod<std::int64_t>(is));
  const auto count = read_pod<std::int64_t>(is);
  op.nodes.resize(static_cast<size_t>(count));
  for (auto& nd : op.nodes) {
    nd.begin = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.end = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.parent = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.left = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.right = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.depth = static_cast<int>(read_pod<std::int32_t>(is));
    nd.k = static_cast<Index>(read_pod<std::int64_t>(is));
    nd.row_skel = read_idx(is);
    nd.col_skel = read_idx(is);
    nd.u = read_mat(is);
    nd.v = read_mat(is);
    nd.d = read_mat(is);
    nd.b_sib = read_mat(is);
    nd.dhat = read_mat(is);
    nd.e = read_mat(is);
    nd.f = read_mat(is);
    nd.g = read_mat(is);
  }
  op.root_g = read_mat(is);
  const auto nn = read_pod<std::int64_t>(is);
  op.notes.resize(static_cast<size_t>(nn));
  for (auto& s : op.notes) {
    const auto len = read_pod<std::int64_t>(is);
    s.resize(static_cast<size_t>(len));
    if (len > 0) read_bytes(is, s.data(), static_cast<size_t>(len));
  }
  return op;
}

}  // namespace stokesbie

#include "stokesbie/lowrank.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <utility>

namespace stokesbie {

namespace {

std::vector<Index> expand_scalar(const std::vector<Index>& positions) {
  std::vector<Index> out;
  out.reserve(2 * positions.size());
  for (Index p : positions) {
    out.push_back(2 * p);
    out.push_back(2 * p + 1);
  }
  return out;
}

std::vector<Index> iota_vec(Index n) {
  std::vector<Index> v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

// Positions -> geometry for a node subset of a discretization.
std::vector<Vec2> subset_points(const Discretization& d,
                                const std::vector<Index>& nodes) {
  std::vector<Vec2> out;
  out.reserve(nodes.size());
  for (Index n : nodes) out.push_back(d.x[static_cast<size_t>(n)]);
  return out;
}

// Normal field masked to components that carry the completion term; empty
// when the formulation has none.
std::vector<Vec2> completion_normals(const BieAssembler& a,
                                     const std::vector<Index>& nodes) {
  if (!a.has_nullspace()) return {};
  const Discretization& d = a.disc();
  std::vector<Vec2> out;
  out.reserve(nodes.size());
  for (Index n : nodes) {
    const bool in_null = a.role(d.component_of_node(n)).in_nullspace;
    out.push_back(in_null ? d.normal[static_cast<size_t>(n)] : Vec2::Zero());
  }
  return out;
}

using RowEval = std::function<Mat(const std::vector<Index>&)>;

struct NearChunk {
  std::vector<Index> rows, skel;
  Mat P;
};

// Row ID of an implicitly evaluated matrix.  Direct when the dense block
// fits the memory budget, otherwise chunked rows with hierarchical skeleton
// merging.
IdResult near_row_id(const RowEval& eval, Index n_rows, Index n_cols,
                     double eps, Index entry_limit,
                     std::vector<std::string>& notes, const char* tag) {
  if (n_rows == 0 || n_cols == 0) {
    IdResult out;
    out.eps = eps;
    out.J = iota_vec(n_rows);
    out.P = Mat::Zero(n_rows, 0);
    return out;
  }
  if (n_rows * n_cols <= entry_limit) return row_id(eval(iota_vec(n_rows)), eps);

  notes.push_back(std::string(tag) +
                  ": near block over memory budget, using row partition");
  const Index chunk = 256;
  std::vector<NearChunk> level;
  for (Index start = 0; start < n_rows; start += chunk) {
    NearChunk c;
    for (Index r = start; r < std::min(start + chunk, n_rows); ++r)
      c.rows.push_back(r);
    const IdResult id = row_id(eval(c.rows), eps);
    for (Index i = 0; i < id.k; ++i)
      c.skel.push_back(c.rows[static_cast<size_t>(id.J[static_cast<size_t>(i)])]);
    c.P = id.P;
    level.push_back(std::move(c));
  }
  while (level.size() > 1) {
    std::vector<NearChunk> next;
    for (size_t i = 0; i + 1 < level.size(); i += 2) {
      const NearChunk& a = level[i];
      const NearChunk& b = level[i + 1];
      std::vector<Index> uni = a.skel;
      uni.insert(uni.end(), b.skel.begin(), b.skel.end());
      const IdResult id = row_id(eval(uni), eps);
      NearChunk m;
      m.rows = a.rows;
      m.rows.insert(m.rows.end(), b.rows.begin(), b.rows.end());
      for (Index i2 = 0; i2 < id.k; ++i2)
        m.skel.push_back(uni[static_cast<size_t>(id.J[static_cast<size_t>(i2)])]);
      m.P.resize(a.P.rows() + b.P.rows(), id.k);
      m.P.topRows(a.P.rows()) =
          a.P * id.P.topRows(static_cast<Index>(a.skel.size()));
      m.P.bottomRows(b.P.rows()) =
          b.P * id.P.bottomRows(static_cast<Index>(b.skel.size()));
      next.push_back(std::move(m));
    }
    if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
    level = std::move(next);
  }

  const NearChunk& root = level.front();
  IdResult out;
  out.eps = eps;
  out.k = static_cast<Index>(root.skel.size());
  out.P = Mat::Zero(n_rows, out.k);
  for (Index r = 0; r < static_cast<Index>(root.rows.size()); ++r)
    out.P.row(root.rows[static_cast<size_t>(r)]) = root.P.row(r);
  out.J = root.skel;
  std::vector<char> in_skel(static_cast<size_t>(n_rows), 0);
  for (Index s : root.skel) in_skel[static_cast<size_t>(s)] = 1;
  for (Index r = 0; r < n_rows; ++r)
    if (!in_skel[static_cast<size_t>(r)]) out.J.push_back(r);
  return out;
}

// Far + near row factors for one of the kept-row blocks (kc or kp).  The far
// interpolation is shared between the two blocks; only the skeleton rows of
// the true block are evaluated for R.
BlockFactor kept_row_factor(const BlockSource& src, BlockName block,
                            const IdResult& far_id,
                            const std::vector<Index>& far_scalar,
                            const std::vector<Index>& near_scalar, double eps,
                            const CompressOptions& opts,
                            std::vector<std::string>& notes, const char* tag) {
  const Index rows = src.rows_of(block);
  const Index cols = src.cols_of(block);
  if (rows == 0 || cols == 0)
    return BlockFactor{Mat::Zero(rows, 0), Mat::Zero(0, cols), 0};
  const std::vector<Index> all_cols = iota_vec(cols);

  RowEval near_eval = [&](const std::vector<Index>& rr) {
    std::vector<Index> mapped;
    mapped.reserve(rr.size());
    for (Index r : rr) mapped.push_back(near_scalar[static_cast<size_t>(r)]);
    return src.eval(block, mapped, all_cols);
  };
  const IdResult near_id =
      near_row_id(near_eval, static_cast<Index>(near_scalar.size()), cols, eps,
                  opts.near_dense_limit, notes, tag);

  BlockFactor f;
  f.k = far_id.k + near_id.k;
  f.L = Mat::Zero(rows, f.k);
  for (Index r = 0; r < static_cast<Index>(far_scalar.size()); ++r)
    f.L.block(far_scalar[static_cast<size_t>(r)], 0, 1, far_id.k) =
        far_id.P.row(r);
  for (Index r = 0; r < static_cast<Index>(near_scalar.size()); ++r)
    f.L.block(near_scalar[static_cast<size_t>(r)], far_id.k, 1, near_id.k) =
        near_id.P.row(r);

  std::vector<Index> skel;
  for (Index i = 0; i < far_id.k; ++i)
    skel.push_back(far_scalar[static_cast<size_t>(far_id.J[static_cast<size_t>(i)])]);
  for (Index i = 0; i < near_id.k; ++i)
    skel.push_back(near_scalar[static_cast<size_t>(near_id.J[static_cast<size_t>(i)])]);
  f.R = skel.empty() ? Mat::Zero(0, cols) : src.eval(block, skel, all_cols);

  if (opts.reid_concat && f.k > 0) {
    const IdResult rid = row_id(f.L, eps);
    Mat lsk(rid.k, f.k);
    for (Index i = 0; i < rid.k; ++i)
      lsk.row(i) = f.L.row(rid.J[static_cast<size_t>(i)]);
    f.R = lsk * f.R;
    f.L = rid.P;
    f.k = rid.k;
    notes.push_back(std::string(tag) + ": concatenated factor re-compressed");
  }
  return f;
}

// Added-row block: far/near split lives on the columns.
BlockFactor added_row_factor(const BlockSource& src, const IdResult& far_id,
                             const std::vector<Index>& far_scalar,
                             const std::vector<Index>& near_scalar, double eps,
                             const CompressOptions& opts,
                             std::vector<std::string>& notes) {
  const BlockName block = BlockName::pk;
  const Index rows = src.rows_of(block);
  const Index cols = src.cols_of(block);
  if (rows == 0 || cols == 0)
    return BlockFactor{Mat::Zero(rows, 0), Mat::Zero(0, cols), 0};

  RowEval near_eval = [&](const std::vector<Index>& rr) {
    return src.eval(block, rr, near_scalar);
  };
  const IdResult near_id =
      near_row_id(near_eval, rows, static_cast<Index>(near_scalar.size()), eps,
                  opts.near_dense_limit, notes, "pk");

  BlockFactor f;
  f.k = far_id.k + near_id.k;
  f.L.resize(rows, f.k);
  f.L.leftCols(far_id.k) = far_id.P;
  f.L.rightCols(near_id.k) = near_id.P;

  f.R = Mat::Zero(f.k, cols);
  if (far_id.k > 0) {
    std::vector<Index> skel_far;
    for (Index i = 0; i < far_id.k; ++i)
      skel_far.push_back(far_id.J[static_cast<size_t>(i)]);
    const Mat rfar = src.eval(block, skel_far, far_scalar);
    for (Index c = 0; c < static_cast<Index>(far_scalar.size()); ++c)
      f.R.block(0, far_scalar[static_cast<size_t>(c)], far_id.k, 1) =
          rfar.col(c);
  }
  if (near_id.k > 0) {
    std::vector<Index> skel_near;
    for (Index i = 0; i < near_id.k; ++i)
      skel_near.push_back(near_id.J[static_cast<size_t>(i)]);
    const Mat rnear = src.eval(block, skel_near, near_scalar);
    for (Index c = 0; c < static_cast<Index>(near_scalar.size()); ++c)
      f.R.block(far_id.k, near_scalar[static_cast<size_t>(c)], near_id.k, 1) =
          rnear.col(c);
  }

  if (opts.reid_concat && f.k > 0) {
    const IdResult rid = row_id(f.L, eps);
    Mat lsk(rid.k, f.k);
    for (Index i = 0; i < rid.k; ++i)
      lsk.row(i) = f.L.row(rid.J[static_cast<size_t>(i)]);
    f.R = lsk * f.R;
    f.L = rid.P;
    f.k = rid.k;
    notes.push_back("pk: concatenated factor re-compressed");
  }
  return f;
}

void assemble_stacked(LowRankUpdate& u) {
  u.k1 = u.pk.k + u.kc.k + u.kp.k;
  u.L1 = Mat::Zero(u.n_ext(), u.k1);
  u.R1 = Mat::Zero(u.k1, u.n_ext());
  const Index ck0 = 0, ckc = u.pk.k, ckp = u.pk.k + u.kc.k;
  if (u.kc.k > 0) u.L1.block(0, ckc, u.nk2, u.kc.k) = -u.kc.L;
  if (u.kp.k > 0) u.L1.block(0, ckp, u.nk2, u.kp.k) = u.kp.L;
  if (u.pk.k > 0) u.L1.block(u.nk2 + u.nc2, ck0, u.np2, u.pk.k) = u.pk.L;
  if (u.pk.k > 0) u.R1.block(ck0, 0, u.pk.k, u.nk2) = u.pk.R;
  if (u.kc.k > 0) u.R1.block(ckc, u.nk2, u.kc.k, u.nc2) = u.kc.R;
  if (u.kp.k > 0) u.R1.block(ckp, u.nk2 + u.nc2, u.kp.k, u.np2) = u.kp.R;
}

LowRankUpdate two_step(const BlockSource& src, const ProxyGeometry& proxy,
                       double eps, const CompressOptions& opts) {
  LowRankUpdate u;
  u.mode = CompressionMode::TwoStepId;
  const RefinementPlan& plan = src.plan();
  u.nk2 = 2 * plan.n_k();
  u.nc2 = 2 * plan.n_c();
  u.np2 = 2 * plan.n_p();

  const BieAssembler& nb = src.new_oracle();
  const Discretization& dn = nb.disc();

  if (u.nc2 == 0 && u.np2 == 0) {
    u.kc = {Mat::Zero(u.nk2, 0), Mat::Zero(0, 0), 0};
    u.kp = {Mat::Zero(u.nk2, 0), Mat::Zero(0, 0), 0};
    u.pk = {Mat::Zero(0, 0), Mat::Zero(0, u.nk2), 0};
    assemble_stacked(u);
    u.L = Mat::Zero(u.n_ext(), 0);
    u.R = Mat::Zero(0, u.n_ext());
    return u;
  }

  // Shared far-field ID over the kept rows.
  const std::vector<Vec2> kept_pts = subset_points(dn, plan.kept_new);
  auto [far_pos, near_pos] = split_far_near(kept_pts, proxy);
  std::vector<Index> far_nodes;
  for (Index p : far_pos)
    far_nodes.push_back(plan.kept_new[static_cast<size_t>(p)]);
  const std::vector<Vec2> far_pts = subset_points(dn, far_nodes);
  const std::vector<Vec2> far_nrm = completion_normals(nb, far_nodes);
  const PartitionTree ktree =
      build_partition_tree(opts.tree_kind, far_pts, proxy, opts.leaf_cap);
  const IdResult far_id =
      compress_block_far(far_pts, far_nrm.empty() ? nullptr : &far_nrm, proxy,
                         ProxySurface::Basis, ktree, eps);

  const std::vector<Index> far_scalar = expand_scalar(far_pos);
  const std::vector<Index> near_scalar = expand_scalar(near_pos);
  u.kc = kept_row_factor(src, BlockName::kc, far_id, far_scalar, near_scalar,
                         eps, opts, u.notes, "kc");
  u.kp = kept_row_factor(src, BlockName::kp, far_id, far_scalar, near_scalar,
                         eps, opts, u.notes, "kp");

  // Added rows against the division surface.
  const std::vector<Vec2> added_pts = subset_points(dn, plan.added_new);
  const std::vector<Vec2> added_nrm = completion_normals(nb, plan.added_new);
  const PartitionTree ptree = build_partition_tree(
      PartitionTree::Kind::BinaryByIndex, added_pts, proxy, opts.leaf_cap);
  const IdResult pk_far_id = added_pts.empty()
                                 ? IdResult{}
                                 : compress_block_far(
                                       added_pts,
                                       added_nrm.empty() ? nullptr : &added_nrm,
                                       proxy, ProxySurface::Division, ptree, eps);
  u.pk = added_row_factor(src, pk_far_id, far_scalar, near_scalar, eps, opts,
                          u.notes);

  assemble_stacked(u);

  if (u.k1 == 0) {
    u.L = Mat::Zero(u.n_ext(), 0);
    u.R = Mat::Zero(0, u.n_ext());
    u.k = 0;
    return u;
  }
  const IdResult fin = randomized_row_id(u.L1, eps, opts.seed);
  u.k = fin.k;
  u.L = fin.P;
  u.skeleton.assign(fin.J.begin(), fin.J.begin() + fin.k);
  Mat l1s(fin.k, u.k1);
  for (Index i = 0; i < fin.k; ++i)
    l1s.row(i) = u.L1.row(u.skeleton[static_cast<size_t>(i)]);
  u.R = l1s * u.R1;
  return u;
}

LowRankUpdate svd_optimal(const BlockSource& src, double eps,
                          const CompressOptions&) {
  LowRankUpdate u;
  u.mode = CompressionMode::SvdOptimal;
  const RefinementPlan& plan = src.plan();
  u.nk2 = 2 * plan.n_k();
  u.nc2 = 2 * plan.n_c();
  u.np2 = 2 * plan.n_p();

  auto block_factor = [&](BlockName b) {
    const Index rows = src.rows_of(b), cols = src.cols_of(b);
    if (rows == 0 || cols == 0)
      return BlockFactor{Mat::Zero(rows, 0), Mat::Zero(0, cols), 0};
    const TruncatedSvd t = truncated_svd(src.eval_full(b), eps);
    return BlockFactor{t.u, t.sv.asDiagonal() * t.v.transpose(), t.k};
  };
  u.kc = block_factor(BlockName::kc);
  u.kp = block_factor(BlockName::kp);
  u.pk = block_factor(BlockName::pk);

  assemble_stacked(u);

  if (u.k1 == 0) {
    u.L = Mat::Zero(u.n_ext(), 0);
    u.R = Mat::Zero(0, u.n_ext());
    u.k = 0;
    return u;
  }
  const TruncatedSvd fin = truncated_svd(u.L1, eps);
  u.k = fin.k;
  u.L = fin.u;
  u.R = fin.sv.asDiagonal() * fin.v.transpose() * u.R1;
  return u;
}

}  // namespace

LowRankUpdate compress_update(const BlockSource& src,
                              const ProxyGeometry& proxy, double eps,
                              CompressionMode mode,
                              const CompressOptions& opts) {
  require(eps > 0.0 && eps <= 0.1, "compression tolerance out of range");
  if (mode == CompressionMode::SvdOptimal) return svd_optimal(src, eps, opts);
  return two_step(src, proxy, eps, opts);
}

}  // namespace stokesbie

#include "stokesbie/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "stokesbie/kernels.hpp"

namespace stokesbie {

double ProxyGeometry::radius(ProxySurface s, size_t circle) const {
  const double f = s == ProxySurface::Basis ? bas_factor : div_factor;
  return f * circles[circle].r0;
}

std::vector<ProxyGeometry::Sample> ProxyGeometry::surface_samples(
    ProxySurface s, int n_per_circle) const {
  std::vector<Sample> out;
  out.reserve(circles.size() * static_cast<size_t>(n_per_circle));
  for (size_t c = 0; c < circles.size(); ++c) {
    const double r = radius(s, c);
    for (int i = 0; i < n_per_circle; ++i) {
      const double t = 2.0 * kPi * double(i) / double(n_per_circle);
      const Vec2 dir(std::cos(t), std::sin(t));
      out.push_back({circles[c].center + r * dir, dir});
    }
  }
  return out;
}

bool ProxyGeometry::inside_any(ProxySurface s, const Vec2& p) const {
  for (size_t c = 0; c < circles.size(); ++c)
    if ((p - circles[c].center).norm() < radius(s, c)) return true;
  return false;
}

double ProxyGeometry::band_distance(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : circles)
    best = std::min(best, (p - c.center).norm() / c.r0);
  return best;
}

ProxyGeometry make_proxy_geometry(const Discretization& d_new,
                                  const RefinementPlan& plan) {
  ProxyGeometry out;
  if (plan.added_new.empty()) return out;

  std::vector<std::vector<Vec2>> groups(d_new.components.size());
  std::vector<std::set<Index>> group_panels(d_new.components.size());
  for (Index node : plan.added_new) {
    const Index comp = d_new.component_of_node(node);
    groups[static_cast<size_t>(comp)].push_back(d_new.x[static_cast<size_t>(node)]);
    group_panels[static_cast<size_t>(comp)].insert(d_new.panel_of[static_cast<size_t>(node)]);
  }
  for (size_t comp = 0; comp < groups.size(); ++comp) {
    auto& pts = groups[comp];
    if (pts.empty()) continue;
    const auto& curve = d_new.components[comp].curve;
    for (Index pid : group_panels[comp]) {
      const auto& pa = d_new.panels[static_cast<size_t>(pid)];
      pts.push_back(curve.position(pa.a));
      pts.push_back(curve.position(pa.b));
    }
    Vec2 centroid = Vec2::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= double(pts.size());
    double r0 = 0.0;
    for (const auto& p : pts) r0 = std::max(r0, (p - centroid).norm());
    if (!(r0 > 0.0))
      throw GeometryError("refined region has zero spatial extent");
    out.circles.push_back({centroid, r0});
  }
  return out;
}

std::pair<std::vector<Index>, std::vector<Index>> split_far_near(
    const std::vector<Vec2>& points, const ProxyGeometry& proxy) {
  std::pair<std::vector<Index>, std::vector<Index>> out;
  for (size_t i = 0; i < points.size(); ++i) {
    if (proxy.inside_any(ProxySurface::Division, points[i]))
      out.second.push_back(static_cast<Index>(i));
    else
      out.first.push_back(static_cast<Index>(i));
  }
  return out;
}

PartitionTree build_partition_tree(PartitionTree::Kind kind,
                                   const std::vector<Vec2>& points,
                                   const ProxyGeometry& proxy,
                                   Index leaf_cap) {
  require(leaf_cap > 0, "leaf capacity must be positive");
  PartitionTree t;
  t.kind = kind;
  const Index n = static_cast<Index>(points.size());
  if (n == 0) return t;

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<int> band(static_cast<size_t>(n), 0);
  if (kind == PartitionTree::Kind::DyadicByDistance && !proxy.circles.empty()) {
    for (Index i = 0; i < n; ++i) {
      const double dist = std::max(1.0, proxy.band_distance(points[static_cast<size_t>(i)]));
      band[static_cast<size_t>(i)] = static_cast<int>(std::floor(std::log2(dist)));
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return band[static_cast<size_t>(a)] < band[static_cast<size_t>(b)];
    });
  }

  size_t pos = 0;
  while (pos < order.size()) {
    size_t run = pos + 1;
    while (run < order.size() &&
           band[static_cast<size_t>(order[run])] == band[static_cast<size_t>(order[pos])])
      ++run;
    while (pos < run) {
      const size_t take = std::min<size_t>(static_cast<size_t>(leaf_cap), run - pos);
      t.leaves.emplace_back(order.begin() + static_cast<long>(pos),
                            order.begin() + static_cast<long>(pos + take));
      pos += take;
    }
  }
  while ((size_t{1} << t.depth) < t.leaves.size()) ++t.depth;
  return t;
}

namespace {

// Interaction rows for the listed scalar indices against the sample points:
// four columns per sample (single layer and radial dipole), plus one
// trailing column carrying the completion normal field when present.
Mat proxy_interaction(const std::vector<Vec2>& row_points,
                      const std::vector<Vec2>* completion_normals,
                      const std::vector<Index>& scalar_rows,
                      const std::vector<ProxyGeometry::Sample>& samples) {
  const Index m = static_cast<Index>(scalar_rows.size());
  const Index cols =
      4 * static_cast<Index>(samples.size()) + (completion_normals ? 1 : 0);
  Mat out(m, cols);
  for (Index r = 0; r < m; ++r) {
    const Index s = scalar_rows[static_cast<size_t>(r)];
    const size_t node = static_cast<size_t>(s / 2);
    const int comp = static_cast<int>(s % 2);
    for (size_t j = 0; j < samples.size(); ++j) {
      const Mat2 sk = stokeslet(row_points[node], samples[j].p, 1.0);
      const Mat2 dl =
          double_layer(row_points[node], samples[j].p, samples[j].radial);
      const Index c0 = 4 * static_cast<Index>(j);
      out(r, c0) = sk(comp, 0);
      out(r, c0 + 1) = sk(comp, 1);
      out(r, c0 + 2) = dl(comp, 0);
      out(r, c0 + 3) = dl(comp, 1);
    }
    if (completion_normals)
      out(r, cols - 1) = (*completion_normals)[node](comp);
  }
  return out;
}

struct HChunk {
  std::vector<Index> rows;  // scalar indices, in this chunk's row order
  std::vector<Index> skel;  // skeleton scalar indices
  Mat P;                    // |rows| x |skel|
};

HChunk merge_chunks(const HChunk& a, const HChunk& b,
                    const std::vector<Vec2>& row_points,
                    const std::vector<Vec2>* completion_normals,
                    const std::vector<ProxyGeometry::Sample>& samples, double eps) {
  std::vector<Index> uni = a.skel;
  uni.insert(uni.end(), b.skel.begin(), b.skel.end());
  const Mat w = proxy_interaction(row_points, completion_normals, uni, samples);
  const IdResult id = row_id(w, eps);

  HChunk out;
  out.rows = a.rows;
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  out.skel.reserve(static_cast<size_t>(id.k));
  for (Index i = 0; i < id.k; ++i)
    out.skel.push_back(uni[static_cast<size_t>(id.J[static_cast<size_t>(i)])]);
  const Index ka = static_cast<Index>(a.skel.size());
  const Index kb = static_cast<Index>(b.skel.size());
  out.P.resize(a.P.rows() + b.P.rows(), id.k);
  out.P.topRows(a.P.rows()) = a.P * id.P.topRows(ka);
  out.P.bottomRows(b.P.rows()) = b.P * id.P.bottomRows(kb);
  return out;
}

IdResult hierarchical_row_id(const std::vector<Vec2>& row_points,
                             const std::vector<Vec2>* completion_normals,
                             const PartitionTree& tree,
                             const std::vector<ProxyGeometry::Sample>& samples, double eps) {
  std::vector<HChunk> level;
  level.reserve(tree.leaves.size());
  for (const auto& leaf : tree.leaves) {
    HChunk c;
    c.rows.reserve(2 * leaf.size());
    for (Index node : leaf) {
      c.rows.push_back(2 * node);
      c.rows.push_back(2 * node + 1);
    }
    const Mat w =
        proxy_interaction(row_points, completion_normals, c.rows, samples);
    const IdResult id = row_id(w, eps);
    c.skel.reserve(static_cast<size_t>(id.k));
    for (Index i = 0; i < id.k; ++i)
      c.skel.push_back(c.rows[static_cast<size_t>(id.J[static_cast<size_t>(i)])]);
    c.P = id.P;
    level.push_back(std::move(c));
  }

  while (level.size() > 1) {
    std::vector<HChunk> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(merge_chunks(level[i], level[i + 1], row_points,
                                  completion_normals, samples, eps));
    if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
    level = std::move(next);
  }

  IdResult out;
  out.eps = eps;
  const Index m = 2 * static_cast<Index>(row_points.size());
  if (level.empty()) {
    out.P = Mat::Zero(m, 0);
    out.J.resize(static_cast<size_t>(m));
    std::iota(out.J.begin(), out.J.end(), Index{0});
    return out;
  }

  const HChunk& root = level.front();
  out.k = static_cast<Index>(root.skel.size());
  out.P = Mat::Zero(m, out.k);
  for (Index r = 0; r < static_cast<Index>(root.rows.size()); ++r)
    out.P.row(root.rows[static_cast<size_t>(r)]) = root.P.row(r);
  out.J = root.skel;
  std::vector<char> in_skel(static_cast<size_t>(m), 0);
  for (Index s : root.skel) in_skel[static_cast<size_t>(s)] = 1;
  for (Index s : root.rows)
    if (!in_skel[static_cast<size_t>(s)]) out.J.push_back(s);
  return out;
}

}  // namespace

IdResult compress_block_far(const std::vector<Vec2>& row_points,
                            const std::vector<Vec2>* completion_normals,
                            const ProxyGeometry& proxy, ProxySurface surface,
                            const PartitionTree& tree, double eps) {
  require(!proxy.circles.empty(), "proxy geometry has no circles");
  if (completion_normals)
    require(completion_normals->size() == row_points.size(),
            "completion normal count mismatch");
  for (const auto& p : row_points) {
    const bool in_div = proxy.inside_any(ProxySurface::Division, p);
    if (surface == ProxySurface::Basis && in_div)
      throw ProxyViolationError("far row point inside a division circle");
    if (surface == ProxySurface::Division && !in_div)
      throw ProxyViolationError("row point outside every division circle");
  }

  size_t covered = 0;
  std::vector<char> seen(row_points.size(), 0);
  for (const auto& leaf : tree.leaves)
    for (Index i : leaf) {
      require(i >= 0 && static_cast<size_t>(i) < row_points.size() &&
                  !seen[static_cast<size_t>(i)],
              "partition tree does not cover the row set exactly");
      seen[static_cast<size_t>(i)] = 1;
      ++covered;
    }
  require(covered == row_points.size(),
          "partition tree does not cover the row set exactly");

  if (row_points.empty()) {
    IdResult out;
    out.eps = eps;
    out.P = Mat::Zero(0, 0);
    return out;
  }

  const int n_cap = 2048;
  int n = proxy.n_proxy;
  IdResult prev = hierarchical_row_id(
      row_points, completion_normals, tree,
      proxy.surface_samples(surface, n), eps);
  while (2 * n <= n_cap) {
    n *= 2;
    IdResult cur = hierarchical_row_id(
        row_points, completion_normals, tree,
        proxy.surface_samples(surface, n), eps);
    const bool settled = std::abs(double(cur.k) - double(prev.k)) <= 2.0;
    prev = std::move(cur);
    if (settled) break;
  }
  return prev;
}

}  // namespace stokesbie

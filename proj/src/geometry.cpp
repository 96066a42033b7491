#include "stokesbie/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stokesbie/gauss.hpp"

namespace stokesbie {

ParametricCurve::ParametricCurve(CurveParams p) : p_(std::move(p)) {
  if (p_.scale <= 0) throw GeometryError("curve scale must be positive");
  if (p_.kind == CurveKind::Star) {
    if (p_.n_prongs < 2) throw GeometryError("star needs at least 2 prongs");
    if (std::fabs(p_.amplitude) >= 1.0)
      throw GeometryError("star amplitude must keep radius positive");
  }
  if (p_.kind == CurveKind::Ellipse && p_.aspect <= 0)
    throw GeometryError("ellipse aspect must be positive");
  // Positive radius and nonvanishing speed at sampling resolution.
  double min_speed = 1e300, max_speed = 0;
  for (int i = 0; i < 2048; ++i) {
    double t = 2 * kPi * i / 2048.0;
    if (p_.kind != CurveKind::Ellipse) {
      double r, dr, ddr;
      radial(t, r, dr, ddr);
      if (r <= 1e-6) throw GeometryError("curve radius vanishes");
    }
    double s = speed(t);
    min_speed = std::min(min_speed, s);
    max_speed = std::max(max_speed, s);
  }
  if (min_speed <= 1e-9 * max_speed) throw GeometryError("curve speed vanishes");
}

void ParametricCurve::radial(double t, double& r, double& dr, double& ddr) const {
  switch (p_.kind) {
    case CurveKind::Circle:
      r = 1.0; dr = 0.0; ddr = 0.0;
      return;
    case CurveKind::Star: {
      double c = std::cos(p_.n_prongs * t), s = std::sin(p_.n_prongs * t);
      double n = p_.n_prongs;
      r = 1.0 + p_.amplitude * c;
      dr = -p_.amplitude * n * s;
      ddr = -p_.amplitude * n * n * c;
      return;
    }
    case CurveKind::Fourier: {
      r = 1.0; dr = 0.0; ddr = 0.0;
      for (size_t j = 0; j < p_.cos_coef.size(); ++j) {
        double k = (double)(j + 1);
        r += p_.cos_coef[j] * std::cos(k * t);
        dr -= p_.cos_coef[j] * k * std::sin(k * t);
        ddr -= p_.cos_coef[j] * k * k * std::cos(k * t);
      }
      for (size_t j = 0; j < p_.sin_coef.size(); ++j) {
        double k = (double)(j + 1);
        r += p_.sin_coef[j] * std::sin(k * t);
        dr += p_.sin_coef[j] * k * std::cos(k * t);
        ddr -= p_.sin_coef[j] * k * k * std::sin(k * t);
      }
      return;
    }
    case CurveKind::Ellipse:
      r = dr = ddr = 0.0;  // unused
      return;
  }
}

Vec2 ParametricCurve::position(double t) const {
  double c = std::cos(t), s = std::sin(t);
  if (p_.kind == CurveKind::Ellipse)
    return p_.center + p_.scale * Vec2(c, p_.aspect * s);
  double r, dr, ddr;
  radial(t, r, dr, ddr);
  return p_.center + p_.scale * r * Vec2(c, s);
}

Vec2 ParametricCurve::derivative(double t) const {
  double c = std::cos(t), s = std::sin(t);
  if (p_.kind == CurveKind::Ellipse)
    return p_.scale * Vec2(-s, p_.aspect * c);
  double r, dr, ddr;
  radial(t, r, dr, ddr);
  return p_.scale * Vec2(dr * c - r * s, dr * s + r * c);
}

Vec2 ParametricCurve::second_derivative(double t) const {
  double c = std::cos(t), s = std::sin(t);
  if (p_.kind == CurveKind::Ellipse)
    return p_.scale * Vec2(-c, -p_.aspect * s);
  double r, dr, ddr;
  radial(t, r, dr, ddr);
  return p_.scale * Vec2(ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s);
}

Vec2 ParametricCurve::normal(double t) const {
  Vec2 d = derivative(t);
  Vec2 n(d.y(), -d.x());
  n /= n.norm();
  return p_.flip_normal ? Vec2(-n) : n;
}

double ParametricCurve::curvature(double t) const {
  Vec2 d = derivative(t), dd = second_derivative(t);
  double sp = d.norm();
  double k = (d.x() * dd.y() - d.y() * dd.x()) / (sp * sp * sp);
  return p_.flip_normal ? -k : k;
}

PanelMesh uniform_mesh(int n_panels, int q) {
  require(n_panels >= 4, "need at least 4 panels");
  require(q >= 4 && q <= 64, "nodes per panel out of range");
  PanelMesh mesh;
  mesh.q = q;
  mesh.panels.resize(n_panels);
  double prev = 0.0;
  for (int i = 0; i < n_panels; ++i) {
    double next = (i + 1 == n_panels) ? 2 * kPi : 2 * kPi * (i + 1) / n_panels;
    mesh.panels[i] = {prev, next, 0};
    prev = next;
  }
  return mesh;
}

namespace {

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
  double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

void check_simple(const ParametricCurve& curve) {
  const int M = 512;
  std::vector<Vec2> pts(M);
  for (int i = 0; i < M; ++i) pts[i] = curve.position(2 * kPi * i / M);
  for (int i = 0; i < M; ++i) {
    for (int j = i + 2; j < M; ++j) {
      if (i == 0 && j == M - 1) continue;  // adjacent through the wrap
      if (segments_intersect(pts[i], pts[(i + 1) % M], pts[j], pts[(j + 1) % M]))
        throw GeometryError("curve self-intersects at sampling resolution");
    }
  }
}

void append_component_nodes(Discretization& d, Index comp_idx) {
  auto& comp = d.components[comp_idx];
  const GaussRule& g = gauss_rule(comp.mesh.q);
  int q = comp.mesh.q;
  Index base = d.n_nodes();
  Index added = (Index)comp.mesh.panels.size() * q;
  d.x.resize(base + added);
  d.normal.resize(base + added);
  d.tangent.resize(base + added);
  d.w.conservativeResize(base + added);
  d.curvature.conservativeResize(base + added);
  d.param.conservativeResize(base + added);
  d.panel_of.resize(base + added);
  Index node = base;
  for (size_t pl = 0; pl < comp.mesh.panels.size(); ++pl) {
    const Panel& p = comp.mesh.panels[pl];
    Index panel_id = (Index)d.panels.size();
    d.panels.push_back({comp_idx, (Index)pl, p.a, p.b, p.level, node, q});
    double half = 0.5 * (p.b - p.a);
    for (int j = 0; j < q; ++j, ++node) {
      double t = p.a + half * (g.nodes[j] + 1.0);
      d.x[node] = comp.curve.position(t);
      d.normal[node] = comp.curve.normal(t);
      d.tangent[node] = comp.curve.unit_tangent(t);
      d.w[node] = g.weights[j] * comp.curve.speed(t) * half;
      d.curvature[node] = comp.curve.curvature(t);
      d.param[node] = t;
      d.panel_of[node] = panel_id;
    }
  }
}

}  // namespace

double Discretization::panel_arclength(Index panel) const {
  const PanelRef& p = panels[panel];
  double s = 0;
  for (int j = 0; j < p.q; ++j) s += w[p.node_begin + j];
  return s;
}

bool Discretization::panels_adjacent(Index p1, Index p2) const {
  if (p1 == p2) return false;
  const PanelRef& a = panels[p1];
  const PanelRef& b = panels[p2];
  if (a.component != b.component) return false;
  if (a.b == b.a || b.b == a.a) return true;
  // periodic wrap within the component
  const auto& mesh = components[a.component].mesh;
  double lo = mesh.panels.front().a, hi = mesh.panels.back().b;
  return (a.a == lo && b.b == hi) || (b.a == lo && a.b == hi);
}

double Discretization::max_neighbor_ratio() const {
  double worst = 1.0;
  for (const auto& comp : components) {
    size_t np = comp.mesh.panels.size();
    for (size_t i = 0; i < np; ++i) {
      double la = comp.mesh.panels[i].b - comp.mesh.panels[i].a;
      double lb_ = comp.mesh.panels[(i + 1) % np].b - comp.mesh.panels[(i + 1) % np].a;
      worst = std::max(worst, std::max(la / lb_, lb_ / la));
    }
  }
  return worst;
}

Discretization panelize(const ParametricCurve& curve, int n_panels, int q) {
  check_simple(curve);
  Discretization d;
  Discretization::Component comp{curve, uniform_mesh(n_panels, q), 0, 0, false};
  d.components.push_back(std::move(comp));
  append_component_nodes(d, 0);
  return d;
}

Discretization build_discretization(const std::vector<CurveParams>& curves,
                                    const std::vector<PanelMesh>& meshes,
                                    const std::vector<bool>& hole_flags) {
  require(curves.size() == meshes.size() && curves.size() == hole_flags.size(),
          "build_discretization: size mismatch");
  require(!curves.empty(), "build_discretization: no curves");
  Discretization d;
  for (size_t i = 0; i < curves.size(); ++i) {
    ParametricCurve curve(curves[i]);
    check_simple(curve);
    Discretization::Component comp{std::move(curve), meshes[i], d.n_nodes(),
                                   (Index)d.panels.size(), hole_flags[i]};
    d.components.push_back(std::move(comp));
    append_component_nodes(d, (Index)(d.components.size() - 1));
  }
  // Pairwise layout checks on sampled polylines; bounding boxes first.
  // Crossings are always an error; containment is legal only for a hole
  // sitting inside the first (wall) component.
  size_t nc = d.components.size();
  const int S = 256;
  std::vector<std::vector<Vec2>> poly(nc, std::vector<Vec2>(S));
  std::vector<Vec2> lo_box(nc, Vec2(1e300, 1e300)), hi_box(nc, Vec2(-1e300, -1e300));
  for (size_t c = 0; c < nc; ++c) {
    for (int i = 0; i < S; ++i) {
      poly[c][i] = d.components[c].curve.position(2 * kPi * i / S);
      lo_box[c] = lo_box[c].cwiseMin(poly[c][i]);
      hi_box[c] = hi_box[c].cwiseMax(poly[c][i]);
    }
  }
  for (size_t a = 0; a + 1 < nc; ++a) {
    for (size_t b = a + 1; b < nc; ++b) {
      bool overlap = (lo_box[a].x() <= hi_box[b].x() && lo_box[b].x() <= hi_box[a].x() &&
                      lo_box[a].y() <= hi_box[b].y() && lo_box[b].y() <= hi_box[a].y());
      if (!overlap) continue;
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
          if (segments_intersect(poly[a][i], poly[a][(i + 1) % S], poly[b][j],
                                 poly[b][(j + 1) % S]))
            throw GeometryError("components intersect");
      bool b_in_a = point_inside(d.components[a].curve, poly[b][0]);
      bool a_in_b = point_inside(d.components[b].curve, poly[a][0]);
      bool legal = !a_in_b && (!b_in_a || (a == 0 && !hole_flags[0] && hole_flags[b]));
      if (!legal) throw GeometryError("component nesting is not wall-plus-holes");
    }
  }
  return d;
}

std::pair<Discretization, RefinementPlan> refine(const Discretization& d,
                                                 std::vector<Index> panel_ids, int m) {
  require(m >= 2, "split factor must be at least 2");
  std::sort(panel_ids.begin(), panel_ids.end());
  panel_ids.erase(std::unique(panel_ids.begin(), panel_ids.end()), panel_ids.end());
  require(!panel_ids.empty(), "refine: empty panel list");
  for (Index id : panel_ids)
    require(id >= 0 && id < d.n_panels(), "refine: panel id out of range");

  std::set<Index> refined(panel_ids.begin(), panel_ids.end());

  RefinementPlan plan;
  plan.panel_ids = panel_ids;
  plan.m = m;
  for (const auto& comp : d.components) plan.old_meshes.push_back(comp.mesh);

  Discretization nd;
  for (size_t ci = 0; ci < d.components.size(); ++ci) {
    const auto& comp = d.components[ci];
    PanelMesh mesh;
    mesh.q = comp.mesh.q;
    for (size_t pl = 0; pl < comp.mesh.panels.size(); ++pl) {
      Index gid = comp.panel_offset + (Index)pl;
      const Panel& p = comp.mesh.panels[pl];
      if (refined.count(gid)) {
        double prev = p.a;
        for (int j = 1; j <= m; ++j) {
          double next = (j == m) ? p.b : p.a + (p.b - p.a) * j / m;
          mesh.panels.push_back({prev, next, p.level + 1});
          prev = next;
        }
      } else {
        mesh.panels.push_back(p);
      }
    }
    Discretization::Component ncomp{comp.curve, std::move(mesh), nd.n_nodes(),
                                    (Index)nd.panels.size(), comp.is_hole};
    nd.components.push_back(std::move(ncomp));
    append_component_nodes(nd, (Index)(nd.components.size() - 1));
  }

  // Copy node data of untouched panels from the old discretization so kept
  // nodes are bit-identical, then build the index maps.
  Index new_panel = 0;
  for (Index old_panel = 0; old_panel < d.n_panels(); ++old_panel) {
    const auto& op = d.panels[old_panel];
    if (refined.count(old_panel)) {
      for (int j = 0; j < op.q; ++j) plan.cut_old.push_back(op.node_begin + j);
      for (int sp = 0; sp < m; ++sp) {
        const auto& npnl = nd.panels[new_panel + sp];
        for (int j = 0; j < npnl.q; ++j) plan.added_new.push_back(npnl.node_begin + j);
      }
      new_panel += m;
    } else {
      const auto& npnl = nd.panels[new_panel];
      for (int j = 0; j < op.q; ++j) {
        Index o = op.node_begin + j, n = npnl.node_begin + j;
        plan.kept_old.push_back(o);
        plan.kept_new.push_back(n);
        nd.x[n] = d.x[o];
        nd.normal[n] = d.normal[o];
        nd.tangent[n] = d.tangent[o];
        nd.w[n] = d.w[o];
        nd.curvature[n] = d.curvature[o];
        nd.param[n] = d.param[o];
      }
      new_panel += 1;
    }
  }
  return {std::move(nd), std::move(plan)};
}

Discretization coarsen(const Discretization& d, const RefinementPlan& plan) {
  require(plan.old_meshes.size() == d.components.size(), "coarsen: plan mismatch");
  std::vector<CurveParams> curves;
  std::vector<bool> holes;
  for (const auto& comp : d.components) {
    curves.push_back(comp.curve.params());
    holes.push_back(comp.is_hole);
  }
  return build_discretization(curves, plan.old_meshes, holes);
}

std::pair<Discretization, RefinementPlan> add_holes(const Discretization& d,
                                                    const std::vector<HoleSpec>& holes) {
  require(d.components.size() == 1 && !d.components[0].is_hole,
          "add_holes expects a single-wall discretization");
  RefinementPlan plan;
  plan.m = 1;
  for (const auto& comp : d.components) plan.old_meshes.push_back(comp.mesh);

  std::vector<CurveParams> curves{d.components[0].curve.params()};
  std::vector<PanelMesh> meshes{d.components[0].mesh};
  std::vector<bool> flags{false};
  for (const auto& h : holes) {
    CurveParams p = h.curve;
    p.flip_normal = true;  // normals point out of the fluid, into the hole
    curves.push_back(p);
    meshes.push_back(uniform_mesh(h.n_panels, h.q));
    flags.push_back(true);
  }
  Discretization nd = build_discretization(curves, meshes, flags);

  // Containment and disjointness at sampling resolution.
  const auto& wall = nd.components[0].curve;
  for (size_t hi = 1; hi < nd.components.size(); ++hi) {
    const auto& hole = nd.components[hi].curve;
    for (int s = 0; s < 64; ++s) {
      Vec2 pt = hole.position(2 * kPi * s / 64.0);
      if (!point_inside(wall, pt)) throw GeometryError("hole not inside the domain");
      for (size_t hj = 1; hj < nd.components.size(); ++hj) {
        if (hj == hi) continue;
        if (point_inside(nd.components[hj].curve, pt))
          throw GeometryError("holes overlap");
      }
    }
  }

  // Wall nodes keep their ids; hole nodes are the added set.
  Index wall_nodes = d.n_nodes();
  for (Index i = 0; i < wall_nodes; ++i) {
    plan.kept_old.push_back(i);
    plan.kept_new.push_back(i);
    nd.x[i] = d.x[i];
    nd.normal[i] = d.normal[i];
    nd.tangent[i] = d.tangent[i];
    nd.w[i] = d.w[i];
    nd.curvature[i] = d.curvature[i];
    nd.param[i] = d.param[i];
  }
  for (Index i = wall_nodes; i < nd.n_nodes(); ++i) plan.added_new.push_back(i);
  return {std::move(nd), std::move(plan)};
}

std::vector<Index> panels_near_point(const Discretization& d, const Vec2& point,
                                     double radius) {
  std::vector<Index> out;
  for (Index p = 0; p < d.n_panels(); ++p) {
    const auto& ref = d.panels[p];
    double lo = 1e300;
    for (int j = 0; j < ref.q; ++j)
      lo = std::min(lo, (d.x[ref.node_begin + j] - point).norm());
    if (lo < radius) out.push_back(p);
  }
  return out;
}

bool point_inside(const ParametricCurve& curve, const Vec2& p, int samples) {
  // Crossing number against the sampled polygon.
  int crossings = 0;
  Vec2 prev = curve.position(0.0);
  for (int i = 1; i <= samples; ++i) {
    Vec2 cur = curve.position(2 * kPi * i / samples);
    if ((prev.y() <= p.y()) != (cur.y() <= p.y())) {
      double xi = prev.x() + (p.y() - prev.y()) / (cur.y() - prev.y()) * (cur.x() - prev.x());
      if (xi > p.x()) ++crossings;
    }
    prev = cur;
  }
  return crossings % 2 == 1;
}

bool point_in_fluid(const Discretization& d, const Vec2& p, bool interior_domain) {
  bool in_first = point_inside(d.components[0].curve, p);
  if (d.components.size() == 1 && !d.components[0].is_hole)
    return interior_domain ? in_first : !in_first;
  if (!d.components[0].is_hole && d.components.size() > 1 && d.components[1].is_hole) {
    // wall with holes: inside the wall, outside every hole
    if (!in_first) return false;
    for (size_t c = 1; c < d.components.size(); ++c)
      if (point_inside(d.components[c].curve, p)) return false;
    return true;
  }
  // obstacle collection: outside every component
  for (const auto& comp : d.components)
    if (point_inside(comp.curve, p)) return false;
  return true;
}

double distance_to_boundary(const Discretization& d, const Vec2& p) {
  double lo = 1e300;
  for (Index i = 0; i < d.n_nodes(); ++i) lo = std::min(lo, (d.x[i] - p).norm());
  return lo;
}

}  // namespace stokesbie

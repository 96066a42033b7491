#pragma once

#include <utility>
#include <vector>

#include "stokesbie/common.hpp"

namespace stokesbie {

enum class CurveKind { Circle, Ellipse, Star, Fourier };

// Smooth closed curve, 2*pi periodic, parameterized counterclockwise.
// Radial kinds (circle, star, fourier) are center + scale * r(t)(cos t, sin t).
struct CurveParams {
  CurveKind kind = CurveKind::Circle;
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  // Negate stored normals and curvatures (used for holes, whose normals must
  // point out of the fluid domain, i.e. into the hole).
  bool flip_normal = false;
  int n_prongs = 0;         // star
  double amplitude = 0.0;   // star
  double aspect = 1.0;      // ellipse: y semi-axis relative to x
  std::vector<double> cos_coef, sin_coef;  // fourier radius perturbation
};

class ParametricCurve {
public:
  explicit ParametricCurve(CurveParams p);

  Vec2 position(double t) const;
  Vec2 derivative(double t) const;
  Vec2 second_derivative(double t) const;
  double speed(double t) const { return derivative(t).norm(); }
  Vec2 unit_tangent(double t) const { return derivative(t).normalized(); }
  // Outward normal of the curve, negated when flip_normal is set.
  Vec2 normal(double t) const;
  // Signed curvature consistent with the stored normal orientation.
  double curvature(double t) const;

  const CurveParams& params() const { return p_; }

private:
  void radial(double t, double& r, double& dr, double& ddr) const;
  CurveParams p_;
};

struct Panel {
  double a = 0.0, b = 0.0;  // parameter interval [a, b)
  int level = 0;            // refinement generation
};

struct PanelMesh {
  std::vector<Panel> panels;  // ordered by parameter, exact partition of [0, 2*pi)
  int q = 16;                 // nodes per panel
};

PanelMesh uniform_mesh(int n_panels, int q);

// Multi-component panel discretization with flattened per-node data.
// Node ordering: component by component, panel by panel, Gauss order within
// each panel.  Unknowns are interleaved (u1_i, u2_i).
class Discretization {
public:
  struct Component {
    ParametricCurve curve;
    PanelMesh mesh;
    Index node_offset = 0;
    Index panel_offset = 0;
    bool is_hole = false;
  };

  struct PanelRef {
    Index component = 0;
    Index local = 0;       // panel index within the component
    double a = 0.0, b = 0.0;
    int level = 0;
    Index node_begin = 0;
    int q = 16;
  };

  std::vector<Component> components;
  std::vector<PanelRef> panels;

  std::vector<Vec2> x, normal, tangent;
  Vec w, curvature, param;
  std::vector<Index> panel_of;

  Index n_nodes() const { return (Index)x.size(); }
  Index n_unknowns() const { return 2 * n_nodes(); }
  Index n_panels() const { return (Index)panels.size(); }
  Index component_of_node(Index node) const { return panels[panel_of[node]].component; }
  double panel_arclength(Index panel) const;
  // True when the two global panels belong to the same component and share an
  // endpoint (periodically).
  bool panels_adjacent(Index p1, Index p2) const;
  double max_neighbor_ratio() const;
};

Discretization panelize(const ParametricCurve& curve, int n_panels, int q);
Discretization build_discretization(const std::vector<CurveParams>& curves,
                                    const std::vector<PanelMesh>& meshes,
                                    const std::vector<bool>& hole_flags);

// Old/new index bookkeeping for a local re-discretization.
// kept_old[i] and kept_new[i] are the same physical node's ids in the two
// orderings; cut_old is I_c (old ids); added_new is I_p (new ids).
struct RefinementPlan {
  std::vector<Index> panel_ids;  // refined global panel ids in the old mesh
  int m = 1;
  std::vector<Index> kept_old, kept_new, cut_old, added_new;
  std::vector<PanelMesh> old_meshes;  // one per component, for coarsening
  Index n_k() const { return (Index)kept_old.size(); }
  Index n_c() const { return (Index)cut_old.size(); }
  Index n_p() const { return (Index)added_new.size(); }
};

// Splits each listed panel into m equal parameter subpanels.  Nodes of
// untouched panels are copied bit for bit; their relative order is preserved.
std::pair<Discretization, RefinementPlan> refine(const Discretization& d,
                                                 std::vector<Index> panel_ids, int m);

// Rebuilds the pre-refinement discretization recorded in the plan.
Discretization coarsen(const Discretization& d, const RefinementPlan& plan);

// Appends hole components to an interior discretization.  Hole normals are
// flipped to point out of the fluid domain.  The returned plan has empty I_c;
// I_p lists the hole nodes.
struct HoleSpec {
  CurveParams curve;
  int n_panels = 10;
  int q = 16;
};
std::pair<Discretization, RefinementPlan> add_holes(const Discretization& d,
                                                    const std::vector<HoleSpec>& holes);

// Panels whose minimum node distance to `point` is below `radius`; used by the
// auto-near refinement directive.
std::vector<Index> panels_near_point(const Discretization& d, const Vec2& point,
                                     double radius);

// Winding-number test against the sampled curve; reliable away from the
// boundary.
bool point_inside(const ParametricCurve& curve, const Vec2& p, int samples = 512);
bool point_in_fluid(const Discretization& d, const Vec2& p, bool interior_domain);
double distance_to_boundary(const Discretization& d, const Vec2& p);

}  // namespace stokesbie

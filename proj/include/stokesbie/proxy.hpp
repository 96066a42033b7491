#pragma once

#include <stdexcept>
#include <vector>

#include "stokesbie/common.hpp"
#include "stokesbie/geometry.hpp"
#include "stokesbie/idlib.hpp"

namespace stokesbie {

// A row point lay on the wrong side of the division surface for the
// requested compression.
struct ProxyViolationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProxyCircle {
  Vec2 center = Vec2::Zero();
  double r0 = 0.0;
};

// Which concentric surface supplies the interaction columns: the basis
// surface shields the refined region from far targets, the division surface
// separates far sources from targets inside the region.
enum class ProxySurface { Basis, Division };

// Bounding circles of the refined region, one per component that gains or
// loses nodes.  The basis and division surfaces are concentric scalings.
struct ProxyGeometry {
  std::vector<ProxyCircle> circles;
  double bas_factor = 1.5;
  double div_factor = 3.0;
  int n_proxy = 64;

  struct Sample {
    Vec2 p;       // point on the surface
    Vec2 radial;  // unit outward direction of its circle
  };

  double radius(ProxySurface s, size_t circle) const;
  std::vector<Sample> surface_samples(ProxySurface s, int n_per_circle) const;
  bool inside_any(ProxySurface s, const Vec2& p) const;
  // Distance to the nearest circle center in units of that circle's r0.
  double band_distance(const Vec2& p) const;
};

ProxyGeometry make_proxy_geometry(const Discretization& d_new,
                                  const RefinementPlan& plan);

// Positions (into `points`) outside all division circles, then the rest;
// both lists keep the input order.
std::pair<std::vector<Index>, std::vector<Index>> split_far_near(
    const std::vector<Vec2>& points, const ProxyGeometry& proxy);

// Partition of a point set into compression leaves.  Leaves are disjoint,
// cover every index once, and hold at most leaf_cap points.
struct PartitionTree {
  enum class Kind { DyadicByDistance, BinaryByIndex };
  Kind kind = Kind::DyadicByDistance;
  std::vector<std::vector<Index>> leaves;
  int depth = 0;
};

PartitionTree build_partition_tree(PartitionTree::Kind kind,
                                   const std::vector<Vec2>& points,
                                   const ProxyGeometry& proxy,
                                   Index leaf_cap = 128);

// Row ID of the interaction between the row points and the proxy surface,
// built leaf-by-leaf over the tree and merged upward.  Row i of the implied
// matrix pairs with point row_points[i/2], velocity component i%2.  Each
// surface sample contributes single-layer and dipole columns; the dipole
// columns keep the coefficients of force-free fields at natural scale, which
// a pure point-force basis cannot do at finite precision.  When
// completion_normals is non-null an extra column carrying the normal field
// joins the basis, covering the rank-1 completion term of the operator.
// The sample count starts at proxy.n_proxy and doubles until the rank
// settles to within 2.
//
// Basis surface: every row point must lie outside all division circles.
// Division surface: every row point must lie inside some division circle.
IdResult compress_block_far(const std::vector<Vec2>& row_points,
                            const std::vector<Vec2>* completion_normals,
                            const ProxyGeometry& proxy, ProxySurface surface,
                            const PartitionTree& tree, double eps);

}  // namespace stokesbie

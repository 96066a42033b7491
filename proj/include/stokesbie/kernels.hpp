#pragma once

#include "stokesbie/common.hpp"
#include "stokesbie/geometry.hpp"

namespace stokesbie {

// Free-space 2D Stokes kernels, r = x - y.
// Velocity due to a point force:  S_ij = (1/4 pi mu) (delta_ij log(1/r) + r_i r_j / r^2)
Mat2 stokeslet(const Vec2& x, const Vec2& y, double mu);

// Velocity double layer:  D_ij = (1/pi) (r_i r_j / r^2) (r . n_y / r^2)
Mat2 double_layer(const Vec2& x, const Vec2& y, const Vec2& n_y);

// On-surface limit of the double layer as y -> x along the curve.
Mat2 double_layer_limit(const Vec2& tangent, double curvature);

// Pressure kernels paired with S and D:
//   Q_j = (1/2 pi) r_j / r^2
//   P_j = (mu/pi) (-n_j / r^2 + 2 r_j (r . n_y) / r^4)
Vec2 pressure_single(const Vec2& x, const Vec2& y);
Vec2 pressure_double(const Vec2& x, const Vec2& y, const Vec2& n_y, double mu);

// Directional derivatives in the target point, (d . grad_x) of S and D.
// Used as evaluation functionals when skeletonizing incoming fields.
Mat2 stokeslet_gradient(const Vec2& x, const Vec2& y, double mu, const Vec2& d);
Mat2 double_layer_gradient(const Vec2& x, const Vec2& y, const Vec2& n_y,
                           const Vec2& d);

// Discrete rank-one nullspace completion (N tau)(x_i) = n_i sum_j w_j tau_j . n_j
// restricted to nodes [0, node_end).  tau is interleaved, length 2*n_nodes.
Vec nullspace_apply(const Discretization& d, const Vec& tau, Index node_end);

enum class FormulationKind {
  InteriorDirichlet,  // -1/2 I + D + N on a single closed curve, fluid inside
  ExteriorCombined,   // +1/2 I + D + S, fluid outside the component curves
  Mixed               // -1/2 I, double layer wall (+ wall-restricted N),
                      // combined field holes, out-of-fluid normals throughout
};

struct Formulation {
  FormulationKind kind = FormulationKind::InteriorDirichlet;
  double mu = 1.0;
};

// Per-component assembly roles derived from the formulation.
struct ComponentRole {
  double jump = -0.5;        // coefficient of I on the diagonal
  bool single_layer = false; // source kernel includes S
  bool in_nullspace = false; // participates in the N term
};
ComponentRole component_role(const Formulation& f, const Discretization& d, Index comp);

}  // namespace stokesbie

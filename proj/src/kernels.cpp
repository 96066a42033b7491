#include "stokesbie/kernels.hpp"

#include <cmath>

namespace stokesbie {

namespace {
inline void check_distinct(const Vec2& x, const Vec2& y) {
  if (x == y) throw SingularEvaluationError("kernel evaluated at coincident points");
}
}  // namespace

Mat2 stokeslet(const Vec2& x, const Vec2& y, double mu) {
  check_distinct(x, y);
  Vec2 r = x - y;
  double r2 = r.squaredNorm();
  double c = 1.0 / (4.0 * kPi * mu);
  Mat2 out = (r * r.transpose()) * (c / r2);
  double lg = -0.5 * std::log(r2) * c;  // log(1/r)
  out(0, 0) += lg;
  out(1, 1) += lg;
  return out;
}

Mat2 double_layer(const Vec2& x, const Vec2& y, const Vec2& n_y) {
  check_distinct(x, y);
  Vec2 r = x - y;
  double r2 = r.squaredNorm();
  double c = r.dot(n_y) / (kPi * r2 * r2);
  return (r * r.transpose()) * c;
}

Mat2 double_layer_limit(const Vec2& tangent, double curvature) {
  return (tangent * tangent.transpose()) * (-curvature / (2.0 * kPi));
}

Vec2 pressure_single(const Vec2& x, const Vec2& y) {
  check_distinct(x, y);
  Vec2 r = x - y;
  return r / (2.0 * kPi * r.squaredNorm());
}

Vec2 pressure_double(const Vec2& x, const Vec2& y, const Vec2& n_y, double mu) {
  check_distinct(x, y);
  Vec2 r = x - y;
  double r2 = r.squaredNorm();
  return (mu / kPi) * (-n_y / r2 + r * (2.0 * r.dot(n_y) / (r2 * r2)));
}

Mat2 stokeslet_gradient(const Vec2& x, const Vec2& y, double mu, const Vec2& d) {
  check_distinct(x, y);
  Vec2 r = x - y;
  double r2 = r.squaredNorm();
  double rd = r.dot(d);
  Mat2 out = (d * r.transpose() + r * d.transpose()) / r2 -
             (r * r.transpose()) * (2.0 * rd / (r2 * r2));
  out(0, 0) -= rd / r2;
  out(1, 1) -= rd / r2;
  return out / (4.0 * kPi * mu);
}

Mat2 double_layer_gradient(const Vec2& x, const Vec2& y, const Vec2& n_y,
                           const Vec2& d) {
  check_distinct(x, y);
  Vec2 r = x - y;
  double r2 = r.squaredNorm();
  double r4 = r2 * r2;
  double rn = r.dot(n_y), rd = r.dot(d);
  Mat2 out = (d * r.transpose() + r * d.transpose()) * (rn / r4) +
             (r * r.transpose()) * (n_y.dot(d) / r4 - 4.0 * rn * rd / (r4 * r2));
  return out / kPi;
}

Vec nullspace_apply(const Discretization& d, const Vec& tau, Index node_end) {
  require(tau.size() == d.n_unknowns(), "nullspace_apply: density size mismatch");
  require(node_end >= 0 && node_end <= d.n_nodes(), "nullspace_apply: bad node range");
  double flux = 0.0;
  for (Index j = 0; j < node_end; ++j)
    flux += d.w[j] * (tau[2 * j] * d.normal[j].x() + tau[2 * j + 1] * d.normal[j].y());
  Vec out = Vec::Zero(tau.size());
  for (Index i = 0; i < node_end; ++i) {
    out[2 * i] = d.normal[i].x() * flux;
    out[2 * i + 1] = d.normal[i].y() * flux;
  }
  return out;
}

ComponentRole component_role(const Formulation& f, const Discretization& d, Index comp) {
  ComponentRole role;
  switch (f.kind) {
    case FormulationKind::InteriorDirichlet:
      role.jump = -0.5;
      role.single_layer = false;
      role.in_nullspace = true;
      break;
    case FormulationKind::ExteriorCombined:
      role.jump = 0.5;
      role.single_layer = true;
      role.in_nullspace = false;
      break;
    case FormulationKind::Mixed:
      role.jump = -0.5;
      role.single_layer = d.components[comp].is_hole;
      role.in_nullspace = !d.components[comp].is_hole;
      break;
  }
  return role;
}

}  // namespace stokesbie

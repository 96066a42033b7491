#include "stokesbie/nystrom.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "stokesbie/gauss.hpp"
#include "stokesbie/logquad.hpp"

namespace stokesbie {

namespace {
constexpr Index kDenseGuard = 12000;  // unknowns; full materialization limit
}

BieAssembler::BieAssembler(std::shared_ptr<const Discretization> d, Formulation f)
    : d_(std::move(d)), f_(f) {
  const Discretization& D = *d_;
  require(D.n_nodes() > 0, "assembler: empty discretization");
  require(f_.mu > 0, "assembler: viscosity must be positive");
  if (f_.kind == FormulationKind::InteriorDirichlet)
    require(D.components.size() == 1, "interior formulation expects a single curve");
  if (f_.kind == FormulationKind::Mixed)
    require(!D.components[0].is_hole, "mixed formulation expects wall first");

  for (Index c = 0; c < (Index)D.components.size(); ++c) {
    roles_.push_back(component_role(f_, D, c));
    any_single_layer_ |= roles_.back().single_layer;
    any_nullspace_ |= roles_.back().in_nullspace;
  }

  Index n = D.n_nodes();
  comp_of_.resize(n);
  local_in_panel_.resize(n);
  gl_xi_.resize(n);
  jac_.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& p = D.panels[D.panel_of[i]];
    comp_of_[i] = p.component;
    int loc = (int)(i - p.node_begin);
    local_in_panel_[i] = loc;
    const GaussRule& g = gauss_rule(p.q);
    gl_xi_[i] = g.nodes[loc];
    jac_[i] = D.w[i] / g.weights[loc];
  }

  // Product-rule weights of every node against its neighbor panels, for
  // components whose sources carry the log-singular single layer.
  lam_prev_.resize(n);
  lam_next_.resize(n);
  u_prev_.assign(n, 0.0);
  u_next_.assign(n, 0.0);
  for (Index i = 0; i < n; ++i) {
    Index ci = comp_of_[i];
    if (!roles_[ci].single_layer) continue;
    const auto& comp = D.components[ci];
    Index np = (Index)comp.mesh.panels.size();
    Index pl = D.panels[D.panel_of[i]].local;
    double t = D.param[i];
    for (int dir = 0; dir < 2; ++dir) {
      Index nb = (dir == 0) ? (pl + np - 1) % np : (pl + 1) % np;
      const Panel& pn = comp.mesh.panels[nb];
      double mid = 0.5 * (pn.a + pn.b);
      double tt = t;
      while (tt - mid > kPi) tt -= 2 * kPi;
      while (mid - tt > kPi) tt += 2 * kPi;
      double u = 2.0 * (tt - pn.a) / (pn.b - pn.a) - 1.0;
      Vec lam = log_rule_weights(comp.mesh.q, u);
      if (dir == 0) {
        u_prev_[i] = u;
        lam_prev_[i] = std::move(lam);
      } else {
        u_next_[i] = u;
        lam_next_[i] = std::move(lam);
      }
    }
  }
}

void BieAssembler::fill_block(Index i, Index j, double out[4]) const {
  const Discretization& D = *d_;
  Index ci = comp_of_[i];
  const ComponentRole& ri = roles_[ci];
  double c4 = 1.0 / (4.0 * kPi * f_.mu);

  if (i == j) {
    double wi = D.w[i];
    const Vec2& t = D.tangent[i];
    double dl = -D.curvature[i] / (2.0 * kPi) * wi;
    out[0] = ri.jump + dl * t.x() * t.x();
    out[1] = dl * t.x() * t.y();
    out[2] = out[1];
    out[3] = ri.jump + dl * t.y() * t.y();
    if (ri.single_layer) {
      double sm = wi * c4;
      out[0] += sm * t.x() * t.x();
      out[1] += sm * t.x() * t.y();
      out[2] += sm * t.x() * t.y();
      out[3] += sm * t.y() * t.y();
      const Mat& tab = log_rule_self_table(D.panels[D.panel_of[i]].q);
      int loc = local_in_panel_[i];
      double lg = c4 * (-tab(loc, loc) * jac_[i] - wi * std::log(jac_[i]));
      out[0] += lg;
      out[3] += lg;
    }
    if (ri.in_nullspace) {
      const Vec2& nn = D.normal[i];
      out[0] += wi * nn.x() * nn.x();
      out[1] += wi * nn.x() * nn.y();
      out[2] += wi * nn.y() * nn.x();
      out[3] += wi * nn.y() * nn.y();
    }
    return;
  }

  Index cj = comp_of_[j];
  const ComponentRole& rj = roles_[cj];
  double rx = D.x[i].x() - D.x[j].x();
  double ry = D.x[i].y() - D.x[j].y();
  double r2 = rx * rx + ry * ry;
  double wj = D.w[j];

  double dn = (rx * D.normal[j].x() + ry * D.normal[j].y()) / (kPi * r2 * r2);
  double c = wj * dn;
  out[0] = c * rx * rx;
  out[1] = c * rx * ry;
  out[2] = out[1];
  out[3] = c * ry * ry;

  if (rj.single_layer) {
    double sc = wj * c4 / r2;
    out[0] += sc * rx * rx;
    out[1] += sc * rx * ry;
    out[2] += sc * rx * ry;
    out[3] += sc * ry * ry;
    double lg;
    bool corrected = false;
    if (ci == cj) {
      const auto& pi = D.panels[D.panel_of[i]];
      const auto& pj = D.panels[D.panel_of[j]];
      Index np = (Index)D.components[ci].mesh.panels.size();
      Index diff = pi.local - pj.local;
      if (diff < 0) diff += np;
      if (diff == 0) {
        const Mat& tab = log_rule_self_table(pi.q);
        double lam = tab(local_in_panel_[i], local_in_panel_[j]);
        double dxi = gl_xi_[j] - gl_xi_[i];
        lg = c4 * (-lam * jac_[j] - wj * (0.5 * std::log(r2) - std::log(std::fabs(dxi))));
        corrected = true;
      } else if (diff == 1 || diff == np - 1) {
        const Vec& lamv = (diff == 1) ? lam_prev_[i] : lam_next_[i];
        double u = (diff == 1) ? u_prev_[i] : u_next_[i];
        double lam = lamv[local_in_panel_[j]];
        double dxi = gl_xi_[j] - u;
        lg = c4 * (-lam * jac_[j] - wj * (0.5 * std::log(r2) - std::log(std::fabs(dxi))));
        corrected = true;
      }
    }
    if (!corrected) lg = c4 * wj * (-0.5 * std::log(r2));
    out[0] += lg;
    out[3] += lg;
  }

  if (ri.in_nullspace && rj.in_nullspace) {
    const Vec2& ni = D.normal[i];
    const Vec2& nj = D.normal[j];
    out[0] += wj * ni.x() * nj.x();
    out[1] += wj * ni.x() * nj.y();
    out[2] += wj * ni.y() * nj.x();
    out[3] += wj * ni.y() * nj.y();
  }
}

namespace {
struct PackedNode {
  Index node;
  // (vector component, position in the index list); duplicates allowed
  std::vector<std::pair<int, int>> slots;
};

std::vector<PackedNode> pack_indices(const std::vector<Index>& idx) {
  std::vector<PackedNode> out;
  out.reserve(idx.size());
  std::unordered_map<Index, size_t> where;
  where.reserve(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    Index node = idx[k] >> 1;
    int comp = (int)(idx[k] & 1);
    auto it = where.find(node);
    if (it == where.end()) {
      it = where.emplace(node, out.size()).first;
      out.push_back({node, {}});
    }
    out[it->second].slots.emplace_back(comp, (int)k);
  }
  return out;
}
}  // namespace

Mat BieAssembler::submatrix(const std::vector<Index>& rows,
                            const std::vector<Index>& cols) const {
  Index nu = d_->n_unknowns();
  for (Index r : rows) require(r >= 0 && r < nu, "submatrix: row out of range");
  for (Index c : cols) require(c >= 0 && c < nu, "submatrix: col out of range");
  auto R = pack_indices(rows);
  auto C = pack_indices(cols);
  Mat out(rows.size(), cols.size());
  double blk[4];
  for (const auto& cn : C) {
    for (const auto& rn : R) {
      fill_block(rn.node, cn.node, blk);
      for (auto [a, rpos] : rn.slots)
        for (auto [b, cpos] : cn.slots) out(rpos, cpos) = blk[2 * a + b];
    }
  }
  return out;
}

Mat BieAssembler::submatrix_range(Index r0, Index r1, Index c0, Index c1) const {
  std::vector<Index> rows, cols;
  rows.reserve(r1 - r0);
  cols.reserve(c1 - c0);
  for (Index r = r0; r < r1; ++r) rows.push_back(r);
  for (Index c = c0; c < c1; ++c) cols.push_back(c);
  return submatrix(rows, cols);
}

Mat BieAssembler::full_matrix() const {
  require(d_->n_unknowns() <= kDenseGuard, "full_matrix: system too large for dense assembly");
  return submatrix_range(0, d_->n_unknowns(), 0, d_->n_unknowns());
}

Vec BieAssembler::apply_dense_free(const Vec& x) const {
  require(x.size() == d_->n_unknowns(), "apply: size mismatch");
  Index n = d_->n_nodes();
  Vec y = Vec::Zero(x.size());
  double blk[4];
  for (Index j = 0; j < n; ++j) {
    double xj0 = x[2 * j], xj1 = x[2 * j + 1];
    for (Index i = 0; i < n; ++i) {
      fill_block(i, j, blk);
      y[2 * i] += blk[0] * xj0 + blk[1] * xj1;
      y[2 * i + 1] += blk[2] * xj0 + blk[3] * xj1;
    }
  }
  return y;
}

BieSystem assemble(std::shared_ptr<const Discretization> d, const Formulation& f,
                   bool materialize) {
  BieSystem sys;
  sys.disc = d;
  sys.formulation = f;
  sys.oracle = std::make_shared<BieAssembler>(d, f);
  if (materialize) sys.dense = sys.oracle->full_matrix();
  return sys;
}

namespace {
std::vector<Index> scalars_of(const std::vector<Index>& nodes) {
  std::vector<Index> out;
  out.reserve(2 * nodes.size());
  for (Index v : nodes) {
    out.push_back(2 * v);
    out.push_back(2 * v + 1);
  }
  return out;
}
}  // namespace

BlockSource::BlockSource(std::shared_ptr<const BieAssembler> old_oracle,
                         std::shared_ptr<const BieAssembler> new_oracle,
                         RefinementPlan plan)
    : old_(std::move(old_oracle)), new_(std::move(new_oracle)), plan_(std::move(plan)) {
  kept_old_s_ = scalars_of(plan_.kept_old);
  kept_new_s_ = scalars_of(plan_.kept_new);
  cut_s_ = scalars_of(plan_.cut_old);
  added_s_ = scalars_of(plan_.added_new);
}

const BieAssembler& BlockSource::oracle_of(BlockName b) const {
  switch (b) {
    case BlockName::kk:
    case BlockName::kc:
    case BlockName::ck:
    case BlockName::cc:
      return *old_;
    default:
      return *new_;
  }
}

const std::vector<Index>& BlockSource::row_map(BlockName b) const {
  switch (b) {
    case BlockName::kk:
    case BlockName::kc:
      return kept_old_s_;
    case BlockName::ck:
    case BlockName::cc:
      return cut_s_;
    case BlockName::kp:
      return kept_new_s_;
    default:
      return added_s_;  // pk, pp
  }
}

const std::vector<Index>& BlockSource::col_map(BlockName b) const {
  switch (b) {
    case BlockName::kk:
    case BlockName::ck:
      return kept_old_s_;
    case BlockName::kc:
    case BlockName::cc:
      return cut_s_;
    case BlockName::pk:
      return kept_new_s_;
    default:
      return added_s_;  // kp, pp
  }
}

Index BlockSource::rows_of(BlockName b) const { return (Index)row_map(b).size(); }
Index BlockSource::cols_of(BlockName b) const { return (Index)col_map(b).size(); }

Mat BlockSource::eval(BlockName b, const std::vector<Index>& rows,
                      const std::vector<Index>& cols) const {
  const auto& rm = row_map(b);
  const auto& cm = col_map(b);
  std::vector<Index> gr, gc;
  gr.reserve(rows.size());
  gc.reserve(cols.size());
  for (Index r : rows) {
    require(r >= 0 && r < (Index)rm.size(), "block eval: row out of range");
    gr.push_back(rm[r]);
  }
  for (Index c : cols) {
    require(c >= 0 && c < (Index)cm.size(), "block eval: col out of range");
    gc.push_back(cm[c]);
  }
  return oracle_of(b).submatrix(gr, gc);
}

Mat BlockSource::eval_full(BlockName b) const {
  require((double)rows_of(b) * (double)cols_of(b) <= 4e7, "block too large to materialize");
  std::vector<Index> rows(rows_of(b)), cols(cols_of(b));
  for (Index i = 0; i < (Index)rows.size(); ++i) rows[i] = i;
  for (Index i = 0; i < (Index)cols.size(); ++i) cols[i] = i;
  return eval(b, rows, cols);
}

Vec2 BlockSource::row_point(BlockName b, Index r) const {
  return oracle_of(b).disc().x[row_map(b)[r] >> 1];
}

Vec2 BlockSource::col_point(BlockName b, Index c) const {
  return oracle_of(b).disc().x[col_map(b)[c] >> 1];
}

DenseBlocks assemble_blocks(const BlockSource& src) {
  DenseBlocks out;
  out.kk = src.eval_full(BlockName::kk);
  out.kc = src.eval_full(BlockName::kc);
  out.ck = src.eval_full(BlockName::ck);
  out.cc = src.eval_full(BlockName::cc);
  out.kp = src.eval_full(BlockName::kp);
  out.pk = src.eval_full(BlockName::pk);
  out.pp = src.eval_full(BlockName::pp);
  return out;
}

std::vector<StokesletSource> ring_sources(int n, const Vec2& center, double radius) {
  std::vector<StokesletSource> out;
  for (int s = 0; s < n; ++s) {
    double th = 2 * kPi * s / n + 0.4;
    double ph = 2 * kPi * s / n + 0.7;
    out.push_back({center + radius * Vec2(std::cos(th), std::sin(th)),
                   Vec2(std::cos(ph), std::sin(ph))});
  }
  return out;
}

Vec boundary_data(const Discretization& d, const std::vector<StokesletSource>& src,
                  double mu) {
  Vec g = Vec::Zero(d.n_unknowns());
  for (Index i = 0; i < d.n_nodes(); ++i) {
    Vec2 u = field_velocity(src, mu, d.x[i]);
    g[2 * i] = u.x();
    g[2 * i + 1] = u.y();
  }
  return g;
}

Vec2 field_velocity(const std::vector<StokesletSource>& src, double mu, const Vec2& p) {
  Vec2 u = Vec2::Zero();
  for (const auto& s : src) u += stokeslet(p, s.location, mu) * s.strength;
  return u;
}

double normal_flux(const Discretization& d, const Vec& g) {
  require(g.size() == d.n_unknowns(), "normal_flux: size mismatch");
  double flux = 0;
  for (Index i = 0; i < d.n_nodes(); ++i)
    flux += d.w[i] * (g[2 * i] * d.normal[i].x() + g[2 * i + 1] * d.normal[i].y());
  return flux;
}

EvaluationResult evaluate_solution(const Discretization& d, const Formulation& f,
                                   const Vec& tau, const std::vector<Vec2>& targets,
                                   bool with_pressure) {
  require(tau.size() == d.n_unknowns(), "evaluate_solution: density size mismatch");
  EvaluationResult res;
  res.velocity.resize(targets.size(), Vec2::Zero());
  res.near_boundary.assign(targets.size(), false);
  if (with_pressure) res.pressure.assign(targets.size(), 0.0);

  std::vector<ComponentRole> roles;
  for (Index c = 0; c < (Index)d.components.size(); ++c)
    roles.push_back(component_role(f, d, c));

  for (size_t t = 0; t < targets.size(); ++t) {
    const Vec2& p = targets[t];
    Vec2 u = Vec2::Zero();
    double pr = 0;
    double closest = 1e300;
    Index closest_node = 0;
    for (Index j = 0; j < d.n_nodes(); ++j) {
      double dist = (d.x[j] - p).norm();
      if (dist < closest) {
        closest = dist;
        closest_node = j;
      }
      Vec2 tj(tau[2 * j], tau[2 * j + 1]);
      const ComponentRole& role = roles[d.component_of_node(j)];
      u += d.w[j] * (double_layer(p, d.x[j], d.normal[j]) * tj);
      if (role.single_layer) u += d.w[j] * (stokeslet(p, d.x[j], f.mu) * tj);
      if (with_pressure) {
        pr += d.w[j] * pressure_double(p, d.x[j], d.normal[j], f.mu).dot(tj);
        if (role.single_layer) pr += d.w[j] * pressure_single(p, d.x[j]).dot(tj);
      }
    }
    res.velocity[t] = u;
    if (with_pressure) res.pressure[t] = pr;
    if (closest < d.panel_arclength(d.panel_of[closest_node]))
      res.near_boundary[t] = true;
  }
  return res;
}

void dump_matrix(const std::string& path, const Mat& m) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  require(fp != nullptr, "dump_matrix: cannot open " + path);
  uint32_t dims[2] = {(uint32_t)m.rows(), (uint32_t)m.cols()};
  std::fwrite(dims, sizeof(uint32_t), 2, fp);
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    std::fwrite(row.data(), sizeof(double), row.size(), fp);
  }
  std::fclose(fp);
}

Mat load_matrix(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  require(fp != nullptr, "load_matrix: cannot open " + path);
  uint32_t dims[2];
  require(std::fread(dims, sizeof(uint32_t), 2, fp) == 2, "load_matrix: bad header");
  Mat m(dims[0], dims[1]);
  std::vector<double> row(dims[1]);
  for (uint32_t i = 0; i < dims[0]; ++i) {
    require(std::fread(row.data(), sizeof(double), dims[1], fp) == dims[1],
            "load_matrix: truncated");
    for (uint32_t j = 0; j < dims[1]; ++j) m(i, j) = row[j];
  }
  std::fclose(fp);
  return m;
}

}  // namespace stokesbie

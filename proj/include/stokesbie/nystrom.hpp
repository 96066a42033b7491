#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stokesbie/common.hpp"
#include "stokesbie/geometry.hpp"
#include "stokesbie/kernels.hpp"

namespace stokesbie {

// Nystrom discretization of the boundary integral operator.  Produces any
// submatrix on demand; rows and columns are scalar unknown indices
// (2*node + component).  The log-singular single layer is integrated with a
// panel-local product rule on the source panel of the target node and on its
// two parameter neighbors; everything else is plain Gauss quadrature with
// analytic limits on the diagonal.
class BieAssembler {
public:
  BieAssembler(std::shared_ptr<const Discretization> d, Formulation f);

  const Discretization& disc() const { return *d_; }
  std::shared_ptr<const Discretization> disc_ptr() const { return d_; }
  const Formulation& formulation() const { return f_; }

  Mat submatrix(const std::vector<Index>& rows, const std::vector<Index>& cols) const;
  // Contiguous convenience: scalar index ranges [r0, r1) x [c0, c1).
  Mat submatrix_range(Index r0, Index r1, Index c0, Index c1) const;
  Mat full_matrix() const;

  // y = A x without forming A; O(N^2) kernel sums, small problems only.
  Vec apply_dense_free(const Vec& x) const;

  bool has_single_layer() const { return any_single_layer_; }
  bool has_nullspace() const { return any_nullspace_; }
  const ComponentRole& role(Index comp) const { return roles_[comp]; }

private:
  void fill_block(Index i, Index j, double out[4]) const;
  friend class BlockSource;

  std::shared_ptr<const Discretization> d_;
  Formulation f_;
  std::vector<ComponentRole> roles_;
  bool any_single_layer_ = false, any_nullspace_ = false;

  // Flat per-node lookups.
  std::vector<Index> comp_of_;
  std::vector<int> local_in_panel_;
  std::vector<double> gl_xi_, jac_;  // Gauss coordinate and ds/dxi at each node
  // Product-rule weights of each node against its two neighbor panels
  // (only populated for components whose sources carry the single layer).
  std::vector<Vec> lam_prev_, lam_next_;
  std::vector<double> u_prev_, u_next_;
};

struct BieSystem {
  std::shared_ptr<const Discretization> disc;
  Formulation formulation;
  std::shared_ptr<const BieAssembler> oracle;
  Mat dense;  // materialized only when requested
};

BieSystem assemble(std::shared_ptr<const Discretization> d, const Formulation& f,
                   bool materialize = false);

enum class BlockName { kk, kc, ck, cc, kp, pk, pp };

// Lazy views of the seven refinement blocks.  Row/column indices are local to
// the block; kk/kc/ck/cc evaluate on the old discretization, kp/pk/pp on the
// new one, so shared entries agree bit for bit with the full assemblies.
class BlockSource {
public:
  BlockSource(std::shared_ptr<const BieAssembler> old_oracle,
              std::shared_ptr<const BieAssembler> new_oracle, RefinementPlan plan);

  Mat eval(BlockName b, const std::vector<Index>& rows, const std::vector<Index>& cols) const;
  Mat eval_full(BlockName b) const;
  Index rows_of(BlockName b) const;
  Index cols_of(BlockName b) const;
  // Physical point of a block-local scalar row/column index.
  Vec2 row_point(BlockName b, Index r) const;
  Vec2 col_point(BlockName b, Index c) const;

  const RefinementPlan& plan() const { return plan_; }
  const BieAssembler& old_oracle() const { return *old_; }
  const BieAssembler& new_oracle() const { return *new_; }
  std::shared_ptr<const BieAssembler> old_oracle_ptr() const { return old_; }
  std::shared_ptr<const BieAssembler> new_oracle_ptr() const { return new_; }

  // Scalar index maps into the owning discretization.
  const std::vector<Index>& kept_old_scalar() const { return kept_old_s_; }
  const std::vector<Index>& kept_new_scalar() const { return kept_new_s_; }
  const std::vector<Index>& cut_scalar() const { return cut_s_; }
  const std::vector<Index>& added_scalar() const { return added_s_; }

private:
  const BieAssembler& oracle_of(BlockName b) const;
  const std::vector<Index>& row_map(BlockName b) const;
  const std::vector<Index>& col_map(BlockName b) const;

  std::shared_ptr<const BieAssembler> old_, new_;
  RefinementPlan plan_;
  std::vector<Index> kept_old_s_, kept_new_s_, cut_s_, added_s_;
};

struct DenseBlocks {
  Mat kk, kc, ck, cc, kp, pk, pp;
};
// Materializes all seven blocks; intended for modest sizes (tests, oracles,
// the diagnostic SVD compression path).
DenseBlocks assemble_blocks(const BlockSource& src);

// Boundary data and reference fields from free-space point forces.
struct StokesletSource {
  Vec2 location = Vec2::Zero();
  Vec2 strength = Vec2::UnitX();
};

// n sources on a circle; strengths are unit vectors rotated with the index.
std::vector<StokesletSource> ring_sources(int n, const Vec2& center, double radius);

Vec boundary_data(const Discretization& d, const std::vector<StokesletSource>& src,
                  double mu);
Vec2 field_velocity(const std::vector<StokesletSource>& src, double mu, const Vec2& p);

// Weighted normal flux of a boundary field; consistency requires ~0 for
// interior data.
double normal_flux(const Discretization& d, const Vec& g);

struct EvaluationResult {
  std::vector<Vec2> velocity;
  std::vector<double> pressure;
  std::vector<bool> near_boundary;  // within one local panel length of the curve
};
EvaluationResult evaluate_solution(const Discretization& d, const Formulation& f,
                                   const Vec& tau, const std::vector<Vec2>& targets,
                                   bool with_pressure = false);

// Row-major binary dump: uint32 rows, uint32 cols, then the doubles.
void dump_matrix(const std::string& path, const Mat& m);
Mat load_matrix(const std::string& path);

}  // namespace stokesbie

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stokesbie/common.hpp"
#include "stokesbie/nystrom.hpp"

namespace stokesbie {

// Entry oracle over scalar unknown indices plus the per-node data the
// compression needs: positions for the partition and proxy circles, source
// normals/weights/kernel roles for the incoming-side evaluation functionals,
// and the two rank-one completion vectors when the formulation carries one
// (row_null holds the left factor per node, col_null the weighted right
// factor).
struct HbsSource {
  std::function<Mat(const std::vector<Index>&, const std::vector<Index>&)>
      entries;
  std::vector<Vec2> points;
  std::vector<Vec2> source_normal;
  Vec source_weight;
  std::vector<char> source_single_layer;
  std::vector<Vec2> row_null;  // empty when no completion term
  std::vector<Vec2> col_null;
  double mu = 1.0;

  Index n_nodes() const { return static_cast<Index>(points.size()); }
};

// Full system matrix of an assembled problem.
HbsSource make_hbs_source(std::shared_ptr<const BieAssembler> a);
// Principal submatrix on a node subset (e.g. the added-node block).
HbsSource make_hbs_source_subset(std::shared_ptr<const BieAssembler> a,
                                 std::vector<Index> nodes);

struct HbsOptions {
  double eps = 1e-10;
  Index leaf_nodes = 64;  // two unknowns per node
  int n_proxy = 64;       // starting samples per proxy circle, doubled until
                          // the rank settles within 2
  double bas_factor = 1.5;
  double div_factor = 3.0;
};

struct HbsNode {
  Index begin = 0, end = 0;  // node range [begin, end)
  Index parent = -1, left = -1, right = -1;
  int depth = 0;
  Index k = 0;  // shared row/column skeleton size in scalars
  std::vector<Index> row_skel, col_skel;  // global scalar indices
  Mat u, v;     // interpolation factors over the node's candidate scalars
  Mat d;        // leaf diagonal block
  Mat b_sib;    // coupling rows(row_skel) x cols(sibling col_skel)
  // Inverse factors of the telescoping solve.
  Mat dhat, e, f, g;

  bool is_leaf() const { return left < 0; }
};

struct HbsOperator {
  Index n = 0;  // unknowns (2 per node)
  Index leaf_nodes = 64;
  double eps = 0.0;
  std::vector<HbsNode> nodes;  // nodes[0] is the root
  Mat root_g;                  // inverse of the top skeleton block
  bool has_inverse = false;
  std::vector<std::string> notes;
  Index max_block_drawn = 0;  // largest entry block requested during build

  Index total_skeleton() const;
};

// Builds the telescoping representation from entry samples only; the largest
// dense block ever drawn is recorded, never the full matrix (for N above one
// leaf).  A node whose rank does not drop below its block size is kept at
// full rank and logged.
HbsOperator hbs_compress(const HbsSource& src, const HbsOptions& opts = {});

// Builds the inverse factors in place.  A block whose condition exceeds
// min(0.1/eps, 1e6) is reported as singular, naming the tree node: at that
// conditioning the inverse would amplify compression noise to order one.
void hbs_invert(HbsOperator& op);

Mat hbs_apply(const HbsOperator& op, const Mat& v);
Mat hbs_apply_t(const HbsOperator& op, const Mat& v);
Mat hbs_solve(const HbsOperator& op, const Mat& b);
Mat hbs_solve_t(const HbsOperator& op, const Mat& b);
Vec hbs_apply(const HbsOperator& op, const Vec& v);
Vec hbs_apply_t(const HbsOperator& op, const Vec& v);
Vec hbs_solve(const HbsOperator& op, const Vec& b);
Vec hbs_solve_t(const HbsOperator& op, const Vec& b);

// Versioned little-endian binary serialization, magic bytes "HBS1".
void hbs_save(const HbsOperator& op, const std::string& path);
HbsOperator hbs_load(const std::string& path);

}  // namespace stokesbie

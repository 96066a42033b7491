#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stokesbie/idlib.hpp"
#include "stokesbie/nystrom.hpp"
#include "stokesbie/proxy.hpp"

namespace stokesbie {

// two_step_id: per-block row IDs (proxy far field + direct near field),
// concatenated, then a randomized row ID of the stacked interpolation
// factor.  svd_optimal: per-block truncated SVDs re-factored through one
// more SVD; dense evaluation of every block, diagnostic sizes only.
enum class CompressionMode { TwoStepId, SvdOptimal };

struct BlockFactor {
  Mat L;  // block rows x rank
  Mat R;  // rank x block cols
  Index k = 0;
};

// Low-rank factorization of the update matrix relating the extended system
// to its block-diagonal part.  Extended ordering: kept rows, cut rows, added
// rows (scalar unknowns).
struct LowRankUpdate {
  Mat L;  // n_ext x k
  Mat R;  // k x n_ext
  Index k = 0;

  BlockFactor kc, kp, pk;
  Mat L1, R1;  // stacked per-block factors, k1 = kc.k + kp.k + pk.k columns
  Index k1 = 0;

  CompressionMode mode = CompressionMode::TwoStepId;
  std::vector<Index> skeleton;  // rows of L1 kept by the final recompression
  std::vector<std::string> notes;

  Index nk2 = 0, nc2 = 0, np2 = 0;  // scalar block sizes
  Index n_ext() const { return nk2 + nc2 + np2; }

  // Dense L1 * R1 and L * R; test-size instances only.
  Mat dense_q1() const { return L1 * R1; }
  Mat dense_q() const { return L * R; }
};

struct CompressOptions {
  PartitionTree::Kind tree_kind = PartitionTree::Kind::DyadicByDistance;
  Index leaf_cap = 128;
  bool reid_concat = false;  // re-ID each block's stacked far+near factor
  std::uint64_t seed = 0;
  // Near-field blocks larger than this many entries are compressed through
  // a row partition instead of one dense factorization.
  Index near_dense_limit = Index{1} << 22;
};

LowRankUpdate compress_update(const BlockSource& src,
                              const ProxyGeometry& proxy, double eps,
                              CompressionMode mode,
                              const CompressOptions& opts = {});

}  // namespace stokesbie

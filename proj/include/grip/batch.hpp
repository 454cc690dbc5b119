#pragma once

#include <span>
#include <vector>

#include "grip/forward.hpp"

namespace grip {

// Several problems with the same forward kind merged into one problem on the
// disjoint union of their graphs. Segment lists give the owning problem of
// every node, state row and data row.
struct Batch {
  Problem problem;
  Index count = 0;
  IndexList node_seg;
  IndexList state_seg;
  IndexList data_seg;
  IndexList node_offset;   // count + 1 entries
  IndexList state_offset;  // count + 1 entries
};

// Problems must share the forward variant, task kind, state/meta widths and
// (for edge diffusion) the history length.
Batch make_batch(std::span<const Problem* const> problems);
Batch make_batch(const Problem& p);

// Rows of a batched state matrix belonging to problem k.
Mat state_block(const Batch& b, const Mat& x, Index k);

}  // namespace grip

#pragma once

#include <cstddef>

#include "dgerc/tensor.hpp"

namespace dgerc {

// Edge-type ids. 0 means no edge, so "adj <= 0" masks attention.
enum EdgeType : int {
  kNoEdge = 0,
  kSelfLoop = 1,
  kIntraPast = 2,    // i > j, same speaker
  kIntraFuture = 3,  // i < j, same speaker
  kInterFuture = 4,  // i < j, different speakers
  kInterPast = 5,    // i > j, different speakers
};

// Intra-speaker (adj_s) and inter-speaker (adj_c) adjacency, both [B,L,L].
struct RelationalSubgraphs {
  IdTensor adj_s;
  IdTensor adj_c;
  int window = 0;

  std::size_t batch() const { return adj_s.dim(0); }
  std::size_t length() const { return adj_s.dim(1); }
};

// speakers and mask are [B,L]. Only pairs with |i-j| <= window between
// valid positions get an edge; padded rows and columns stay zero.
RelationalSubgraphs build_subgraphs(const IdTensor& speakers, const MaskTensor& mask, int window);

}  // namespace dgerc

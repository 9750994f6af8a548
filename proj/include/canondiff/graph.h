//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_GRAPH_H_
#define CANONDIFF_GRAPH_H_

#include <cstddef>
#include <span>
#include <vector>

#include "canondiff/autodiff.h"

namespace canondiff {

/**
 * @brief Several fully connected graphs packed into one node list.
 *
 * Edge e carries a message from node edge_src[e] to node edge_dst[e]; every
 * ordered pair of distinct nodes within a graph has one edge. Nodes of graph
 * g occupy rows offsets[g] .. offsets[g+1]-1.
 */
struct GraphBatch {
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;
  std::vector<std::size_t> offsets;
  ad::IndexList node_graph;
  ad::IndexList edge_src;
  ad::IndexList edge_dst;
  // num_graphs x 1, 1 / graph size.
  ad::Tensor inv_sizes;

  static GraphBatch fully_connected(std::span<const std::size_t> sizes);

  std::size_t num_edges() const { return edge_src->size(); }
  std::size_t graph_size(std::size_t g) const {
    return offsets[g + 1] - offsets[g];
  }
};

// Per-graph mean of node rows; num_graphs x cols.
ad::Var segment_mean(ad::Var x, const GraphBatch &batch);

// Subtracts each graph's mean from its nodes.
ad::Var center_per_graph(ad::Var x, const GraphBatch &batch);

}  // namespace canondiff

#endif  // CANONDIFF_GRAPH_H_

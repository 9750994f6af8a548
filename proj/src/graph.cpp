//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/graph.h"

#include <memory>

#include "canondiff/errors.h"

namespace canondiff {

GraphBatch GraphBatch::fully_connected(std::span<const std::size_t> sizes) {
  GraphBatch b;
  b.num_graphs = sizes.size();
  b.offsets.reserve(sizes.size() + 1);
  b.offsets.push_back(0);
  auto node_graph = std::make_shared<std::vector<std::uint32_t>>();
  auto src = std::make_shared<std::vector<std::uint32_t>>();
  auto dst = std::make_shared<std::vector<std::uint32_t>>();
  b.inv_sizes = ad::Tensor(sizes.size(), 1);
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const std::size_t n = sizes[g];
    if (n == 0)
      throw ContractViolation("graph batch contains an empty graph");
    const auto base = static_cast<std::uint32_t>(b.offsets.back());
    for (std::size_t i = 0; i < n; ++i) {
      node_graph->push_back(static_cast<std::uint32_t>(g));
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j)
          continue;
        dst->push_back(base + static_cast<std::uint32_t>(i));
        src->push_back(base + static_cast<std::uint32_t>(j));
      }
    }
    b.offsets.push_back(b.offsets.back() + n);
    b.inv_sizes(g, 0) = 1.0 / static_cast<double>(n);
  }
  b.num_nodes = b.offsets.back();
  b.node_graph = std::move(node_graph);
  b.edge_src = std::move(src);
  b.edge_dst = std::move(dst);
  return b;
}

ad::Var segment_mean(ad::Var x, const GraphBatch &batch) {
  ad::Var sums = ad::scatter_add_rows(x, batch.node_graph, batch.num_graphs);
  return sums * x.tape()->constant(batch.inv_sizes);
}

ad::Var center_per_graph(ad::Var x, const GraphBatch &batch) {
  return x - ad::gather_rows(segment_mean(x, batch), batch.node_graph);
}

}  // namespace canondiff

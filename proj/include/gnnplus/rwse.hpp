#pragma once

#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

// Random-walk structural encoding: column k-1 holds the k-step return
// probability (P^k)_vv with P = D^-1 A built from the stored arcs. Rows of
// isolated nodes (out-degree zero) stay zero. Self-loops already present in
// the graph are kept as-is.
inline Tensor compute_rwse(const Graph& g, int steps) {
  if (steps < 1) throw ConfigError("compute_rwse: need at least one step");
  int64_t n = g.num_nodes;
  std::vector<double> inv_out(static_cast<size_t>(n), 0.0);
  for (int64_t u : g.edge_src) inv_out[static_cast<size_t>(u)] += 1.0;
  for (double& d : inv_out) d = d > 0.0 ? 1.0 / d : 0.0;

  // M starts as the identity and is left-multiplied by the sparse P each step.
  std::vector<double> m(static_cast<size_t>(n * n), 0.0);
  std::vector<double> next(static_cast<size_t>(n * n), 0.0);
  for (int64_t v = 0; v < n; ++v) m[static_cast<size_t>(v * n + v)] = 1.0;

  Tensor out = Tensor::zeros({n, steps});
  auto ov = out.data();
  for (int k = 0; k < steps; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int64_t e = 0; e < g.num_edges(); ++e) {
      int64_t u = g.edge_src[e], w = g.edge_dst[e];
      double p = inv_out[static_cast<size_t>(u)];
      const double* mrow = m.data() + w * n;
      double* nrow = next.data() + u * n;
      for (int64_t j = 0; j < n; ++j) nrow[j] += p * mrow[j];
    }
    m.swap(next);
    for (int64_t v = 0; v < n; ++v)
      ov[v * steps + k] = m[static_cast<size_t>(v * n + v)];
  }
  return out;
}

// Structural-encoding fusion: concatenate the encoding onto the features and
// project. The encoding is a constant; gradients flow to x and W_pe only.
inline Tensor fuse_pe(const Tensor& x, const Tensor& pe, const Tensor& w_pe) {
  if (x.rank() != 2 || pe.rank() != 2 || x.dim(0) != pe.dim(0))
    throw DimensionError("fuse_pe: rows mismatch, " + shape_str(x.shape()) +
                         " vs " + shape_str(pe.shape()));
  return matmul(concat_last_dim({x, pe}), w_pe);
}

// Fills the per-graph RWSE cache. Graphs are independent, so the work is
// split across threads.
inline void ensure_rwse(Dataset& ds, int steps, int threads = 1) {
  std::vector<Graph*> todo;
  for (Graph& g : ds.graphs)
    if (!g.rwse.defined() || g.rwse_steps != steps) todo.push_back(&g);
  parallel_for(static_cast<int64_t>(todo.size()), threads,
               [&](int64_t b, int64_t e) {
                 for (int64_t i = b; i < e; ++i) {
                   todo[static_cast<size_t>(i)]->rwse =
                       compute_rwse(*todo[static_cast<size_t>(i)], steps);
                   todo[static_cast<size_t>(i)]->rwse_steps = steps;
                 }
               });
}

}  // namespace gnnplus

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/random.hpp"

namespace gnnplus {

struct SbmParams {
  int64_t num_graphs = 100;
  int64_t nodes_per_graph = 40;
  int64_t num_blocks = 4;
  double p_intra = 0.3;
  double p_inter = 0.02;
  double feature_noise = 0.5;  // probability a node's block feature is hidden
};

namespace detail {

inline void assign_splits(Dataset& ds) {
  // 80/10/10 by graph, in file order
  int64_t n = static_cast<int64_t>(ds.graphs.size());
  int64_t n_train = n * 8 / 10;
  int64_t n_val = n / 10;
  if (n >= 3) {
    n_train = std::max<int64_t>(1, n_train);
    n_val = std::max<int64_t>(1, n_val);
    if (n_train + n_val >= n) n_train = n - n_val - 1;
  }
  for (int64_t i = 0; i < n; ++i) {
    if (i < n_train)
      ds.train_idx.push_back(i);
    else if (i < n_train + n_val)
      ds.val_idx.push_back(i);
    else
      ds.test_idx.push_back(i);
  }
}

}  // namespace detail

// CLUSTER-style inductive node classification: graphs drawn from a stochastic
// block model, node label = block id, node feature = the block id revealed
// with probability 1-noise and otherwise an "unknown" symbol (vocab index
// num_blocks).
inline Dataset generate_sbm_node_task(const SbmParams& p, RngState& rng) {
  if (!(p.p_inter >= 0.0 && p.p_inter < p.p_intra && p.p_intra <= 1.0))
    throw ConfigError("sbm: need 0 <= p_inter < p_intra <= 1");
  if (p.num_blocks < 2) throw ConfigError("sbm: need at least 2 blocks");
  if (p.feature_noise < 0.0 || p.feature_noise > 1.0)
    throw ConfigError("sbm: feature_noise outside [0,1]");
  Dataset ds;
  ds.info.task = Task::node_classification;
  ds.info.node_feat.kind = FeatKind::categorical;
  ds.info.node_feat.vocab = {p.num_blocks + 1};
  ds.info.edge_feat.kind = FeatKind::none;
  ds.info.out_dim = p.num_blocks;
  for (int64_t gi = 0; gi < p.num_graphs; ++gi) {
    Graph g;
    g.num_nodes = p.nodes_per_graph;
    std::vector<int64_t> block(static_cast<size_t>(g.num_nodes));
    for (int64_t v = 0; v < g.num_nodes; ++v)
      block[static_cast<size_t>(v)] = rng.uniform_int(p.num_blocks);
    for (int64_t u = 0; u < g.num_nodes; ++u)
      for (int64_t v = u + 1; v < g.num_nodes; ++v) {
        double prob = block[static_cast<size_t>(u)] == block[static_cast<size_t>(v)]
                          ? p.p_intra
                          : p.p_inter;
        if (rng.bernoulli(prob)) g.add_undirected_edge(u, v);
      }
    g.node_feat.kind = FeatKind::categorical;
    g.node_feat.rows = g.num_nodes;
    g.node_feat.cols = 1;
    for (int64_t v = 0; v < g.num_nodes; ++v) {
      bool hidden = rng.bernoulli(p.feature_noise);
      g.node_feat.cats.push_back(hidden ? p.num_blocks : block[static_cast<size_t>(v)]);
    }
    g.label.classes = block;
    ds.graphs.push_back(std::move(g));
  }
  detail::assign_splits(ds);
  return ds;
}

struct RegressionParams {
  int64_t num_graphs = 40;
  int64_t min_nodes = 6;
  int64_t max_nodes = 12;
  double edge_prob = 0.3;
};

inline int64_t count_triangles(const Graph& g) {
  int64_t n = g.num_nodes;
  std::vector<uint8_t> adj(static_cast<size_t>(n * n), 0);
  for (int64_t i = 0; i < g.num_edges(); ++i)
    adj[static_cast<size_t>(g.edge_src[i] * n + g.edge_dst[i])] = 1;
  int64_t count = 0;
  for (int64_t a = 0; a < n; ++a)
    for (int64_t b = a + 1; b < n; ++b) {
      if (!adj[static_cast<size_t>(a * n + b)]) continue;
      for (int64_t c = b + 1; c < n; ++c)
        if (adj[static_cast<size_t>(a * n + c)] && adj[static_cast<size_t>(b * n + c)])
          ++count;
    }
  return count;
}

// Graph-level regression with a closed-form target: Erdos-Renyi graphs,
// degree-bucket node categories, label = 3 * triangles / |V| (a triangle
// graph scores exactly 1.0).
inline Dataset generate_regression_task(const RegressionParams& p, RngState& rng) {
  if (p.min_nodes < 3 || p.max_nodes < p.min_nodes)
    throw ConfigError("regression: bad size range");
  constexpr int64_t kDegreeVocab = 8;
  Dataset ds;
  ds.info.task = Task::graph_regression;
  ds.info.node_feat.kind = FeatKind::categorical;
  ds.info.node_feat.vocab = {kDegreeVocab};
  ds.info.edge_feat.kind = FeatKind::none;
  ds.info.out_dim = 1;
  for (int64_t gi = 0; gi < p.num_graphs; ++gi) {
    Graph g;
    g.num_nodes = p.min_nodes + rng.uniform_int(p.max_nodes - p.min_nodes + 1);
    for (int64_t u = 0; u < g.num_nodes; ++u)
      for (int64_t v = u + 1; v < g.num_nodes; ++v)
        if (rng.bernoulli(p.edge_prob)) g.add_undirected_edge(u, v);
    std::vector<int64_t> degree(static_cast<size_t>(g.num_nodes), 0);
    for (int64_t v : g.edge_dst) ++degree[static_cast<size_t>(v)];
    g.node_feat.kind = FeatKind::categorical;
    g.node_feat.rows = g.num_nodes;
    g.node_feat.cols = 1;
    for (int64_t v = 0; v < g.num_nodes; ++v)
      g.node_feat.cats.push_back(std::min<int64_t>(degree[static_cast<size_t>(v)],
                                                   kDegreeVocab - 1));
    double label = 3.0 * static_cast<double>(count_triangles(g)) /
                   static_cast<double>(g.num_nodes);
    g.label.values = {label};
    ds.graphs.push_back(std::move(g));
  }
  detail::assign_splits(ds);
  return ds;
}

}  // namespace gnnplus

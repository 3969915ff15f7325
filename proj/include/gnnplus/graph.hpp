#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

enum class Task {
  graph_regression,
  graph_classification,
  graph_multilabel,
  node_classification
};

inline const char* task_name(Task t) {
  switch (t) {
    case Task::graph_regression: return "graph_regression";
    case Task::graph_classification: return "graph_classification";
    case Task::graph_multilabel: return "graph_multilabel";
    case Task::node_classification: return "node_classification";
  }
  return "?";
}

inline Task task_from_name(const std::string& s) {
  if (s == "graph_regression") return Task::graph_regression;
  if (s == "graph_classification") return Task::graph_classification;
  if (s == "graph_multilabel") return Task::graph_multilabel;
  if (s == "node_classification") return Task::node_classification;
  throw ParseError("unknown task '" + s + "'");
}

enum class FeatKind { none, categorical, continuous };

// Row-major feature block: integer categories (one column per categorical
// feature) or continuous values.
struct Features {
  FeatKind kind = FeatKind::none;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int64_t> cats;
  std::vector<double> values;

  bool empty() const { return kind == FeatKind::none; }
};

// Per-column vocabulary sizes for categorical features, or the continuous
// width. This is the schema a model is built against.
struct FeatureSchema {
  FeatKind kind = FeatKind::none;
  std::vector<int64_t> vocab;  // categorical: one entry per column
  int64_t dim = 0;             // continuous width

  int64_t cols() const {
    return kind == FeatKind::categorical ? static_cast<int64_t>(vocab.size())
                                         : dim;
  }
  bool operator==(const FeatureSchema&) const = default;
};

struct DatasetInfo {
  Task task = Task::graph_regression;
  FeatureSchema node_feat;
  FeatureSchema edge_feat;
  int64_t out_dim = 1;  // regression targets, classes, or labels

  bool operator==(const DatasetInfo&) const = default;
};

// Labels are interpreted through the dataset task: regression and multilabel
// use `values` (row-major, out_dim wide), classification uses `classes`
// (one id per graph, or per node for node tasks).
struct Labels {
  std::vector<double> values;
  std::vector<int64_t> classes;
};

struct Graph {
  int64_t num_nodes = 0;
  std::vector<int64_t> edge_src;  // directed storage; undirected graphs keep both arcs
  std::vector<int64_t> edge_dst;
  Features node_feat;
  Features edge_feat;
  Labels label;

  // RWSE cache, filled once per (graph, K) by ensure_rwse
  Tensor rwse;
  int rwse_steps = 0;

  int64_t num_edges() const { return static_cast<int64_t>(edge_src.size()); }

  void add_edge(int64_t u, int64_t v) {
    edge_src.push_back(u);
    edge_dst.push_back(v);
  }

  void add_undirected_edge(int64_t u, int64_t v) {
    add_edge(u, v);
    if (u != v) add_edge(v, u);
  }
};

struct Dataset {
  DatasetInfo info;
  std::vector<Graph> graphs;
  std::vector<int64_t> train_idx, val_idx, test_idx;

  const std::vector<int64_t>& split(const std::string& name) const {
    if (name == "train") return train_idx;
    if (name == "val") return val_idx;
    if (name == "test") return test_idx;
    throw DatasetError("unknown split '" + name + "'");
  }
};

struct GraphBatch {
  int64_t num_nodes = 0;
  int64_t num_graphs = 0;
  std::vector<int64_t> edge_src;
  std::vector<int64_t> edge_dst;
  Features node_feat;
  Features edge_feat;
  std::vector<int64_t> graph_id;  // per node, non-decreasing
  std::vector<int64_t> graph_sizes;
  Labels labels;
  Tensor rwse;  // defined iff every member graph had a cache

  int64_t num_edges() const { return static_cast<int64_t>(edge_src.size()); }
};

namespace detail {

inline void append_features(Features& dst, const Features& src, int64_t rows) {
  if (dst.kind != src.kind)
    throw DatasetError("batch_graphs: mixed feature schemas");
  if (src.kind == FeatKind::none) return;
  if (dst.rows == 0)
    dst.cols = src.cols;
  else if (src.cols != dst.cols)
    throw DatasetError("batch_graphs: feature width " + std::to_string(src.cols) +
                       " vs " + std::to_string(dst.cols));
  dst.rows += rows;
  dst.cats.insert(dst.cats.end(), src.cats.begin(), src.cats.end());
  dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
}

}  // namespace detail

// Disjoint union: node indices of graph k are offset by the total size of the
// preceding graphs; labels concatenate in graph order.
inline GraphBatch batch_graphs(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw DatasetError("batch_graphs: empty graph list");
  GraphBatch b;
  b.num_graphs = static_cast<int64_t>(graphs.size());
  b.node_feat.kind = graphs[0]->node_feat.kind;
  b.edge_feat.kind = graphs[0]->edge_feat.kind;
  bool all_rwse = true;
  int rwse_steps = graphs[0]->rwse_steps;
  int64_t offset = 0;
  for (const Graph* g : graphs) {
    for (int64_t i = 0; i < g->num_edges(); ++i) {
      b.edge_src.push_back(g->edge_src[i] + offset);
      b.edge_dst.push_back(g->edge_dst[i] + offset);
    }
    detail::append_features(b.node_feat, g->node_feat, g->num_nodes);
    detail::append_features(b.edge_feat, g->edge_feat, g->num_edges());
    int64_t gid = static_cast<int64_t>(b.graph_sizes.size());
    for (int64_t i = 0; i < g->num_nodes; ++i) b.graph_id.push_back(gid);
    b.graph_sizes.push_back(g->num_nodes);
    b.labels.values.insert(b.labels.values.end(), g->label.values.begin(),
                           g->label.values.end());
    b.labels.classes.insert(b.labels.classes.end(), g->label.classes.begin(),
                            g->label.classes.end());
    all_rwse = all_rwse && g->rwse.defined() && g->rwse_steps == rwse_steps;
    offset += g->num_nodes;
  }
  b.num_nodes = offset;
  if (all_rwse && rwse_steps > 0) {
    b.rwse = Tensor::zeros({b.num_nodes, rwse_steps});
    auto out = b.rwse.data();
    int64_t row = 0;
    for (const Graph* g : graphs) {
      auto src = g->rwse.data();
      std::copy(src.begin(), src.end(), out.begin() + row * rwse_steps);
      row += g->num_nodes;
    }
  }
  return b;
}

inline GraphBatch batch_graphs(std::span<const Graph> graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return batch_graphs(ptrs);
}

// d-hat per node: in-degree plus the implicit self-loop.
inline Tensor compute_hat_degrees(const GraphBatch& batch) {
  Tensor deg = Tensor::full({batch.num_nodes}, 1.0);
  auto dv = deg.data();
  for (int64_t v : batch.edge_dst) dv[v] += 1.0;
  return deg;
}

// Structural validation shared by the loader and the generators.
inline void validate_graph(const Graph& g, const DatasetInfo& info,
                           const std::string& where) {
  if (g.num_nodes < 1)
    throw DatasetError(where + ": graph must have at least one node");
  for (int64_t i = 0; i < g.num_edges(); ++i) {
    if (g.edge_src[i] < 0 || g.edge_src[i] >= g.num_nodes || g.edge_dst[i] < 0 ||
        g.edge_dst[i] >= g.num_nodes)
      throw DatasetError(where + ": edge (" + std::to_string(g.edge_src[i]) +
                         "," + std::to_string(g.edge_dst[i]) +
                         ") references a node outside [0," +
                         std::to_string(g.num_nodes) + ")");
  }
  auto check_feat = [&](const Features& f, const FeatureSchema& s, int64_t rows,
                        const char* what) {
    if (s.kind == FeatKind::none) {
      if (!f.empty()) throw DatasetError(where + ": unexpected " + what + " features");
      return;
    }
    if (f.kind != s.kind)
      throw DatasetError(where + ": " + what + " feature kind mismatch");
    if (f.rows != rows || f.cols != s.cols())
      throw DatasetError(where + ": " + what + " features are " +
                         std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                         ", expected " + std::to_string(rows) + "x" +
                         std::to_string(s.cols()));
    if (s.kind == FeatKind::categorical) {
      for (int64_t r = 0; r < f.rows; ++r)
        for (int64_t c = 0; c < f.cols; ++c) {
          int64_t v = f.cats[r * f.cols + c];
          if (v < 0 || v >= s.vocab[static_cast<size_t>(c)])
            throw DatasetError(where + ": " + what + " category " +
                               std::to_string(v) + " outside vocab of column " +
                               std::to_string(c));
        }
    }
  };
  check_feat(g.node_feat, info.node_feat, g.num_nodes, "node");
  check_feat(g.edge_feat, info.edge_feat, g.num_edges(), "edge");
  switch (info.task) {
    case Task::graph_regression:
      if (static_cast<int64_t>(g.label.values.size()) != info.out_dim)
        throw DatasetError(where + ": regression label has " +
                           std::to_string(g.label.values.size()) +
                           " values, expected " + std::to_string(info.out_dim));
      break;
    case Task::graph_classification:
      if (g.label.classes.size() != 1 || g.label.classes[0] < 0 ||
          g.label.classes[0] >= info.out_dim)
        throw DatasetError(where + ": class label out of range");
      break;
    case Task::graph_multilabel:
      if (static_cast<int64_t>(g.label.values.size()) != info.out_dim)
        throw DatasetError(where + ": multilabel vector has " +
                           std::to_string(g.label.values.size()) +
                           " entries, expected " + std::to_string(info.out_dim));
      break;
    case Task::node_classification:
      if (static_cast<int64_t>(g.label.classes.size()) != g.num_nodes)
        throw DatasetError(where + ": per-node labels have " +
                           std::to_string(g.label.classes.size()) +
                           " entries for " + std::to_string(g.num_nodes) +
                           " nodes");
      for (int64_t c : g.label.classes)
        if (c < 0 || c >= info.out_dim)
          throw DatasetError(where + ": node class " + std::to_string(c) +
                             " out of range");
      break;
  }
}

inline void validate_dataset(const Dataset& ds) {
  std::vector<int8_t> seen(ds.graphs.size(), 0);
  auto check_split = [&](const std::vector<int64_t>& idx, const char* name) {
    for (int64_t i : idx) {
      if (i < 0 || i >= static_cast<int64_t>(ds.graphs.size()))
        throw DatasetError(std::string("split '") + name + "' index " +
                           std::to_string(i) + " out of range");
      if (seen[static_cast<size_t>(i)]++)
        throw DatasetError(std::string("split '") + name + "' overlaps another split at graph " +
                           std::to_string(i));
    }
  };
  check_split(ds.train_idx, "train");
  check_split(ds.val_idx, "val");
  check_split(ds.test_idx, "test");
  for (size_t i = 0; i < ds.graphs.size(); ++i)
    validate_graph(ds.graphs[i], ds.info, "graph " + std::to_string(i));
}

}  // namespace gnnplus

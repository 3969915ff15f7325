#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"

namespace gnnplus {

// JSON Lines interchange format.
//
// Line 1 (header):
//   {"task": "...", "node_feat_kind": "categorical"|"continuous"|"none",
//    "node_feat_dim_or_vocab": int | [int,...], "edge_feat_kind": ...,
//    "edge_feat_dim_or_vocab": ..., "out_dim": int,
//    "splits": {"train": [...], "val": [...], "test": [...]}}
//
// Each following line is one graph:
//   {"num_nodes": n, "edges": [[u,v],...], "node_feat": ...,
//    "edge_feat": ..., "label": ...}
//
// Undirected edges are listed once and mirrored by the loader (self-loops are
// not duplicated); edge features apply to both arcs of a mirrored edge.

namespace detail {

using nlohmann::json;

inline FeatureSchema schema_from_json(const json& kind_j, const json& dims_j,
                                      const std::string& what) {
  FeatureSchema s;
  std::string kind = kind_j.get<std::string>();
  if (kind == "none") {
    s.kind = FeatKind::none;
  } else if (kind == "categorical") {
    s.kind = FeatKind::categorical;
    if (dims_j.is_number_integer())
      s.vocab = {dims_j.get<int64_t>()};
    else
      s.vocab = dims_j.get<std::vector<int64_t>>();
    for (int64_t v : s.vocab)
      if (v < 1) throw ParseError(what + ": vocab sizes must be positive");
  } else if (kind == "continuous") {
    s.kind = FeatKind::continuous;
    s.dim = dims_j.get<int64_t>();
    if (s.dim < 1) throw ParseError(what + ": continuous dim must be positive");
  } else {
    throw ParseError(what + ": unknown feature kind '" + kind + "'");
  }
  return s;
}

inline json schema_to_json_kind(const FeatureSchema& s) {
  switch (s.kind) {
    case FeatKind::none: return "none";
    case FeatKind::categorical: return "categorical";
    case FeatKind::continuous: return "continuous";
  }
  return "none";
}

inline json schema_to_json_dims(const FeatureSchema& s) {
  if (s.kind == FeatKind::categorical) {
    if (s.vocab.size() == 1) return s.vocab[0];
    return s.vocab;
  }
  if (s.kind == FeatKind::continuous) return s.dim;
  return 0;
}

inline Features features_from_json(const json& j, const FeatureSchema& schema,
                                   int64_t rows, const std::string& where) {
  Features f;
  f.kind = schema.kind;
  f.rows = rows;
  f.cols = schema.cols();
  if (schema.kind == FeatKind::none) {
    f.rows = f.cols = 0;
    return f;
  }
  if (!j.is_array() || static_cast<int64_t>(j.size()) != rows)
    throw ParseError(where + ": feature array must have one entry per row");
  if (schema.kind == FeatKind::categorical) {
    f.cats.reserve(static_cast<size_t>(rows * f.cols));
    for (const json& row : j) {
      if (row.is_number_integer()) {
        if (f.cols != 1) throw ParseError(where + ": expected " +
                                          std::to_string(f.cols) +
                                          " categorical columns");
        f.cats.push_back(row.get<int64_t>());
      } else {
        if (static_cast<int64_t>(row.size()) != f.cols)
          throw ParseError(where + ": categorical row width mismatch");
        for (const json& v : row) f.cats.push_back(v.get<int64_t>());
      }
    }
  } else {
    f.values.reserve(static_cast<size_t>(rows * f.cols));
    for (const json& row : j) {
      if (!row.is_array() || static_cast<int64_t>(row.size()) != f.cols)
        throw ParseError(where + ": continuous row width mismatch");
      for (const json& v : row) f.values.push_back(v.get<double>());
    }
  }
  return f;
}

inline json features_to_json(const Features& f) {
  json rows = json::array();
  for (int64_t r = 0; r < f.rows; ++r) {
    if (f.kind == FeatKind::categorical) {
      if (f.cols == 1) {
        rows.push_back(f.cats[r]);
      } else {
        json row = json::array();
        for (int64_t c = 0; c < f.cols; ++c) row.push_back(f.cats[r * f.cols + c]);
        rows.push_back(row);
      }
    } else {
      json row = json::array();
      for (int64_t c = 0; c < f.cols; ++c) row.push_back(f.values[r * f.cols + c]);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace detail

inline Dataset load_dataset(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file '" + path + "'");
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(path + ": empty file");

  Dataset ds;
  try {
    json h = json::parse(line);
    ds.info.task = task_from_name(h.at("task").get<std::string>());
    ds.info.node_feat = detail::schema_from_json(
        h.at("node_feat_kind"), h.at("node_feat_dim_or_vocab"), "node_feat");
    ds.info.edge_feat = detail::schema_from_json(
        h.at("edge_feat_kind"), h.at("edge_feat_dim_or_vocab"), "edge_feat");
    ds.info.out_dim = h.at("out_dim").get<int64_t>();
    const json& splits = h.at("splits");
    ds.train_idx = splits.at("train").get<std::vector<int64_t>>();
    ds.val_idx = splits.at("val").get<std::vector<int64_t>>();
    ds.test_idx = splits.at("test").get<std::vector<int64_t>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ":1: bad header: " + e.what());
  }

  while (next_line()) {
    std::string where = path + ":" + std::to_string(line_no);
    Graph g;
    try {
      json j = json::parse(line);
      g.num_nodes = j.at("num_nodes").get<int64_t>();
      for (const json& e : j.at("edges")) {
        int64_t u = e.at(0).get<int64_t>();
        int64_t v = e.at(1).get<int64_t>();
        g.add_undirected_edge(u, v);
      }
      if (ds.info.node_feat.kind != FeatKind::none)
        g.node_feat = detail::features_from_json(j.at("node_feat"),
                                                 ds.info.node_feat, g.num_nodes,
                                                 where);
      if (ds.info.edge_feat.kind != FeatKind::none) {
        const json& ef = j.at("edge_feat");
        int64_t listed = static_cast<int64_t>(j.at("edges").size());
        Features once = detail::features_from_json(ef, ds.info.edge_feat,
                                                   listed, where);
        // mirror feature rows alongside the mirrored arcs
        g.edge_feat.kind = once.kind;
        g.edge_feat.cols = once.cols;
        int64_t k = 0;
        for (const json& e : j.at("edges")) {
          int64_t u = e.at(0).get<int64_t>();
          int64_t v = e.at(1).get<int64_t>();
          int copies = u == v ? 1 : 2;
          for (int c = 0; c < copies; ++c) {
            ++g.edge_feat.rows;
            if (once.kind == FeatKind::categorical)
              g.edge_feat.cats.insert(g.edge_feat.cats.end(),
                                      once.cats.begin() + k * once.cols,
                                      once.cats.begin() + (k + 1) * once.cols);
            else
              g.edge_feat.values.insert(g.edge_feat.values.end(),
                                        once.values.begin() + k * once.cols,
                                        once.values.begin() + (k + 1) * once.cols);
          }
          ++k;
        }
      }
      const json& lab = j.at("label");
      switch (ds.info.task) {
        case Task::graph_regression:
          if (lab.is_number())
            g.label.values = {lab.get<double>()};
          else
            g.label.values = lab.get<std::vector<double>>();
          break;
        case Task::graph_classification:
          g.label.classes = {lab.get<int64_t>()};
          break;
        case Task::graph_multilabel:
          g.label.values = lab.get<std::vector<double>>();
          break;
        case Task::node_classification:
          g.label.classes = lab.get<std::vector<int64_t>>();
          break;
      }
    } catch (const json::exception& e) {
      throw ParseError(where + ": malformed record: " + e.what());
    }
    try {
      validate_graph(g, ds.info, where);
    } catch (const DatasetError& e) {
      throw DatasetError(std::string(e.what()));
    }
    ds.graphs.push_back(std::move(g));
  }
  validate_dataset(ds);
  return ds;
}

// Writes arcs with src <= dst once each; assumes the in-memory graph stores
// both directions of every undirected edge (the loader's convention).
inline void save_dataset(const Dataset& ds, const std::string& path) {
  using nlohmann::json;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset file '" + path + "'");
  json h;
  h["task"] = task_name(ds.info.task);
  h["node_feat_kind"] = detail::schema_to_json_kind(ds.info.node_feat);
  h["node_feat_dim_or_vocab"] = detail::schema_to_json_dims(ds.info.node_feat);
  h["edge_feat_kind"] = detail::schema_to_json_kind(ds.info.edge_feat);
  h["edge_feat_dim_or_vocab"] = detail::schema_to_json_dims(ds.info.edge_feat);
  h["out_dim"] = ds.info.out_dim;
  h["splits"] = {{"train", ds.train_idx}, {"val", ds.val_idx}, {"test", ds.test_idx}};
  out << h.dump() << "\n";
  for (const Graph& g : ds.graphs) {
    json j;
    j["num_nodes"] = g.num_nodes;
    json edges = json::array();
    Features ef;
    ef.kind = g.edge_feat.kind;
    ef.cols = g.edge_feat.cols;
    for (int64_t i = 0; i < g.num_edges(); ++i) {
      if (g.edge_src[i] > g.edge_dst[i]) continue;
      edges.push_back({g.edge_src[i], g.edge_dst[i]});
      if (!g.edge_feat.empty()) {
        ++ef.rows;
        if (ef.kind == FeatKind::categorical)
          ef.cats.insert(ef.cats.end(), g.edge_feat.cats.begin() + i * ef.cols,
                         g.edge_feat.cats.begin() + (i + 1) * ef.cols);
        else
          ef.values.insert(ef.values.end(),
                           g.edge_feat.values.begin() + i * ef.cols,
                           g.edge_feat.values.begin() + (i + 1) * ef.cols);
      }
    }
    j["edges"] = edges;
    if (!g.node_feat.empty()) j["node_feat"] = detail::features_to_json(g.node_feat);
    if (!g.edge_feat.empty()) j["edge_feat"] = detail::features_to_json(ef);
    switch (ds.info.task) {
      case Task::graph_regression:
        if (g.label.values.size() == 1)
          j["label"] = g.label.values[0];
        else
          j["label"] = g.label.values;
        break;
      case Task::graph_classification:
        j["label"] = g.label.classes[0];
        break;
      case Task::graph_multilabel:
        j["label"] = g.label.values;
        break;
      case Task::node_classification:
        j["label"] = g.label.classes;
        break;
    }
    out << j.dump() << "\n";
  }
}

}  // namespace gnnplus

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/parameter_store.hpp"
#include "gnnplus/random.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

// The six per-layer technique toggles. Dropout doubles as its own flag: a
// rate of zero disables it.
struct TechniqueFlags {
  bool use_edge_features = false;
  bool use_norm = false;
  double dropout_rate = 0.0;
  bool use_residual = false;
  bool use_ffn = false;
  bool use_pe = false;
};

struct BatchNormParams {
  Tensor gamma, beta, running_mean, running_var;
  bool defined() const { return gamma.defined(); }
};

struct FfnParams {
  Tensor w1, b1, w2, b2;
  BatchNormParams bn;
};

// Maps raw features into the hidden space: embedding tables summed across
// categorical columns, or an affine map for continuous features. Used for the
// input encoders and for the per-layer W_e^l edge transforms.
struct FeatureEncoder {
  std::vector<Tensor> emb;
  Tensor w, b;
  bool defined() const { return !emb.empty() || w.defined(); }
};

struct LayerParams {
  // GCN+
  Tensor w, b;
  // GIN+ (epsilon fixed at 0, not trainable)
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  double gin_eps = 0.0;
  // GatedGCN+
  Tensor w1, b1, w2, b2, w3, b3, w4, b4, w5, b5;
  FeatureEncoder edge;       // GCN+/GIN+ input-edge transform
  BatchNormParams bn;       // aggregation output
  BatchNormParams edge_bn;  // GatedGCN+ edge stream
  FfnParams ffn;
};

inline Tensor glorot(Shape shape, RngState& rng) {
  int64_t fan_in = shape.size() == 2 ? shape[0] : 1;
  int64_t fan_out = shape.size() == 2 ? shape[1] : shape[0];
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(shape);
  auto d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) d[i] = rng.uniform(-limit, limit);
  return t;
}

// Applies the per-layer edge transform to the raw edge features.
inline Tensor apply_feature_encoder(const FeatureEncoder& t, const Features& e) {
  if (e.kind == FeatKind::categorical) {
    Tensor acc;
    for (int64_t c = 0; c < e.cols; ++c) {
      std::vector<int64_t> idx(static_cast<size_t>(e.rows));
      for (int64_t r = 0; r < e.rows; ++r) idx[static_cast<size_t>(r)] = e.cats[r * e.cols + c];
      Tensor part = gather_rows(t.emb[static_cast<size_t>(c)], idx);
      acc = acc.defined() ? add(acc, part) : part;
    }
    return acc;
  }
  Tensor x = Tensor::from_data({e.rows, e.cols}, e.values);
  return add(matmul(x, t.w), t.b);
}

// Forward through a batch-norm stage using handle copies of the buffers.
inline Tensor apply_bn(const Tensor& x, const BatchNormParams& p, Mode mode) {
  return batchnorm(x, p.gamma, p.beta, p.running_mean, p.running_var, mode);
}

// Feed-forward block: BN(relu(h W1) W2 + h). with_norm=false drops the
// batch norm (used when the normalization technique is ablated).
inline Tensor ffn_forward(const Tensor& h, const FfnParams& p, Mode mode,
                          bool with_norm = true) {
  Tensor inner = relu(add(matmul(h, p.w1), p.b1));
  Tensor out = add(add(matmul(inner, p.w2), p.b2), h);
  if (with_norm) out = apply_bn(out, p.bn, mode);
  return out;
}

namespace detail {

// Shared post-aggregation pipeline: norm -> activation -> dropout ->
// residual -> FFN. GCN keeps its ReLU unconditionally (it is the sigma of the
// vanilla equation); GIN/GatedGCN have no outer activation in their vanilla
// forms, so theirs rides with the norm stage.
inline Tensor node_pipeline(Tensor x, const Tensor& h_in, bool relu_always,
                            const LayerParams& p, const TechniqueFlags& f,
                            Mode mode, RngState& rng) {
  if (f.use_norm) x = apply_bn(x, p.bn, mode);
  if (relu_always || f.use_norm) x = relu(x);
  if (f.dropout_rate > 0.0) x = dropout(x, f.dropout_rate, mode, rng);
  if (f.use_residual) x = add(x, h_in);
  if (f.use_ffn) x = ffn_forward(x, p.ffn, mode, f.use_norm);
  return x;
}

inline void require_edges(const TechniqueFlags& f, bool have,
                          const char* backbone) {
  if (f.use_edge_features && !have)
    throw ConfigError(std::string(backbone) +
                      ": use_edge_features is set but no edge features given");
}

}  // namespace detail

// GCN+ layer. Messages carry 1/sqrt(d_u d_v) * (h_u W + e_uv W_e); the self
// term enters with 1/d_v and no edge feature; bias is added after
// aggregation.
inline Tensor gcn_plus_forward(const Tensor& h, const Features* e,
                               const GraphBatch& batch, const Tensor& hat_deg,
                               const LayerParams& p, const TechniqueFlags& f,
                               Mode mode, RngState& rng) {
  detail::require_edges(f, e != nullptr && !e->empty(), "gcn_plus_forward");
  int64_t n = batch.num_nodes, m = batch.num_edges();
  Tensor hw = matmul(h, p.w);

  Tensor coef_e = Tensor::zeros({m, 1});
  Tensor coef_self = Tensor::zeros({n, 1});
  {
    auto deg = hat_deg.data();
    auto ce = coef_e.data();
    for (int64_t i = 0; i < m; ++i)
      ce[i] = 1.0 / std::sqrt(deg[batch.edge_src[i]] * deg[batch.edge_dst[i]]);
    auto cs = coef_self.data();
    for (int64_t v = 0; v < n; ++v) cs[v] = 1.0 / deg[v];
  }

  Tensor msg = gather_rows(hw, batch.edge_src);
  if (f.use_edge_features) msg = add(msg, apply_feature_encoder(p.edge, *e));
  msg = mul(msg, coef_e);
  Tensor agg = segment_sum(msg, batch.edge_dst, n);
  Tensor pre = add(add(agg, mul(hw, coef_self)), p.b);
  return detail::node_pipeline(pre, h, /*relu_always=*/true, p, f, mode, rng);
}

// GIN+ layer with GINE-style edge integration: messages are
// relu(h_u + e_uv W_e) when edge features are on, otherwise h_u.
inline Tensor gin_plus_forward(const Tensor& h, const Features* e,
                               const GraphBatch& batch, const LayerParams& p,
                               const TechniqueFlags& f, Mode mode,
                               RngState& rng) {
  detail::require_edges(f, e != nullptr && !e->empty(), "gin_plus_forward");
  int64_t n = batch.num_nodes;
  Tensor msg = gather_rows(h, batch.edge_src);
  if (f.use_edge_features)
    msg = relu(add(msg, apply_feature_encoder(p.edge, *e)));
  Tensor agg = segment_sum(msg, batch.edge_dst, n);
  Tensor self = p.gin_eps == 0.0 ? h : scale(h, 1.0 + p.gin_eps);
  Tensor x = add(agg, self);
  x = add(matmul(x, p.mlp_w1), p.mlp_b1);
  x = relu(x);
  x = add(matmul(x, p.mlp_w2), p.mlp_b2);
  return detail::node_pipeline(x, h, /*relu_always=*/false, p, f, mode, rng);
}

// GatedGCN+ layer. Gate logits g_uv = h_v W3 + h_u W4 (+ e_uv W5); the gated
// neighbor sum is normalized by the gate sum + 1e-6. With edge features on,
// the logits run through the edge pipeline and become the next layer's edge
// representations.
inline std::pair<Tensor, Tensor> gatedgcn_plus_forward(
    const Tensor& h, const Tensor& e, const GraphBatch& batch,
    const LayerParams& p, const TechniqueFlags& f, Mode mode, RngState& rng) {
  detail::require_edges(f, e.defined(), "gatedgcn_plus_forward");
  int64_t n = batch.num_nodes;
  Tensor hw1 = add(matmul(h, p.w1), p.b1);
  Tensor hw2 = add(matmul(h, p.w2), p.b2);
  Tensor hw3 = add(matmul(h, p.w3), p.b3);
  Tensor hw4 = add(matmul(h, p.w4), p.b4);

  Tensor gates = add(gather_rows(hw3, batch.edge_dst),
                     gather_rows(hw4, batch.edge_src));
  if (f.use_edge_features) gates = add(gates, add(matmul(e, p.w5), p.b5));
  Tensor eta = sigmoid(gates);

  Tensor num = segment_sum(mul(eta, gather_rows(hw2, batch.edge_src)),
                           batch.edge_dst, n);
  Tensor den = add_const(segment_sum(eta, batch.edge_dst, n), 1e-6);
  Tensor agg = add(hw1, div(num, den));
  Tensor node_out =
      detail::node_pipeline(agg, h, /*relu_always=*/false, p, f, mode, rng);

  Tensor edge_out;
  if (f.use_edge_features) {
    Tensor x = gates;
    if (f.use_norm) {
      x = apply_bn(x, p.edge_bn, mode);
      x = relu(x);
    }
    if (f.dropout_rate > 0.0) x = dropout(x, f.dropout_rate, mode, rng);
    if (f.use_residual) x = add(x, e);
    edge_out = x;
  }
  return {node_out, edge_out};
}

// ---------------------------------------------------------------------------
// parameter construction

enum class Backbone { gcn, gin, gatedgcn };

inline const char* backbone_name(Backbone b) {
  switch (b) {
    case Backbone::gcn: return "gcn";
    case Backbone::gin: return "gin";
    case Backbone::gatedgcn: return "gatedgcn";
  }
  return "?";
}

inline Backbone backbone_from_name(const std::string& s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gin") return Backbone::gin;
  if (s == "gatedgcn") return Backbone::gatedgcn;
  throw ConfigError("unknown backbone '" + s + "'");
}

namespace detail {

inline BatchNormParams make_bn(ParameterStore& store, const std::string& prefix,
                               int64_t d) {
  BatchNormParams bn;
  bn.gamma = store.add_parameter(prefix + ".gamma", Tensor::full({d}, 1.0));
  bn.beta = store.add_parameter(prefix + ".beta", Tensor::zeros({d}));
  bn.running_mean = store.add_buffer(prefix + ".running_mean", Tensor::zeros({d}));
  bn.running_var = store.add_buffer(prefix + ".running_var", Tensor::full({d}, 1.0));
  return bn;
}

inline FeatureEncoder make_feature_encoder(ParameterStore& store,
                                         const std::string& prefix,
                                         const FeatureSchema& schema,
                                         int64_t hidden, RngState& rng) {
  FeatureEncoder t;
  if (schema.kind == FeatKind::categorical) {
    for (size_t c = 0; c < schema.vocab.size(); ++c)
      t.emb.push_back(store.add_parameter(
          prefix + ".emb" + std::to_string(c),
          glorot({schema.vocab[c], hidden}, rng)));
  } else if (schema.kind == FeatKind::continuous) {
    t.w = store.add_parameter(prefix + ".w", glorot({schema.dim, hidden}, rng));
    t.b = store.add_parameter(prefix + ".b", Tensor::zeros({hidden}));
  } else {
    throw ConfigError(prefix + ": encoder requested for absent features");
  }
  return t;
}

}  // namespace detail

// Allocates one layer's parameters in the store under `prefix`. Only tensors
// the flag set actually uses are created.
inline LayerParams make_layer_params(ParameterStore& store,
                                     const std::string& prefix, Backbone bb,
                                     int64_t hidden,
                                     const FeatureSchema& edge_schema,
                                     const TechniqueFlags& f, RngState& rng) {
  LayerParams p;
  auto mat = [&](const std::string& name) {
    return store.add_parameter(prefix + "." + name, glorot({hidden, hidden}, rng));
  };
  auto bias = [&](const std::string& name) {
    return store.add_parameter(prefix + "." + name, Tensor::zeros({hidden}));
  };
  switch (bb) {
    case Backbone::gcn:
      p.w = mat("w");
      p.b = bias("b");
      if (f.use_edge_features)
        p.edge = detail::make_feature_encoder(store, prefix + ".edge",
                                             edge_schema, hidden, rng);
      break;
    case Backbone::gin:
      if (f.use_edge_features)
        p.edge = detail::make_feature_encoder(store, prefix + ".edge",
                                             edge_schema, hidden, rng);
      p.mlp_w1 = mat("mlp_w1");
      p.mlp_b1 = bias("mlp_b1");
      p.mlp_w2 = mat("mlp_w2");
      p.mlp_b2 = bias("mlp_b2");
      break;
    case Backbone::gatedgcn:
      p.w1 = mat("w1");
      p.b1 = bias("b1");
      p.w2 = mat("w2");
      p.b2 = bias("b2");
      p.w3 = mat("w3");
      p.b3 = bias("b3");
      p.w4 = mat("w4");
      p.b4 = bias("b4");
      if (f.use_edge_features) {
        p.w5 = mat("w5");
        p.b5 = bias("b5");
      }
      break;
  }
  if (f.use_norm) {
    p.bn = detail::make_bn(store, prefix + ".bn", hidden);
    if (bb == Backbone::gatedgcn && f.use_edge_features)
      p.edge_bn = detail::make_bn(store, prefix + ".edge_bn", hidden);
  }
  if (f.use_ffn) {
    p.ffn.w1 = store.add_parameter(prefix + ".ffn.w1",
                                   glorot({hidden, 2 * hidden}, rng));
    p.ffn.b1 = store.add_parameter(prefix + ".ffn.b1", Tensor::zeros({2 * hidden}));
    p.ffn.w2 = store.add_parameter(prefix + ".ffn.w2",
                                   glorot({2 * hidden, hidden}, rng));
    p.ffn.b2 = store.add_parameter(prefix + ".ffn.b2", Tensor::zeros({hidden}));
    if (f.use_norm) p.ffn.bn = detail::make_bn(store, prefix + ".ffn.bn", hidden);
  }
  return p;
}

}  // namespace gnnplus

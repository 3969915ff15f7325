#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately written with plain per-element loops and no calls into the
// library kernels it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "gnnplus/graph.hpp"
#include "gnnplus/layers.hpp"
#include "gnnplus/random.hpp"
#include "gnnplus/tensor.hpp"

namespace oracle {

using gnnplus::Graph;
using gnnplus::GraphBatch;
using gnnplus::RngState;
using gnnplus::Tensor;

// ---------------------------------------------------------------------------
// dense linear algebra

inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, int64_t m,
                                        int64_t k, int64_t n) {
  std::vector<double> c(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

// row-vector times matrix, y += x W + b
inline std::vector<double> affine(const std::vector<double>& x, const Tensor& w,
                                  const Tensor& b) {
  int64_t in = w.dim(0), out = w.dim(1);
  std::vector<double> y(static_cast<size_t>(out), 0.0);
  for (int64_t j = 0; j < out; ++j) {
    double acc = b.defined() ? b.data()[j] : 0.0;
    for (int64_t i = 0; i < in; ++i) acc += x[static_cast<size_t>(i)] * w.data()[i * out + j];
    y[static_cast<size_t>(j)] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// finite differences

// central finite difference of f with respect to every entry of t
inline std::vector<double> finite_diff(const std::function<double()>& f, Tensor t,
                                       double h = 1e-5) {
  std::vector<double> g(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double saved = t.data()[i];
    t.data()[i] = saved + h;
    double up = f();
    t.data()[i] = saved - h;
    double down = f();
    t.data()[i] = saved;
    g[static_cast<size_t>(i)] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// ---------------------------------------------------------------------------
// RWSE oracle: explicit dense matrix powers of D^-1 A

inline std::vector<double> dense_rwse(const Graph& g, int steps) {
  int64_t n = g.num_nodes;
  std::vector<double> p(static_cast<size_t>(n * n), 0.0);
  std::vector<double> outdeg(static_cast<size_t>(n), 0.0);
  for (int64_t e = 0; e < g.num_edges(); ++e)
    outdeg[static_cast<size_t>(g.edge_src[e])] += 1.0;
  for (int64_t e = 0; e < g.num_edges(); ++e)
    p[static_cast<size_t>(g.edge_src[e] * n + g.edge_dst[e])] +=
        1.0 / outdeg[static_cast<size_t>(g.edge_src[e])];
  std::vector<double> power(static_cast<size_t>(n * n), 0.0);
  for (int64_t v = 0; v < n; ++v) power[static_cast<size_t>(v * n + v)] = 1.0;
  std::vector<double> out(static_cast<size_t>(n * steps), 0.0);
  for (int k = 0; k < steps; ++k) {
    power = naive_matmul(p, power, n, n, n);
    for (int64_t v = 0; v < n; ++v)
      out[static_cast<size_t>(v * steps + k)] = power[static_cast<size_t>(v * n + v)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// vanilla per-node layer oracles (flags off)

// GCN: out_v = relu(b + sum_{u in N(v) and v} 1/sqrt(dhat_u dhat_v) (h_u W))
inline std::vector<double> vanilla_gcn(const GraphBatch& batch,
                                       const std::vector<double>& h, int64_t d,
                                       const Tensor& w, const Tensor& b) {
  int64_t n = batch.num_nodes;
  std::vector<double> dhat(static_cast<size_t>(n), 1.0);
  for (int64_t v : batch.edge_dst) dhat[static_cast<size_t>(v)] += 1.0;
  int64_t out_d = w.dim(1);
  std::vector<double> out(static_cast<size_t>(n * out_d), 0.0);
  for (int64_t v = 0; v < n; ++v) {
    std::vector<double> acc(static_cast<size_t>(out_d), 0.0);
    for (int64_t e = 0; e < batch.num_edges(); ++e) {
      if (batch.edge_dst[e] != v) continue;
      int64_t u = batch.edge_src[e];
      double coef = 1.0 / std::sqrt(dhat[static_cast<size_t>(u)] * dhat[static_cast<size_t>(v)]);
      std::vector<double> hu(h.begin() + u * d, h.begin() + (u + 1) * d);
      std::vector<double> hw = affine(hu, w, Tensor());
      for (int64_t j = 0; j < out_d; ++j) acc[static_cast<size_t>(j)] += coef * hw[static_cast<size_t>(j)];
    }
    std::vector<double> hv(h.begin() + v * d, h.begin() + (v + 1) * d);
    std::vector<double> hw = affine(hv, w, Tensor());
    for (int64_t j = 0; j < out_d; ++j)
      acc[static_cast<size_t>(j)] += hw[static_cast<size_t>(j)] / dhat[static_cast<size_t>(v)];
    for (int64_t j = 0; j < out_d; ++j) {
      double z = acc[static_cast<size_t>(j)] + b.data()[j];
      out[static_cast<size_t>(v * out_d + j)] = z > 0.0 ? z : 0.0;
    }
  }
  return out;
}

// GIN: out_v = MLP((1+eps) h_v + sum_{u in N(v)} h_u), MLP = relu(x W1 + b1) W2 + b2
inline std::vector<double> vanilla_gin(const GraphBatch& batch,
                                       const std::vector<double>& h, int64_t d,
                                       double eps, const Tensor& w1, const Tensor& b1,
                                       const Tensor& w2, const Tensor& b2) {
  int64_t n = batch.num_nodes;
  std::vector<double> out(static_cast<size_t>(n * w2.dim(1)), 0.0);
  for (int64_t v = 0; v < n; ++v) {
    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    for (int64_t j = 0; j < d; ++j)
      acc[static_cast<size_t>(j)] = (1.0 + eps) * h[static_cast<size_t>(v * d + j)];
    for (int64_t e = 0; e < batch.num_edges(); ++e) {
      if (batch.edge_dst[e] != v) continue;
      int64_t u = batch.edge_src[e];
      for (int64_t j = 0; j < d; ++j) acc[static_cast<size_t>(j)] += h[static_cast<size_t>(u * d + j)];
    }
    std::vector<double> inner = affine(acc, w1, b1);
    for (double& x : inner) x = x > 0.0 ? x : 0.0;
    std::vector<double> res = affine(inner, w2, b2);
    for (int64_t j = 0; j < w2.dim(1); ++j) out[static_cast<size_t>(v * w2.dim(1) + j)] = res[static_cast<size_t>(j)];
  }
  return out;
}

// GatedGCN: out_v = h_v W1 + (sum_u eta ⊙ (h_u W2)) / (sum_u eta + 1e-6),
// eta = sigmoid(h_v W3 + h_u W4); all affine maps carry their biases.
inline std::vector<double> vanilla_gatedgcn(const GraphBatch& batch,
                                            const std::vector<double>& h, int64_t d,
                                            const gnnplus::LayerParams& p) {
  int64_t n = batch.num_nodes;
  int64_t od = p.w1.dim(1);
  std::vector<double> out(static_cast<size_t>(n * od), 0.0);
  for (int64_t v = 0; v < n; ++v) {
    std::vector<double> hv(h.begin() + v * d, h.begin() + (v + 1) * d);
    std::vector<double> self = affine(hv, p.w1, p.b1);
    std::vector<double> gate_v = affine(hv, p.w3, p.b3);
    std::vector<double> num(static_cast<size_t>(od), 0.0);
    std::vector<double> den(static_cast<size_t>(od), 1e-6);
    for (int64_t e = 0; e < batch.num_edges(); ++e) {
      if (batch.edge_dst[e] != v) continue;
      int64_t u = batch.edge_src[e];
      std::vector<double> hu(h.begin() + u * d, h.begin() + (u + 1) * d);
      std::vector<double> gate_u = affine(hu, p.w4, p.b4);
      std::vector<double> hw2 = affine(hu, p.w2, p.b2);
      for (int64_t j = 0; j < od; ++j) {
        double eta = 1.0 / (1.0 + std::exp(-(gate_v[static_cast<size_t>(j)] + gate_u[static_cast<size_t>(j)])));
        num[static_cast<size_t>(j)] += eta * hw2[static_cast<size_t>(j)];
        den[static_cast<size_t>(j)] += eta;
      }
    }
    for (int64_t j = 0; j < od; ++j)
      out[static_cast<size_t>(v * od + j)] =
          self[static_cast<size_t>(j)] + num[static_cast<size_t>(j)] / den[static_cast<size_t>(j)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// metric oracles

// AUROC by exhaustive pair counting (ties worth one half)
inline double pairwise_auroc(const std::vector<double>& scores,
                             const std::vector<int>& positive) {
  double wins = 0.0;
  int64_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    ++n_pos;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  for (int p : positive) n_neg += 1 - p;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// AP by walking the distinct score thresholds from high to low
inline double threshold_ap(const std::vector<double>& scores,
                           const std::vector<int>& positive) {
  std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
  double ap = 0.0;
  int64_t n_pos = 0;
  for (int p : positive) n_pos += p;
  for (double t : thresholds) {
    int64_t tp = 0, k = 0, at_t = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++k;
        tp += positive[i];
      }
      if (scores[i] == t) at_t += positive[i];
    }
    ap += static_cast<double>(at_t) * (static_cast<double>(tp) / static_cast<double>(k));
  }
  return ap / static_cast<double>(n_pos);
}

// macro-F1 from an explicit confusion matrix
inline double confusion_macro_f1(const std::vector<int64_t>& pred,
                                 const std::vector<int64_t>& truth,
                                 int64_t classes) {
  std::vector<int64_t> cm(static_cast<size_t>(classes * classes), 0);
  for (size_t i = 0; i < pred.size(); ++i) ++cm[static_cast<size_t>(truth[i] * classes + pred[i])];
  double total = 0.0;
  for (int64_t c = 0; c < classes; ++c) {
    int64_t tp = cm[static_cast<size_t>(c * classes + c)];
    int64_t pred_c = 0, truth_c = 0;
    for (int64_t k = 0; k < classes; ++k) {
      pred_c += cm[static_cast<size_t>(k * classes + c)];
      truth_c += cm[static_cast<size_t>(c * classes + k)];
    }
    double prec = pred_c > 0 ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    double rec = truth_c > 0 ? static_cast<double>(tp) / static_cast<double>(truth_c) : 0.0;
    total += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return total / static_cast<double>(classes);
}

// ---------------------------------------------------------------------------
// reference Adam (no weight decay)

struct ReferenceAdam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  int64_t t = 0;

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    for (size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      double mhat = m[i] / (1.0 - std::pow(beta1, static_cast<double>(t)));
      double vhat = v[i] / (1.0 - std::pow(beta2, static_cast<double>(t)));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

// ---------------------------------------------------------------------------
// graph fixtures

// triangle count by neighbor-set intersection (different route than the
// generator's adjacency-matrix loop)
inline int64_t triangles_by_intersection(const Graph& g) {
  std::vector<std::set<int64_t>> nbr(static_cast<size_t>(g.num_nodes));
  for (int64_t e = 0; e < g.num_edges(); ++e)
    nbr[static_cast<size_t>(g.edge_src[e])].insert(g.edge_dst[e]);
  int64_t count = 0;
  for (int64_t u = 0; u < g.num_nodes; ++u)
    for (int64_t v : nbr[static_cast<size_t>(u)]) {
      if (v <= u) continue;
      for (int64_t w : nbr[static_cast<size_t>(v)])
        if (w > v && nbr[static_cast<size_t>(u)].count(w)) ++count;
    }
  return count;
}

inline Graph random_graph(RngState& rng, int64_t min_nodes, int64_t max_nodes,
                          double p, bool self_loops = false) {
  Graph g;
  g.num_nodes = min_nodes + rng.uniform_int(max_nodes - min_nodes + 1);
  for (int64_t u = 0; u < g.num_nodes; ++u) {
    for (int64_t v = u + 1; v < g.num_nodes; ++v)
      if (rng.bernoulli(p)) g.add_undirected_edge(u, v);
    if (self_loops && rng.bernoulli(p)) g.add_edge(u, u);
  }
  return g;
}

inline Tensor random_tensor(RngState& rng, gnnplus::Shape shape, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace oracle

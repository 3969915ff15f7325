#pragma once

#include <chrono>
#include <cstring>
#include <limits>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/model.hpp"
#include "gnnplus/rwse.hpp"
#include "gnnplus/synthetic.hpp"

namespace gnnplus {

struct GradCheckOptions {
  uint64_t seed = 7;
  int num_layers = 3;
  int64_t hidden = 8;
  int64_t max_nodes = 12;
  int pe_steps = 3;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  int64_t entries_per_tensor = 8;  // sampled per parameter tensor
  int threads = 1;
};

struct GradCheckRow {
  Backbone backbone = Backbone::gcn;
  TechniqueFlags flags;
  double worst_rel_err = 0.0;
  std::string worst_param;
  bool ok = true;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double worst = 0.0;
  bool ok = true;
  double seconds = 0.0;
};

inline std::string flags_str(const TechniqueFlags& f) {
  std::string s;
  s += f.use_edge_features ? 'E' : '-';
  s += f.use_norm ? 'N' : '-';
  s += f.dropout_rate > 0.0 ? 'D' : '-';
  s += f.use_residual ? 'R' : '-';
  s += f.use_ffn ? 'F' : '-';
  s += f.use_pe ? 'P' : '-';
  return s;
}

namespace detail {

// Random graph fixture with categorical node/edge features and a graph-level
// regression target; the checker's loss is sum(pred^2), so labels are unused.
inline GraphBatch gradcheck_batch(uint64_t seed, int64_t max_nodes, int pe_steps) {
  RngState rng(seed);
  Graph g;
  g.num_nodes = 4 + rng.uniform_int(max_nodes - 4 + 1);
  for (int64_t u = 0; u < g.num_nodes; ++u)
    for (int64_t v = u + 1; v < g.num_nodes; ++v)
      if (rng.bernoulli(0.45)) g.add_undirected_edge(u, v);
  g.node_feat.kind = FeatKind::categorical;
  g.node_feat.rows = g.num_nodes;
  g.node_feat.cols = 1;
  for (int64_t v = 0; v < g.num_nodes; ++v)
    g.node_feat.cats.push_back(rng.uniform_int(3));
  g.edge_feat.kind = FeatKind::categorical;
  g.edge_feat.rows = g.num_edges();
  g.edge_feat.cols = 1;
  for (int64_t i = 0; i < g.num_edges(); ++i)
    g.edge_feat.cats.push_back(rng.uniform_int(3));
  g.rwse = compute_rwse(g, pe_steps);
  g.rwse_steps = pe_steps;
  g.label.values = {0.0, 0.0};
  return batch_graphs({&g});
}

inline DatasetInfo gradcheck_info() {
  DatasetInfo info;
  info.task = Task::graph_regression;
  info.node_feat.kind = FeatKind::categorical;
  info.node_feat.vocab = {3};
  info.edge_feat.kind = FeatKind::categorical;
  info.edge_feat.vocab = {3};
  info.out_dim = 2;
  return info;
}

}  // namespace detail

// Checks one backbone/flag combination: analytic dL/dtheta against central
// finite differences on a quadratic readout loss. Dropout masks are pinned by
// reseeding the forward RNG identically for every evaluation.
inline GradCheckRow gradcheck_case(Backbone bb, const TechniqueFlags& flags,
                                   const GradCheckOptions& opt) {
  ModelConfig cfg;
  cfg.backbone = bb;
  cfg.num_layers = opt.num_layers;
  cfg.hidden_dim = opt.hidden;
  cfg.flags = flags;
  cfg.pe_steps = opt.pe_steps;
  cfg.readout = Readout::mean;
  cfg.seed = mix_seed(opt.seed, static_cast<uint64_t>(bb) * 64 + 1);
  GnnModel model(cfg, detail::gradcheck_info());
  // Zero-initialized biases put ReLU pre-activations exactly on the kink
  // (structurally zero rows stay zero), where the loss is not differentiable
  // and central differences cannot match any subgradient. Jitter every
  // parameter to a generic point before checking.
  {
    RngState jitter(mix_seed(opt.seed, 0x11e4));
    model.params().for_each_parameter(
        [&](const std::string&, Tensor& p, Tensor&, Tensor&) {
          for (double& v : p.data()) v += jitter.uniform(-0.05, 0.05);
        });
  }
  GraphBatch batch = detail::gradcheck_batch(mix_seed(opt.seed, 0xba7c), opt.max_nodes,
                                             opt.pe_steps);
  uint64_t forward_seed = mix_seed(opt.seed, 0xf0f0);

  auto forward_loss = [&]() {
    RngState rng(forward_seed);
    Prediction pred = model.forward(batch, Mode::train, rng);
    return reduce_sum(mul(pred.values, pred.values)).value();
  };

  // analytic gradients
  {
    RngState rng(forward_seed);
    Tape tape;
    Prediction pred = model.forward(batch, Mode::train, rng);
    Tensor loss = reduce_sum(mul(pred.values, pred.values));
    tape.backward(loss);
  }

  GradCheckRow row;
  row.backbone = bb;
  row.flags = flags;
  model.params().for_each_parameter([&](const std::string& name, Tensor& p,
                                        Tensor&, Tensor&) {
    if (!p.has_grad()) {
      // a parameter the forward pass never touched is a wiring bug
      row.worst_rel_err = std::numeric_limits<double>::infinity();
      row.worst_param = name + " (no gradient)";
      return;
    }
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    RngState pick(mix_seed(opt.seed, std::hash<std::string>{}(name)));
    int64_t n = p.numel();
    int64_t samples = std::min<int64_t>(n, opt.entries_per_tensor);
    for (int64_t s = 0; s < samples; ++s) {
      int64_t i = samples == n ? s : pick.uniform_int(n);
      double saved = p.data()[i];
      auto fd_at = [&](double h) {
        p.data()[i] = saved + h;
        double up = forward_loss();
        p.data()[i] = saved - h;
        double down = forward_loss();
        p.data()[i] = saved;
        return (up - down) / (2.0 * h);
      };
      double a = analytic[static_cast<size_t>(i)];
      auto rel_of = [&](double fd) {
        return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      };
      double rel = rel_of(fd_at(opt.fd_step));
      // A perturbation that straddles a ReLU kink corrupts the central
      // difference even when the analytic gradient is exact. Shrinking the
      // step separates the two cases: a genuine backward bug stays wrong,
      // a kink straddle converges to the analytic value.
      if (rel > opt.tolerance)
        for (double shrink : {0.1, 0.01}) {
          rel = std::min(rel, rel_of(fd_at(opt.fd_step * shrink)));
          if (rel <= opt.tolerance) break;
        }
      if (rel > row.worst_rel_err) {
        row.worst_rel_err = rel;
        row.worst_param = name;
      }
    }
  });
  model.params().clear_grads();
  row.ok = row.worst_rel_err < opt.tolerance;
  return row;
}

// All 3 backbones x 2^6 flag combinations.
inline GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
  std::vector<std::pair<Backbone, TechniqueFlags>> cases;
  for (Backbone bb : {Backbone::gcn, Backbone::gin, Backbone::gatedgcn})
    for (int bits = 0; bits < 64; ++bits) {
      TechniqueFlags f;
      f.use_edge_features = bits & 1;
      f.use_norm = bits & 2;
      f.dropout_rate = (bits & 4) ? 0.1 : 0.0;
      f.use_residual = bits & 8;
      f.use_ffn = bits & 16;
      f.use_pe = bits & 32;
      cases.emplace_back(bb, f);
    }
  GradCheckReport report;
  report.rows.resize(cases.size());
  auto t0 = std::chrono::steady_clock::now();
  parallel_for(static_cast<int64_t>(cases.size()), opt.threads,
               [&](int64_t lo, int64_t hi) {
                 for (int64_t i = lo; i < hi; ++i)
                   report.rows[static_cast<size_t>(i)] = gradcheck_case(
                       cases[static_cast<size_t>(i)].first,
                       cases[static_cast<size_t>(i)].second, opt);
               });
  for (const GradCheckRow& r : report.rows) {
    report.worst = std::max(report.worst, r.worst_rel_err);
    report.ok = report.ok && r.ok;
  }
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline std::string gradcheck_report_text(const GradCheckReport& report) {
  std::ostringstream os;
  os << "backbone flags  worst_rel_err  worst_param\n";
  for (const GradCheckRow& r : report.rows) {
    std::ostringstream err;
    err.precision(3);
    err << std::scientific << r.worst_rel_err;
    os << (r.ok ? "  " : "! ") << backbone_name(r.backbone) << (std::strlen(backbone_name(r.backbone)) < 4 ? "     " : " ")
       << flags_str(r.flags) << "  " << err.str() << "  " << r.worst_param
       << (r.ok ? "" : "  FAIL") << "\n";
  }
  return os.str();
}

}  // namespace gnnplus

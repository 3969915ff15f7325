#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/dataset_io.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/metrics.hpp"
#include "gnnplus/model.hpp"
#include "gnnplus/optimizer.hpp"
#include "gnnplus/rwse.hpp"

namespace gnnplus {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 100;
  int warmup_epochs = 5;
  double weight_decay = 0.0;
  int64_t batch_size = 32;
  uint64_t seed = 1;
  std::string eval_metric = "loss";
  bool select_max = false;   // max/min on the validation metric
  double grad_clip = 0.0;    // 0 disables clipping
  int threads = 1;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (c.warmup_epochs < 0 || c.warmup_epochs > c.epochs)
    throw ConfigError("train: warmup_epochs must be in [0, epochs]");
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (c.lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (c.grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
  static const char* known[] = {"loss",     "mae",
                                "accuracy", "f1_macro",
                                "average_precision", "auroc"};
  bool ok = false;
  for (const char* k : known) ok = ok || c.eval_metric == k;
  if (!ok) throw ConfigError("train: unknown eval_metric '" + c.eval_metric + "'");
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val = 0.0;
  double best_test = 0.0;
};

namespace detail {

inline std::vector<const Graph*> gather_split(const Dataset& ds,
                                              const std::vector<int64_t>& idx,
                                              int64_t begin, int64_t end) {
  std::vector<const Graph*> out;
  out.reserve(static_cast<size_t>(end - begin));
  for (int64_t i = begin; i < end; ++i)
    out.push_back(&ds.graphs[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
  return out;
}

inline int64_t label_rows(const GraphBatch& b, Task task) {
  return task == Task::node_classification ? b.num_nodes : b.num_graphs;
}

}  // namespace detail

// Evaluates one split in eval mode. Batches are independent, so they can be
// spread across threads; predictions land in preallocated row slots, so the
// result is identical for any thread count.
inline Metrics evaluate(GnnModel& model, const Dataset& ds,
                        const std::vector<int64_t>& idx, int64_t batch_size,
                        int threads = 1) {
  if (idx.empty()) throw DatasetError("evaluate: empty split");
  Task task = model.info().task;
  int64_t out_dim = model.info().out_dim;
  int64_t n = static_cast<int64_t>(idx.size());
  int64_t num_batches = (n + batch_size - 1) / batch_size;

  // row offset of each batch in the concatenated prediction matrix
  std::vector<int64_t> row_offset(static_cast<size_t>(num_batches) + 1, 0);
  for (int64_t b = 0; b < num_batches; ++b) {
    int64_t begin = b * batch_size, end = std::min(n, begin + batch_size);
    int64_t rows = 0;
    for (int64_t i = begin; i < end; ++i)
      rows += task == Task::node_classification
                  ? ds.graphs[static_cast<size_t>(idx[static_cast<size_t>(i)])].num_nodes
                  : 1;
    row_offset[static_cast<size_t>(b) + 1] = row_offset[static_cast<size_t>(b)] + rows;
  }
  int64_t total_rows = row_offset.back();
  Tensor preds = Tensor::zeros({total_rows, out_dim});
  Labels all_labels;
  std::vector<double> loss_sum(static_cast<size_t>(num_batches), 0.0);
  std::vector<int64_t> loss_rows(static_cast<size_t>(num_batches), 0);

  // labels concatenate on the main thread to keep their order fixed
  for (int64_t b = 0; b < num_batches; ++b) {
    int64_t begin = b * batch_size, end = std::min(n, begin + batch_size);
    for (int64_t i = begin; i < end; ++i) {
      const Graph& g = ds.graphs[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      all_labels.values.insert(all_labels.values.end(), g.label.values.begin(),
                               g.label.values.end());
      all_labels.classes.insert(all_labels.classes.end(),
                                g.label.classes.begin(), g.label.classes.end());
    }
  }

  parallel_for(num_batches, threads, [&](int64_t lo, int64_t hi) {
    RngState rng(0);  // eval mode draws nothing
    for (int64_t b = lo; b < hi; ++b) {
      int64_t begin = b * batch_size, end = std::min(n, begin + batch_size);
      GraphBatch batch = batch_graphs(detail::gather_split(ds, idx, begin, end));
      Prediction pred = model.forward(batch, Mode::eval, rng);
      Tensor loss = model.loss(pred, batch);
      int64_t rows = detail::label_rows(batch, task);
      loss_sum[static_cast<size_t>(b)] = loss.value() * static_cast<double>(rows);
      loss_rows[static_cast<size_t>(b)] = rows;
      auto src = pred.values.data();
      auto dst = preds.data();
      std::copy(src.begin(), src.end(),
                dst.begin() + row_offset[static_cast<size_t>(b)] * out_dim);
    }
  });

  Metrics m = compute_metrics(preds, all_labels, task, out_dim);
  double ls = 0.0;
  int64_t lr_count = 0;
  for (int64_t b = 0; b < num_batches; ++b) {
    ls += loss_sum[static_cast<size_t>(b)];
    lr_count += loss_rows[static_cast<size_t>(b)];
  }
  m.values["loss"] = ls / static_cast<double>(lr_count);
  return m;
}

inline Metrics evaluate_split(GnnModel& model, const Dataset& ds,
                              const std::string& split, int64_t batch_size,
                              int threads = 1) {
  return evaluate(model, ds, ds.split(split), batch_size, threads);
}

namespace detail {

inline void clip_gradients(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  store.for_each_parameter([&](const std::string&, const Tensor& p,
                               const Tensor&, const Tensor&) {
    for (double g : p.grad()) sq += g * g;
  });
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  double s = max_norm / norm;
  store.for_each_parameter([&](const std::string&, Tensor& p, Tensor&, Tensor&) {
    for (double& g : p.grad_mut()) g *= s;
  });
}

inline std::unordered_map<std::string, Tensor> snapshot_state(
    const ParameterStore& store) {
  std::unordered_map<std::string, Tensor> snap;
  store.for_each_parameter([&](const std::string& name, const Tensor& p,
                               const Tensor&, const Tensor&) {
    snap.emplace(name, p.clone());
  });
  store.for_each_buffer([&](const std::string& name, const Tensor& b) {
    snap.emplace(name, b.clone());
  });
  return snap;
}

}  // namespace detail

// The optimization protocol: seeded shuffled mini-batches, AdamW with the
// warmup+cosine schedule, validation-based selection. On return the model
// holds the best-validation state; the log keeps every epoch.
inline TrainResult train(GnnModel& model, Dataset& ds, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (ds.train_idx.empty()) throw DatasetError("train: empty split 'train'");
  if (ds.val_idx.empty()) throw DatasetError("train: empty split 'val'");
  if (ds.test_idx.empty()) throw DatasetError("train: empty split 'test'");
  if (model.config().flags.use_pe)
    ensure_rwse(ds, model.config().pe_steps, cfg.threads);

  TrainResult result;
  auto best_state = detail::snapshot_state(model.params());
  LrSchedule sched{cfg.lr, cfg.epochs, cfg.warmup_epochs};
  Task task = model.info().task;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(epoch, sched);
    std::vector<int64_t> order = ds.train_idx;
    RngState shuffle_rng(mix_seed(cfg.seed, 0x5f0e + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    RngState dropout_rng(mix_seed(cfg.seed, 0xd407 + static_cast<uint64_t>(epoch)));

    double loss_sum = 0.0;
    int64_t loss_rows = 0;
    int64_t n = static_cast<int64_t>(order.size());
    for (int64_t begin = 0; begin < n; begin += cfg.batch_size) {
      int64_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const Graph*> graphs;
      graphs.reserve(static_cast<size_t>(end - begin));
      for (int64_t i = begin; i < end; ++i)
        graphs.push_back(&ds.graphs[static_cast<size_t>(order[static_cast<size_t>(i)])]);
      GraphBatch batch = batch_graphs(graphs);
      Tape tape;
      Prediction pred = model.forward(batch, Mode::train, dropout_rng);
      Tensor loss = model.loss(pred, batch);
      tape.backward(loss);
      if (cfg.grad_clip > 0.0) detail::clip_gradients(model.params(), cfg.grad_clip);
      AdamWConfig opt;
      opt.lr = lr;
      opt.weight_decay = cfg.weight_decay;
      adamw_step(model.params(), opt);
      int64_t rows = detail::label_rows(batch, task);
      loss_sum += loss.value() * static_cast<double>(rows);
      loss_rows += rows;
    }

    Metrics val = evaluate(model, ds, ds.val_idx, cfg.batch_size, cfg.threads);
    Metrics test = evaluate(model, ds, ds.test_idx, cfg.batch_size, cfg.threads);
    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(loss_rows);
    row.val_metric = val.get(cfg.eval_metric);
    row.test_metric = test.get(cfg.eval_metric);
    result.log.push_back(row);

    bool better = result.best_epoch < 0 ||
                  (cfg.select_max ? row.val_metric > result.best_val
                                  : row.val_metric < result.best_val);
    if (better) {
      result.best_epoch = epoch;
      result.best_val = row.val_metric;
      result.best_test = row.test_metric;
      best_state = detail::snapshot_state(model.params());
    }
  }

  model.params().load_values(best_state);
  return result;
}

inline std::string log_to_csv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,val_metric,test_metric\n";
  for (const EpochLog& e : r.log)
    os << e.epoch << ',' << detail::fmt_double(e.lr) << ','
       << detail::fmt_double(e.train_loss) << ','
       << detail::fmt_double(e.val_metric) << ','
       << detail::fmt_double(e.test_metric) << '\n';
  return os.str();
}

}  // namespace gnnplus

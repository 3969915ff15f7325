#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

struct MetricError : Error {
  using Error::Error;
};

struct Metrics {
  std::map<std::string, double> values;

  double get(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
      throw MetricError("metric '" + name + "' was not computed");
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) > 0; }
};

namespace detail {

// AUROC as the Mann-Whitney statistic; ties contribute through midranks.
inline double auroc(const std::vector<double>& scores,
                    const std::vector<int>& positive) {
  int64_t n = static_cast<int64_t>(scores.size());
  int64_t n_pos = 0;
  for (int p : positive) n_pos += p;
  int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("auroc undefined: only one class present");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
  });
  double rank_sum_pos = 0.0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j < n && scores[static_cast<size_t>(order[static_cast<size_t>(j)])] ==
                        scores[static_cast<size_t>(order[static_cast<size_t>(i)])])
      ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (int64_t k = i; k < j; ++k)
      if (positive[static_cast<size_t>(order[static_cast<size_t>(k)])])
        rank_sum_pos += midrank;
    i = j;
  }
  double u = rank_sum_pos - static_cast<double>(n_pos) *
                                static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Non-interpolated average precision. Scores are grouped by value so the
// result does not depend on the input order; this reduces to the classic
// per-positive precision sum when scores are distinct.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& positive) {
  int64_t n = static_cast<int64_t>(scores.size());
  int64_t n_pos = 0;
  for (int p : positive) n_pos += p;
  if (n_pos == 0)
    throw MetricError("average precision undefined: no positives");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  double ap = 0.0;
  int64_t seen = 0, tp = 0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    int64_t group_pos = 0;
    while (j < n && scores[static_cast<size_t>(order[static_cast<size_t>(j)])] ==
                        scores[static_cast<size_t>(order[static_cast<size_t>(i)])]) {
      group_pos += positive[static_cast<size_t>(order[static_cast<size_t>(j)])];
      ++j;
    }
    seen += j - i;
    tp += group_pos;
    double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += precision * static_cast<double>(group_pos);
    i = j;
  }
  return ap / static_cast<double>(n_pos);
}

// Macro-F1 over all classes; a class absent from both predictions and truth
// contributes F1 = 0 and still enters the average.
inline double macro_f1(const std::vector<int64_t>& pred,
                       const std::vector<int64_t>& truth, int64_t classes) {
  std::vector<int64_t> tp(static_cast<size_t>(classes), 0);
  std::vector<int64_t> fp(static_cast<size_t>(classes), 0);
  std::vector<int64_t> fn(static_cast<size_t>(classes), 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) {
      ++tp[static_cast<size_t>(pred[i])];
    } else {
      ++fp[static_cast<size_t>(pred[i])];
      ++fn[static_cast<size_t>(truth[i])];
    }
  }
  double total = 0.0;
  for (int64_t c = 0; c < classes; ++c) {
    double p_den = static_cast<double>(tp[c] + fp[c]);
    double r_den = static_cast<double>(tp[c] + fn[c]);
    double prec = p_den > 0.0 ? static_cast<double>(tp[c]) / p_den : 0.0;
    double rec = r_den > 0.0 ? static_cast<double>(tp[c]) / r_den : 0.0;
    total += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return total / static_cast<double>(classes);
}

inline std::vector<int64_t> argmax_rows(const Tensor& t) {
  std::vector<int64_t> out(static_cast<size_t>(t.dim(0)));
  auto v = t.data();
  int64_t c = t.dim(1);
  for (int64_t r = 0; r < t.dim(0); ++r) {
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (v[r * c + j] > v[r * c + best]) best = j;
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

}  // namespace detail

// Task-dependent evaluation. Classification uses argmax (ties to the lowest
// class); binary classification additionally reports AUROC from the positive
// class probability; multilabel AP is averaged over labels that have at least
// one positive.
inline Metrics compute_metrics(const Tensor& preds, const Labels& labels,
                               Task task, int64_t out_dim) {
  Metrics m;
  switch (task) {
    case Task::graph_regression: {
      if (preds.numel() != static_cast<int64_t>(labels.values.size()))
        throw DimensionError("compute_metrics: prediction/label size mismatch");
      double acc = 0.0;
      auto pv = preds.data();
      for (int64_t i = 0; i < preds.numel(); ++i)
        acc += std::abs(pv[i] - labels.values[static_cast<size_t>(i)]);
      m.values["mae"] = acc / static_cast<double>(preds.numel());
      break;
    }
    case Task::graph_classification:
    case Task::node_classification: {
      if (preds.dim(0) != static_cast<int64_t>(labels.classes.size()))
        throw DimensionError("compute_metrics: prediction/label row mismatch");
      std::vector<int64_t> pred_cls = detail::argmax_rows(preds);
      int64_t correct = 0;
      for (size_t i = 0; i < pred_cls.size(); ++i)
        correct += pred_cls[i] == labels.classes[i];
      m.values["accuracy"] =
          static_cast<double>(correct) / static_cast<double>(pred_cls.size());
      m.values["f1_macro"] = detail::macro_f1(pred_cls, labels.classes, out_dim);
      if (out_dim == 2) {
        // positive-class probability; rank-equivalent to the logit margin
        std::vector<double> scores(pred_cls.size());
        std::vector<int> pos(pred_cls.size());
        auto pv = preds.data();
        for (size_t i = 0; i < pred_cls.size(); ++i) {
          double z = pv[static_cast<int64_t>(i) * 2 + 1] -
                     pv[static_cast<int64_t>(i) * 2];
          scores[i] = 1.0 / (1.0 + std::exp(-z));
          pos[i] = labels.classes[i] == 1;
        }
        m.values["auroc"] = detail::auroc(scores, pos);
      }
      break;
    }
    case Task::graph_multilabel: {
      int64_t rows = preds.dim(0);
      if (preds.numel() != static_cast<int64_t>(labels.values.size()))
        throw DimensionError("compute_metrics: prediction/label size mismatch");
      auto pv = preds.data();
      double ap_sum = 0.0;
      int64_t ap_labels = 0;
      for (int64_t l = 0; l < out_dim; ++l) {
        std::vector<double> scores(static_cast<size_t>(rows));
        std::vector<int> pos(static_cast<size_t>(rows));
        int64_t n_pos = 0;
        for (int64_t r = 0; r < rows; ++r) {
          scores[static_cast<size_t>(r)] = pv[r * out_dim + l];
          pos[static_cast<size_t>(r)] =
              labels.values[static_cast<size_t>(r * out_dim + l)] > 0.5;
          n_pos += pos[static_cast<size_t>(r)];
        }
        if (n_pos == 0) continue;
        ap_sum += detail::average_precision(scores, pos);
        ++ap_labels;
      }
      if (ap_labels == 0)
        throw MetricError("average precision undefined: no label has positives");
      m.values["average_precision"] = ap_sum / static_cast<double>(ap_labels);
      break;
    }
  }
  return m;
}

}  // namespace gnnplus

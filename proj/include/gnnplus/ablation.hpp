#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/config.hpp"
#include "gnnplus/training.hpp"

namespace gnnplus {

struct AblationRow {
  std::string name;
  bool active = true;     // false when the technique is already off in base
  double test_metric = 0.0;
  double val_metric = 0.0;
  int best_epoch = -1;
  double delta_abs = 0.0;  // ablated - base
  double delta_rel = 0.0;  // percent of |base|
};

struct AblationReport {
  std::vector<AblationRow> rows;  // base first, then the six ablations
  std::string metric_name;
};

namespace detail {

inline ModelConfig with_technique_off(const ModelConfig& base, int which) {
  ModelConfig cfg = base;
  switch (which) {
    case 0: cfg.flags.use_edge_features = false; break;
    case 1: cfg.flags.use_norm = false; break;
    case 2: cfg.flags.dropout_rate = 0.0; break;
    case 3: cfg.flags.use_residual = false; break;
    case 4: cfg.flags.use_ffn = false; break;
    case 5: cfg.flags.use_pe = false; break;
  }
  return cfg;
}

inline bool technique_active(const ModelConfig& cfg, int which) {
  switch (which) {
    case 0: return cfg.flags.use_edge_features;
    case 1: return cfg.flags.use_norm;
    case 2: return cfg.flags.dropout_rate > 0.0;
    case 3: return cfg.flags.use_residual;
    case 4: return cfg.flags.use_ffn;
    case 5: return cfg.flags.use_pe;
  }
  return false;
}

}  // namespace detail

// Base run plus six single-technique ablations, the desk-scale analogue of
// published-style ablation tables. Every run reuses the same seed and data;
// techniques the base config does not use are marked inactive and skipped.
template <typename RunFn>
AblationReport run_ablation_with(const RunSpec& spec, RunFn&& run_one) {
  static const char* names[6] = {"(-) Edge.", "(-) Norm", "(-) Dropout",
                                 "(-) RC",    "(-) FFN",  "(-) PE"};
  AblationReport report;
  report.metric_name = spec.train.eval_metric;

  AblationRow base;
  base.name = "base";
  TrainResult base_result = run_one(spec.model);
  base.test_metric = base_result.best_test;
  base.val_metric = base_result.best_val;
  base.best_epoch = base_result.best_epoch;
  report.rows.push_back(base);

  for (int t = 0; t < 6; ++t) {
    AblationRow row;
    row.name = names[t];
    row.active = detail::technique_active(spec.model, t);
    if (row.active) {
      TrainResult r = run_one(detail::with_technique_off(spec.model, t));
      row.test_metric = r.best_test;
      row.val_metric = r.best_val;
      row.best_epoch = r.best_epoch;
      row.delta_abs = row.test_metric - base.test_metric;
      row.delta_rel = base.test_metric != 0.0
                          ? 100.0 * row.delta_abs / std::abs(base.test_metric)
                          : 0.0;
    }
    report.rows.push_back(row);
  }
  return report;
}

inline AblationReport run_ablation(const RunSpec& spec, Dataset& ds) {
  return run_ablation_with(spec, [&](const ModelConfig& cfg) {
    GnnModel model(cfg, spec.data_info);
    return train(model, ds, spec.train);
  });
}

inline std::string ablation_to_csv(const AblationReport& r) {
  std::ostringstream os;
  os << "run,active,test_" << r.metric_name << ",val_" << r.metric_name
     << ",best_epoch,delta_abs,delta_rel_pct\n";
  for (const AblationRow& row : r.rows) {
    os << row.name << ',' << (row.active ? "yes" : "not active") << ',';
    if (row.active)
      os << detail::fmt_double(row.test_metric) << ','
         << detail::fmt_double(row.val_metric) << ',' << row.best_epoch << ','
         << detail::fmt_double(row.delta_abs) << ','
         << detail::fmt_double(row.delta_rel);
    else
      os << ",,,,";
    os << '\n';
  }
  return os.str();
}

inline std::string ablation_to_text(const AblationReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "run" << std::right << std::setw(12)
     << ("test_" + r.metric_name) << std::setw(12) << "delta" << std::setw(10)
     << "delta%" << "\n";
  for (const AblationRow& row : r.rows) {
    os << std::left << std::setw(14) << row.name << std::right;
    if (!row.active) {
      os << std::setw(12) << "not active" << std::setw(12) << "-"
         << std::setw(10) << "-" << "\n";
      continue;
    }
    os << std::setw(12) << std::fixed << std::setprecision(4) << row.test_metric;
    if (row.name == "base")
      os << std::setw(12) << "-" << std::setw(10) << "-";
    else
      os << std::setw(12) << std::showpos << row.delta_abs << std::noshowpos
         << std::setw(9) << row.delta_rel << "%";
    os << "\n";
  }
  return os.str();
}

}  // namespace gnnplus

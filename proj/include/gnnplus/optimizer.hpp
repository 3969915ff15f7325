#pragma once

#include <cmath>
#include <string>

#include "gnnplus/common.hpp"
#include "gnnplus/parameter_store.hpp"

namespace gnnplus {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One AdamW step over every parameter in the store. Weight decay is decoupled
// (applied straight to the parameter, not through the moments); gradients are
// cleared afterwards.
inline void adamw_step(ParameterStore& store, const AdamWConfig& cfg) {
  store.for_each_parameter([&](const std::string& name, Tensor& p, Tensor&,
                               Tensor&) {
    if (!p.has_grad())
      throw StateError("adamw_step: parameter '" + name + "' has no gradient");
  });
  int64_t t = store.bump_step();
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  store.for_each_parameter([&](const std::string&, Tensor& p, Tensor& m,
                               Tensor& v) {
    auto pv = p.data();
    auto gv = p.grad_mut();
    auto mv = m.data();
    auto vv = v.data();
    int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      double g = gv[i];
      pv[i] -= cfg.lr * cfg.weight_decay * pv[i];
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g;
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = mv[i] / bc1;
      double vhat = vv[i] / bc2;
      pv[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.clear_grad();
  });
}

struct LrSchedule {
  double base_lr = 1e-3;
  int epochs = 1;
  int warmup_epochs = 0;
};

// Linear ramp to base_lr over the warmup epochs, then cosine decay that would
// reach zero one epoch past the end. lr_at(warmup_epochs) == base_lr exactly.
inline double lr_at(int epoch, const LrSchedule& s) {
  if (epoch < 0 || epoch >= s.epochs)
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) +
                      " outside [0," + std::to_string(s.epochs) + ")");
  if (epoch < s.warmup_epochs)
    return s.base_lr * static_cast<double>(epoch + 1) /
           static_cast<double>(s.warmup_epochs);
  double progress = static_cast<double>(epoch - s.warmup_epochs) /
                    static_cast<double>(s.epochs - s.warmup_epochs);
  return s.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace gnnplus

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

// Named trainable tensors plus their AdamW moment slots, and a separate list
// of non-trainable buffers (batch-norm running statistics). Iteration order is
// insertion order so optimizer sweeps and checkpoints are deterministic.
class ParameterStore {
 public:
  Tensor add_parameter(const std::string& name, Tensor init) {
    if (param_index_.count(name) || buffer_index_.count(name))
      throw StateError("ParameterStore: duplicate name '" + name + "'");
    init.set_requires_grad(true);
    Slot slot;
    slot.name = name;
    slot.param = init;
    slot.m = Tensor::zeros(init.shape());
    slot.v = Tensor::zeros(init.shape());
    param_index_[name] = params_.size();
    params_.push_back(std::move(slot));
    return init;
  }

  Tensor add_buffer(const std::string& name, Tensor init) {
    if (param_index_.count(name) || buffer_index_.count(name))
      throw StateError("ParameterStore: duplicate name '" + name + "'");
    init.set_requires_grad(false);
    buffer_index_[name] = buffers_.size();
    buffers_.push_back({name, init});
    return init;
  }

  bool has(const std::string& name) const {
    return param_index_.count(name) || buffer_index_.count(name);
  }

  Tensor get(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it != param_index_.end()) return params_[it->second].param;
    auto bt = buffer_index_.find(name);
    if (bt != buffer_index_.end()) return buffers_[bt->second].tensor;
    throw StateError("ParameterStore: unknown name '" + name + "'");
  }

  size_t num_parameters() const { return params_.size(); }
  size_t num_buffers() const { return buffers_.size(); }

  int64_t num_trainable_scalars() const {
    int64_t n = 0;
    for (const Slot& s : params_) n += s.param.numel();
    return n;
  }

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t t) { step_count_ = t; }
  int64_t bump_step() { return ++step_count_; }

  void clear_grads() {
    for (Slot& s : params_) s.param.clear_grad();
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    for (Slot& s : params_) fn(s.name, s.param, s.m, s.v);
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    for (const Slot& s : params_) fn(s.name, s.param, s.m, s.v);
  }

  template <typename Fn>
  void for_each_buffer(Fn&& fn) const {
    for (const Buffer& b : buffers_) fn(b.name, b.tensor);
  }

  // Overwrites every parameter and buffer with same-named, same-shaped values
  // (checkpoint restore).
  void load_values(const std::unordered_map<std::string, Tensor>& values) {
    size_t used = 0;
    for (Slot& s : params_) used += load_one(values, s.name, s.param);
    for (Buffer& b : buffers_) used += load_one(values, b.name, b.tensor);
    if (used != values.size())
      throw StateError("ParameterStore: checkpoint holds " +
                       std::to_string(values.size()) + " tensors, store needs " +
                       std::to_string(used));
  }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    Tensor m;
    Tensor v;
  };
  struct Buffer {
    std::string name;
    Tensor tensor;
  };

  static size_t load_one(const std::unordered_map<std::string, Tensor>& values,
                         const std::string& name, Tensor& dst) {
    auto it = values.find(name);
    if (it == values.end())
      throw StateError("ParameterStore: checkpoint missing tensor '" + name +
                       "'");
    if (it->second.shape() != dst.shape())
      throw StateError("ParameterStore: shape mismatch for '" + name + "': " +
                       shape_str(it->second.shape()) + " vs " +
                       shape_str(dst.shape()));
    std::copy(it->second.data().begin(), it->second.data().end(),
              dst.data().begin());
    return 1;
  }

  std::vector<Slot> params_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, size_t> param_index_;
  std::unordered_map<std::string, size_t> buffer_index_;
  int64_t step_count_ = 0;
};

}  // namespace gnnplus

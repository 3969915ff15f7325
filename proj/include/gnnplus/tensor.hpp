#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/random.hpp"

namespace gnnplus {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until materialized
  int64_t node_id = -1;      // assigned when the tensor touches a tape
};

}  // namespace detail

// Dense fp64 tensor with shared storage. Copies are shallow; kernels always
// allocate fresh outputs, so aliasing only happens where it is intended
// (identity fast paths, parameter handles).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    return filled(std::move(shape), v, requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return filled(Shape{}, v, requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw DimensionError("from_data: shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[i]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  // spans into shared storage; never taken from a temporary handle
  std::span<double> data() & { return impl_->data; }
  std::span<const double> data() const& { return impl_->data; }
  std::span<double> data() && = delete;
  std::span<const double> data() const&& = delete;

  double value() const {
    if (numel() != 1)
      throw DimensionError("value(): tensor " + shape_str(shape()) +
                           " is not a scalar");
    return impl_->data[0];
  }

  double at(std::initializer_list<int64_t> idx) const {
    int64_t flat = 0;
    int i = 0;
    for (int64_t v : idx) flat = flat * impl_->shape[i++] + v;
    return impl_->data[flat];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad_mut() { return impl_->grad; }

  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor t = from_data(impl_->shape, impl_->data, impl_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

 private:
  static Tensor filled(Shape shape, double v, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    int64_t n = shape_numel(shape);
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(n), v);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

inline std::vector<double>& ensure_grad(const Tensor& t) {
  TensorImpl* im = t.impl();
  if (im->grad.empty()) im->grad.assign(im->data.size(), 0.0);
  return im->grad;
}

}  // namespace detail

// Reverse-mode tape. One tape per thread at a time; constructing it makes it
// the active recorder, destroying it (or letting it go out of scope between
// optimizer steps) drops the whole recorded graph.
class Tape {
 public:
  Tape() {
    if (active_ != nullptr)
      throw StateError("Tape: a tape is already active on this thread");
    active_ = this;
  }
  ~Tape() { active_ = nullptr; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  size_t size() const { return ops_.size(); }

  void record(const char* name, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward_fn) {
    Op op;
    op.name = name;
    for (const Tensor& in : inputs) op.input_ids.push_back(assign_id(in));
    op.inputs = std::move(inputs);
    op.output = output;
    op.output_id = assign_id(output);
    op.backward_fn = std::move(backward_fn);
    ops_.push_back(std::move(op));
  }

  // Reverse traversal in recorded order. Every requires-grad tensor that was
  // recorded as an op input gets its gradient materialized (zero for tensors
  // off the path to the loss — e.g. a final layer's unused edge stream);
  // closures of ops whose output never received a gradient are skipped.
  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw DimensionError("backward: loss must be scalar, got " +
                           shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    for (const Op& op : ops_)
      for (const Tensor& in : op.inputs)
        if (in.requires_grad()) detail::ensure_grad(in);
    detail::ensure_grad(loss)[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output.has_grad()) it->backward_fn();
    }
  }

  // Negative-control hook for the gradient checker: while a guard names an
  // op, that op's backward rule is deliberately scaled wrong.
  class FaultGuard {
   public:
    explicit FaultGuard(const char* op_name) { fault_op_ = op_name; }
    ~FaultGuard() { fault_op_ = nullptr; }
  };
  static bool fault_on(const char* name) {
    return fault_op_ != nullptr && std::strcmp(fault_op_, name) == 0;
  }

 private:
  struct Op {
    const char* name;
    std::vector<Tensor> inputs;
    std::vector<int64_t> input_ids;
    int64_t output_id = -1;
    Tensor output;
    std::function<void()> backward_fn;
  };

  int64_t assign_id(const Tensor& t) {
    if (t.impl()->node_id < 0) t.impl()->node_id = next_id_++;
    return t.impl()->node_id;
  }

  std::vector<Op> ops_;
  int64_t next_id_ = 0;
  static thread_local Tape* active_;
  static thread_local const char* fault_op_;
};

inline thread_local Tape* Tape::active_ = nullptr;
inline thread_local const char* Tape::fault_op_ = nullptr;

inline void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (t == nullptr) throw StateError("backward: no active tape on this thread");
  t->backward(loss);
}

namespace detail {

inline bool out_requires(std::initializer_list<Tensor> inputs) {
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

inline void maybe_record(const char* name, std::initializer_list<Tensor> inputs,
                         Tensor& out, std::function<void()> backward_fn) {
  if (!out_requires(inputs)) return;
  out.set_requires_grad(true);
  if (Tape* tape = Tape::active())
    tape->record(name, std::vector<Tensor>(inputs), out, std::move(backward_fn));
}

// Broadcast support for binary elementwise ops: identical shapes, scalar
// either side, a trailing-suffix operand ([d] against [N,d]), or a
// trailing-dim-1 operand ([E,1] against [E,d]).
enum class Bcast { none, scalar, suffix, last1 };

struct BcastPlan {
  Bcast a = Bcast::none;
  Bcast b = Bcast::none;
  Shape out;
  int64_t suffix_len = 0;  // numel of the suffix operand
  int64_t last = 0;        // last dim of the full-shape operand
};

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() >= big.size()) return false;
  size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

inline bool is_last1(const Shape& small, const Shape& big) {
  if (small.size() != big.size() || small.empty()) return false;
  for (size_t i = 0; i + 1 < small.size(); ++i)
    if (small[i] != big[i]) return false;
  return small.back() == 1 && big.back() != 1;
}

inline BcastPlan bcast_plan(const char* op, const Tensor& a, const Tensor& b) {
  BcastPlan p;
  if (a.shape() == b.shape()) {
    p.out = a.shape();
    return p;
  }
  if (b.numel() == 1) {
    p.b = Bcast::scalar;
    p.out = a.shape();
    return p;
  }
  if (a.numel() == 1) {
    p.a = Bcast::scalar;
    p.out = b.shape();
    return p;
  }
  if (is_suffix(b.shape(), a.shape())) {
    p.b = Bcast::suffix;
    p.out = a.shape();
    p.suffix_len = b.numel();
    return p;
  }
  if (is_suffix(a.shape(), b.shape())) {
    p.a = Bcast::suffix;
    p.out = b.shape();
    p.suffix_len = a.numel();
    return p;
  }
  if (is_last1(b.shape(), a.shape())) {
    p.b = Bcast::last1;
    p.out = a.shape();
    p.last = a.shape().back();
    return p;
  }
  if (is_last1(a.shape(), b.shape())) {
    p.a = Bcast::last1;
    p.out = b.shape();
    p.last = b.shape().back();
    return p;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

inline int64_t bcast_index(Bcast kind, int64_t i, const BcastPlan& p) {
  switch (kind) {
    case Bcast::none:
      return i;
    case Bcast::scalar:
      return 0;
    case Bcast::suffix:
      return i % p.suffix_len;
    case Bcast::last1:
      return i / p.last;
  }
  return i;
}

template <typename Fwd, typename DfA, typename DfB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 DfA dfa, DfB dfb) {
  BcastPlan p = bcast_plan(name, a, b);
  Tensor out = Tensor::zeros(p.out);
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i)
    ov[i] = fwd(av[bcast_index(p.a, i, p)], bv[bcast_index(p.b, i, p)]);
  maybe_record(name, {a, b}, out, [=]() mutable {
    auto g = out.grad();
    int64_t count = out.numel();
    if (a.requires_grad()) {
      auto& ga = ensure_grad(a);
      for (int64_t i = 0; i < count; ++i) {
        int64_t ia = bcast_index(p.a, i, p);
        ga[ia] += g[i] * dfa(a.data()[ia], b.data()[bcast_index(p.b, i, p)],
                             out.data()[i]);
      }
    }
    if (b.requires_grad()) {
      auto& gb = ensure_grad(b);
      for (int64_t i = 0; i < count; ++i) {
        int64_t ib = bcast_index(p.b, i, p);
        gb[ib] += g[i] * dfb(a.data()[bcast_index(p.a, i, p)], b.data()[ib],
                             out.data()[i]);
      }
    }
  });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

inline Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = c * xv[i];
  detail::maybe_record("scale", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    for (int64_t i = 0; i < out.numel(); ++i) gx[i] += c * g[i];
  });
  return out;
}

inline Tensor add_const(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] + c;
  detail::maybe_record("add_const", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    for (int64_t i = 0; i < out.numel(); ++i) gx[i] += g[i];
  });
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  detail::maybe_record("relu", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    auto xd = x.data();
    for (int64_t i = 0; i < out.numel(); ++i)
      if (xd[i] > 0.0) gx[i] += g[i];
  });
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  detail::maybe_record("sigmoid", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    auto od = out.data();
    for (int64_t i = 0; i < out.numel(); ++i)
      gx[i] += g[i] * od[i] * (1.0 - od[i]);
  });
  return out;
}

// Concatenation along the last axis; all parts must agree on the leading dims.
inline Tensor concat_last_dim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last_dim: no operands");
  const Shape& first = parts[0].shape();
  if (first.empty())
    throw DimensionError("concat_last_dim: operands must have rank >= 1");
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < first.size(); ++i) rows *= first[i];
  int64_t total_last = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != first.size() ||
        !std::equal(s.begin(), s.end() - 1, first.begin()))
      throw DimensionError("concat_last_dim: leading dims differ, " +
                           shape_str(first) + " vs " + shape_str(s));
    total_last += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total_last;
  Tensor out = Tensor::zeros(out_shape);
  auto ov = out.data();
  int64_t col = 0;
  for (const Tensor& t : parts) {
    int64_t w = t.shape().back();
    auto tv = t.data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(tv.data() + r * w, w, ov.data() + r * total_last + col);
    col += w;
  }
  bool needs = false;
  for (const Tensor& t : parts) needs = needs || t.requires_grad();
  if (needs) {
    out.set_requires_grad(true);
    if (Tape* tape = Tape::active()) {
      std::vector<Tensor> saved = parts;
      Tensor out_saved = out;
      tape->record("concat_last_dim", parts, out, [=]() {
        auto g = out_saved.grad();
        int64_t c = 0;
        for (const Tensor& t : saved) {
          int64_t w = t.shape().back();
          if (t.requires_grad()) {
            auto& gt = detail::ensure_grad(t);
            for (int64_t r = 0; r < rows; ++r)
              for (int64_t j = 0; j < w; ++j)
                gt[r * w + j] += g[r * total_last + c + j];
          }
          c += w;
        }
      });
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  {
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t l = 0; l < k; ++l) {
        double ail = av[i * k + l];
        if (ail == 0.0) continue;
        const double* brow = bv.data() + l * n;
        double* orow = ov.data() + i * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
      }
  }
  detail::maybe_record("matmul", {a, b}, out, [=]() mutable {
    auto g = out.grad();
    double fault = Tape::fault_on("matmul") ? 1.01 : 1.0;
    if (a.requires_grad()) {
      // dA = dC * B^T
      auto& ga = detail::ensure_grad(a);
      auto bv = b.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) {
          double acc = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + l * n;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + l] += fault * acc;
        }
    }
    if (b.requires_grad()) {
      // dB = A^T * dC
      auto& gb = detail::ensure_grad(b);
      auto av = a.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) {
          double ail = av[i * k + l];
          if (ail == 0.0) continue;
          const double* grow = g.data() + i * n;
          double* gbrow = gb.data() + l * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += ail * grow[j];
        }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// gather / segment ops

inline Tensor gather_rows(const Tensor& src, const std::vector<int64_t>& index) {
  if (src.rank() != 2)
    throw DimensionError("gather_rows: src must be rank 2, got " +
                         shape_str(src.shape()));
  int64_t rows = src.dim(0), d = src.dim(1);
  for (int64_t ix : index)
    if (ix < 0 || ix >= rows)
      throw IndexError("gather_rows: index " + std::to_string(ix) +
                       " out of range [0," + std::to_string(rows) + ")");
  int64_t e = static_cast<int64_t>(index.size());
  Tensor out = Tensor::zeros({e, d});
  auto sv = src.data();
  auto ov = out.data();
  for (int64_t i = 0; i < e; ++i)
    std::copy_n(sv.data() + index[i] * d, d, ov.data() + i * d);
  detail::maybe_record("gather_rows", {src}, out, [=]() mutable {
    auto g = out.grad();
    auto& gs = detail::ensure_grad(src);
    // duplicate indices accumulate additively
    for (int64_t i = 0; i < e; ++i) {
      double* dst_row = gs.data() + index[i] * d;
      const double* grow = g.data() + i * d;
      for (int64_t j = 0; j < d; ++j) dst_row[j] += grow[j];
    }
  });
  return out;
}

namespace detail {

inline void check_segments(const char* op, const Tensor& values,
                           const std::vector<int64_t>& ids,
                           int64_t num_segments) {
  if (values.rank() != 2)
    throw DimensionError(std::string(op) + ": values must be rank 2, got " +
                         shape_str(values.shape()));
  if (values.dim(0) != static_cast<int64_t>(ids.size()))
    throw DimensionError(std::string(op) + ": " + std::to_string(values.dim(0)) +
                         " rows vs " + std::to_string(ids.size()) +
                         " segment ids");
  for (int64_t s : ids)
    if (s < 0 || s >= num_segments)
      throw IndexError(std::string(op) + ": segment id " + std::to_string(s) +
                       " out of range [0," + std::to_string(num_segments) + ")");
}

}  // namespace detail

inline Tensor segment_sum(const Tensor& values, const std::vector<int64_t>& ids,
                          int64_t num_segments) {
  detail::check_segments("segment_sum", values, ids, num_segments);
  int64_t e = values.dim(0), d = values.dim(1);
  Tensor out = Tensor::zeros({num_segments, d});
  auto vv = values.data();
  auto ov = out.data();
  for (int64_t i = 0; i < e; ++i) {
    double* orow = ov.data() + ids[i] * d;
    const double* vrow = vv.data() + i * d;
    for (int64_t j = 0; j < d; ++j) orow[j] += vrow[j];
  }
  detail::maybe_record("segment_sum", {values}, out, [=]() mutable {
    auto g = out.grad();
    auto& gv = detail::ensure_grad(values);
    for (int64_t i = 0; i < e; ++i) {
      const double* grow = g.data() + ids[i] * d;
      double* vrow = gv.data() + i * d;
      for (int64_t j = 0; j < d; ++j) vrow[j] += grow[j];
    }
  });
  return out;
}

inline Tensor segment_mean(const Tensor& values, const std::vector<int64_t>& ids,
                           int64_t num_segments) {
  detail::check_segments("segment_mean", values, ids, num_segments);
  int64_t e = values.dim(0), d = values.dim(1);
  std::vector<double> inv_count(static_cast<size_t>(num_segments), 0.0);
  for (int64_t s : ids) inv_count[static_cast<size_t>(s)] += 1.0;
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
  Tensor out = Tensor::zeros({num_segments, d});
  auto vv = values.data();
  auto ov = out.data();
  for (int64_t i = 0; i < e; ++i) {
    double w = inv_count[static_cast<size_t>(ids[i])];
    double* orow = ov.data() + ids[i] * d;
    const double* vrow = vv.data() + i * d;
    for (int64_t j = 0; j < d; ++j) orow[j] += w * vrow[j];
  }
  detail::maybe_record("segment_mean", {values}, out, [=]() mutable {
    auto g = out.grad();
    auto& gv = detail::ensure_grad(values);
    for (int64_t i = 0; i < e; ++i) {
      double w = inv_count[static_cast<size_t>(ids[i])];
      const double* grow = g.data() + ids[i] * d;
      double* vrow = gv.data() + i * d;
      for (int64_t j = 0; j < d; ++j) vrow[j] += w * grow[j];
    }
  });
  return out;
}

// Per-segment columnwise max. Empty segments produce zero rows; gradient is
// routed to the argmax row, ties to the lowest row index.
inline Tensor segment_max(const Tensor& values, const std::vector<int64_t>& ids,
                          int64_t num_segments) {
  detail::check_segments("segment_max", values, ids, num_segments);
  int64_t e = values.dim(0), d = values.dim(1);
  Tensor out = Tensor::zeros({num_segments, d});
  std::vector<int64_t> arg(static_cast<size_t>(num_segments * d), -1);
  auto vv = values.data();
  auto ov = out.data();
  for (int64_t i = 0; i < e; ++i) {
    int64_t s = ids[i];
    const double* vrow = vv.data() + i * d;
    for (int64_t j = 0; j < d; ++j) {
      int64_t slot = s * d + j;
      if (arg[slot] < 0 || vrow[j] > ov[slot]) {
        ov[slot] = vrow[j];
        arg[slot] = i;
      }
    }
  }
  detail::maybe_record("segment_max", {values}, out, [=]() mutable {
    auto g = out.grad();
    auto& gv = detail::ensure_grad(values);
    for (int64_t slot = 0; slot < num_segments * d; ++slot)
      if (arg[slot] >= 0) gv[arg[slot] * d + slot % d] += g[slot];
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions

enum class ReduceKind { sum, mean, max };

// axis = nullopt reduces all elements to a scalar; otherwise the axis is
// removed from the shape. Max ties break toward the lowest index.
inline Tensor reduce(ReduceKind kind, const Tensor& x, std::optional<int> axis) {
  int64_t outer = 1, rn = 1, inner = 1;
  Shape out_shape;
  if (axis.has_value()) {
    int a = *axis;
    if (a < 0 || a >= x.rank())
      throw DimensionError("reduce: axis " + std::to_string(a) +
                           " invalid for shape " + shape_str(x.shape()));
    for (int i = 0; i < a; ++i) outer *= x.dim(i);
    rn = x.dim(a);
    for (int i = a + 1; i < x.rank(); ++i) inner *= x.dim(i);
    for (int i = 0; i < x.rank(); ++i)
      if (i != a) out_shape.push_back(x.dim(i));
  } else {
    rn = x.numel();
  }
  if (rn == 0 && kind == ReduceKind::max)
    throw DimensionError("reduce: max over empty extent");
  Tensor out = Tensor::zeros(out_shape);
  auto xv = x.data();
  auto ov = out.data();
  std::vector<int64_t> arg;
  if (kind == ReduceKind::max) arg.assign(static_cast<size_t>(outer * inner), -1);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      int64_t oi = o * inner + in;
      if (kind == ReduceKind::max) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_k = 0;
        for (int64_t k = 0; k < rn; ++k) {
          double v = xv[(o * rn + k) * inner + in];
          if (v > best) {
            best = v;
            best_k = k;
          }
        }
        ov[oi] = best;
        arg[oi] = best_k;
      } else {
        double acc = 0.0;
        for (int64_t k = 0; k < rn; ++k) acc += xv[(o * rn + k) * inner + in];
        ov[oi] = kind == ReduceKind::mean ? acc / static_cast<double>(rn) : acc;
      }
    }
  detail::maybe_record("reduce", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        int64_t oi = o * inner + in;
        switch (kind) {
          case ReduceKind::sum:
            for (int64_t k = 0; k < rn; ++k)
              gx[(o * rn + k) * inner + in] += g[oi];
            break;
          case ReduceKind::mean:
            for (int64_t k = 0; k < rn; ++k)
              gx[(o * rn + k) * inner + in] += g[oi] / static_cast<double>(rn);
            break;
          case ReduceKind::max:
            gx[(o * rn + arg[oi]) * inner + in] += g[oi];
            break;
        }
      }
  });
  return out;
}

inline Tensor reduce_sum(const Tensor& x, std::optional<int> axis = std::nullopt) {
  return reduce(ReduceKind::sum, x, axis);
}
inline Tensor reduce_mean(const Tensor& x, std::optional<int> axis = std::nullopt) {
  return reduce(ReduceKind::mean, x, axis);
}
inline Tensor reduce_max(const Tensor& x, std::optional<int> axis = std::nullopt) {
  return reduce(ReduceKind::max, x, axis);
}

// ---------------------------------------------------------------------------
// batch normalization

// Train mode normalizes with biased (1/N) batch statistics and folds them
// into the running buffers with exponential momentum; eval mode reads the
// buffers only. running_mean/running_var must be non-differentiable buffers.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor running_mean, Tensor running_var, Mode mode,
                        double momentum = 0.1, double epsilon = 1e-5) {
  if (x.rank() != 2)
    throw DimensionError("batchnorm: x must be rank 2, got " +
                         shape_str(x.shape()));
  int64_t n = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d || running_mean.numel() != d ||
      running_var.numel() != d)
    throw DimensionError("batchnorm: parameter size mismatch for width " +
                         std::to_string(d));
  if (mode == Mode::train && n == 0)
    throw StateError("batchnorm: empty batch in train mode");

  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  std::vector<double> inv_std(static_cast<size_t>(d), 0.0);
  auto xv = x.data();
  if (mode == Mode::train) {
    std::vector<double> var(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) mean[j] += xv[i * d + j];
    for (int64_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) {
        double c = xv[i * d + j] - mean[j];
        var[j] += c * c;
      }
    for (int64_t j = 0; j < d; ++j) var[j] /= static_cast<double>(n);
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (int64_t j = 0; j < d; ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * var[j];
      inv_std[j] = 1.0 / std::sqrt(var[j] + epsilon);
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (int64_t j = 0; j < d; ++j) {
      mean[j] = rm[j];
      inv_std[j] = 1.0 / std::sqrt(rv[j] + epsilon);
    }
  }

  Tensor xhat = Tensor::zeros({n, d});
  Tensor out = Tensor::zeros({n, d});
  {
    auto hv = xhat.data();
    auto ov = out.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) {
        double h = (xv[i * d + j] - mean[j]) * inv_std[j];
        hv[i * d + j] = h;
        ov[i * d + j] = gv[j] * h + bv[j];
      }
  }
  bool train_stats = mode == Mode::train;
  detail::maybe_record("batchnorm", {x, gamma, beta}, out, [=]() mutable {
    auto g = out.grad();
    auto hv = xhat.data();
    auto gv = gamma.data();
    if (gamma.requires_grad()) {
      auto& gg = detail::ensure_grad(gamma);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * hv[i * d + j];
    }
    if (beta.requires_grad()) {
      auto& gb = detail::ensure_grad(beta);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
    if (x.requires_grad()) {
      auto& gx = detail::ensure_grad(x);
      if (train_stats) {
        // full gradient through batch mean and variance
        for (int64_t j = 0; j < d; ++j) {
          double sum_dy = 0.0, sum_dy_h = 0.0;
          for (int64_t i = 0; i < n; ++i) {
            sum_dy += g[i * d + j];
            sum_dy_h += g[i * d + j] * hv[i * d + j];
          }
          double inv_n = 1.0 / static_cast<double>(n);
          for (int64_t i = 0; i < n; ++i) {
            double dy = g[i * d + j];
            gx[i * d + j] += gv[j] * inv_std[j] *
                             (dy - inv_n * sum_dy - hv[i * d + j] * inv_n * sum_dy_h);
          }
        }
      } else {
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j)
            gx[i * d + j] += g[i * d + j] * gv[j] * inv_std[j];
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// dropout

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so eval
// is the identity. The mask is saved and reused exactly in backward.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, RngState& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate " + std::to_string(rate) +
                      " outside [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  int64_t n = x.numel();
  std::vector<double> mask(static_cast<size_t>(n));
  double keep_scale = 1.0 / (1.0 - rate);
  for (int64_t i = 0; i < n; ++i)
    mask[static_cast<size_t>(i)] = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] * mask[static_cast<size_t>(i)];
  detail::maybe_record("dropout", {x}, out, [=]() mutable {
    auto g = out.grad();
    auto& gx = detail::ensure_grad(x);
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * mask[static_cast<size_t>(i)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// losses (fused kernels with exact backward rules)

inline Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mae_loss: shapes differ, " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
  int64_t n = pred.numel();
  if (n == 0) throw DimensionError("mae_loss: empty input");
  double acc = 0.0;
  auto pv = pred.data();
  auto tv = target.data();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(pv[i] - tv[i]);
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  detail::maybe_record("mae_loss", {pred, target}, out, [=]() mutable {
    double g = out.grad()[0] / static_cast<double>(n);
    if (pred.requires_grad()) {
      auto& gp = detail::ensure_grad(pred);
      for (int64_t i = 0; i < n; ++i) {
        double diff = pred.data()[i] - target.data()[i];
        gp[i] += g * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
      }
    }
  });
  return out;
}

// Mean softmax cross-entropy over rows; labels are class indices.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<int64_t>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("softmax_cross_entropy: logits must be rank 2, got " +
                         shape_str(logits.shape()));
  int64_t rows = logits.dim(0), classes = logits.dim(1);
  if (rows != static_cast<int64_t>(labels.size()))
    throw DimensionError("softmax_cross_entropy: " + std::to_string(rows) +
                         " rows vs " + std::to_string(labels.size()) + " labels");
  for (int64_t y : labels)
    if (y < 0 || y >= classes)
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(classes) + ")");
  auto zv = logits.data();
  double total = 0.0;
  std::vector<double> softmax(static_cast<size_t>(rows * classes));
  for (int64_t r = 0; r < rows; ++r) {
    const double* z = zv.data() + r * classes;
    double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (int64_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    double lse = std::log(denom) + zmax;
    total += lse - z[labels[static_cast<size_t>(r)]];
    for (int64_t c = 0; c < classes; ++c)
      softmax[static_cast<size_t>(r * classes + c)] = std::exp(z[c] - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(rows));
  detail::maybe_record("softmax_cross_entropy", {logits}, out, [=]() mutable {
    double g = out.grad()[0] / static_cast<double>(rows);
    auto& gz = detail::ensure_grad(logits);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < classes; ++c) {
        double p = softmax[static_cast<size_t>(r * classes + c)];
        double y = labels[static_cast<size_t>(r)] == c ? 1.0 : 0.0;
        gz[r * classes + c] += g * (p - y);
      }
  });
  return out;
}

// Per-entry sigmoid binary cross-entropy, averaged over all entries.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw DimensionError("bce_with_logits: shapes differ, " +
                         shape_str(logits.shape()) + " vs " +
                         shape_str(targets.shape()));
  int64_t n = logits.numel();
  if (n == 0) throw DimensionError("bce_with_logits: empty input");
  auto zv = logits.data();
  auto tv = targets.data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double z = zv[i], t = tv[i];
    total += std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  detail::maybe_record("bce_with_logits", {logits, targets}, out, [=]() mutable {
    double g = out.grad()[0] / static_cast<double>(n);
    if (logits.requires_grad()) {
      auto& gz = detail::ensure_grad(logits);
      for (int64_t i = 0; i < n; ++i) {
        double s = 1.0 / (1.0 + std::exp(-logits.data()[i]));
        gz[i] += g * (s - targets.data()[i]);
      }
    }
  });
  return out;
}

}  // namespace gnnplus

#pragma once

// Dense 64-bit tensors with a reverse-mode gradient tape.
//
// Storage is row-major and flat. Every op treats the last extent as the
// feature axis ("cols") and folds the leading extents into "rows". Ops record
// themselves on the thread's active GradTape (see TapeScope) whenever at
// least one input requires a gradient; with no active tape they are plain
// numeric functions.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scct/errors.hpp"

namespace scct {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::optional<std::size_t> tape_id;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             shape_str(shape));
      }
    }
    if (shape.empty()) shape = {1};
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(const Shape& shape) { return full(shape, 0.0); }

  static Tensor full(const Shape& shape, double value) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), value));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t cols() const { return impl_->shape.back(); }
  std::size_t rows() const { return numel() / cols(); }

  std::span<const double> data() const { return impl_->data; }

  // Mutable view for leaves (parameters, inputs). Values of a tensor that is
  // already recorded on a tape must not change underneath the tape.
  std::span<double> data_mut() {
    if (impl_->tape_id) {
      throw ContractError("cannot mutate a tensor recorded on a tape");
    }
    return impl_->data;
  }

  double item() const {
    if (numel() != 1) {
      throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    }
    return impl_->data[0];
  }

  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return impl_->data.at(r * cols() + c);
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() {
    if (!impl_->grad.empty()) {
      std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }
  }
  void clear_grad() { impl_->grad.clear(); }

  std::optional<std::size_t> tape_id() const { return impl_->tape_id; }

  // Deep copy, detached from any tape, requires_grad=false.
  Tensor detach() const { return Tensor(impl_->shape, impl_->data); }

  const detail::ImplPtr& impl() const { return impl_; }

 private:
  detail::ImplPtr impl_;
};

// Append-only record of differentiable ops. Node ids increase in execution
// order, so inputs always carry smaller ids than the nodes consuming them and
// a reverse sweep is a valid topological order.
class GradTape {
 public:
  using BackwardFn = std::function<void(detail::TensorImpl& out)>;

  struct Node {
    std::string_view op;
    std::vector<detail::ImplPtr> inputs;
    detail::ImplPtr output;
    BackwardFn backward;
  };

  std::size_t record(std::string_view op, std::vector<detail::ImplPtr> inputs,
                     const detail::ImplPtr& output, BackwardFn fn) {
    const std::size_t id = nodes_.size();
    output->requires_grad = true;
    output->tape_id = id;
    nodes_.push_back({op, std::move(inputs), output, std::move(fn)});
    return id;
  }

  void backward(const Tensor& root) {
    if (!root.defined() || root.numel() != 1) {
      throw ContractError("backward root must be a scalar tensor");
    }
    const auto& id = root.impl()->tape_id;
    if (!id || *id >= nodes_.size() || nodes_[*id].output != root.impl()) {
      throw ContractError("backward root was not produced on this tape");
    }
    root.impl()->grad_buffer()[0] += 1.0;
    for (std::size_t i = *id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.output->grad.empty()) continue;  // unreachable from root
      node.backward(*node.output);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  void clear() {
    for (auto& n : nodes_) n.output->tape_id.reset();
    nodes_.clear();
  }

  ~GradTape() { clear(); }

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

 private:
  std::vector<Node> nodes_;
};

inline GradTape*& active_tape() {
  thread_local GradTape* tape = nullptr;
  return tape;
}

// Makes `tape` the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape) : previous_(active_tape()) {
    active_tape() = &tape;
  }
  ~TapeScope() { active_tape() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

// Temporarily disables recording (inference paths).
class NoGradScope {
 public:
  NoGradScope() : previous_(active_tape()) { active_tape() = nullptr; }
  ~NoGradScope() { active_tape() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* previous_;
};

inline void backward(GradTape& tape, const Tensor& root) {
  tape.backward(root);
}

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline void record(std::string_view op,
                   std::initializer_list<const Tensor*> inputs,
                   const Tensor& out, GradTape::BackwardFn fn) {
  std::vector<ImplPtr> ins;
  ins.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t && t->defined()) ins.push_back(t->impl());
  }
  active_tape()->record(op, std::move(ins), out.impl(), std::move(fn));
}

// Gradient sink for an input; nullptr when the input takes no gradient.
inline std::vector<double>* sink(const ImplPtr& p) {
  return (p && p->requires_grad) ? &p->grad_buffer() : nullptr;
}

inline Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace detail

// Numerically stable log(sum(exp(xs))). Empty input yields -inf; -inf entries
// act as the additive identity.
inline double logsumexp(std::span<const double> xs) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (xs.empty()) return kNegInf;
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logsumexp(std::initializer_list<double> xs) {
  return logsumexp(std::span<const double>(xs.begin(), xs.size()));
}

// Central-difference gradient of a scalar function. `f` receives a perturbed
// copy of `x`, so `x` itself is left untouched.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad step must be > 0");
  Tensor probe = x.detach();
  std::vector<double> g(x.numel());
  auto values = probe.data_mut();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f(probe);
    values[i] = orig - h;
    const double down = f(probe);
    values[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(g));
}

// Same oracle for a tensor that `f` reads through shared state (e.g. a model
// parameter): the tensor is perturbed in place and restored afterwards.
inline std::vector<double> finite_diff_grad_inplace(
    const std::function<double()>& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad step must be > 0");
  std::vector<double> g(x.numel());
  auto values = x.data_mut();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f();
    values[i] = orig - h;
    const double down = f();
    values[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace scct

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tpr {

/// Error type for all contract violations (shape mismatches, bad arguments).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
[[noreturn]] void fail(const std::string& msg);
std::string format_shape(const std::vector<int>& shape);
}  // namespace detail

#define TPR_CHECK(cond, msg)            \
  do {                                  \
    if (!(cond)) ::tpr::detail::fail(msg); \
  } while (0)

using Shape = std::vector<int>;
using Array = Eigen::ArrayXd;

inline long numel_of(const Shape& s) {
  long n = 1;
  for (int e : s) n *= e;
  return n;
}

/// Global tape switch. Ops record backward closures only while enabled.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct TensorImpl;
using BackwardFn = std::function<void(const TensorImpl&)>;

/// One node of the recorded op graph. Nodes are created in program order,
/// so descending id is a valid reverse topological order.
struct TensorImpl {
  Shape shape;
  Array value;
  Array grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;

  long numel() const { return value.size(); }
  void accumulate(const Array& g) {
    if (grad.size() == 0) grad = Array::Zero(value.size());
    grad += g;
  }
};

/// Value-semantics handle over a graph node. Cheap to copy; the underlying
/// buffer is immutable once produced by an op (leaves may be edited between
/// forward passes, e.g. by the optimizer).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor from_array(Shape shape, Array data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  long numel() const { return impl_->numel(); }

  const Array& data() const { return impl_->value; }
  Array& mutable_data() { return impl_->value; }
  double item() const {
    TPR_CHECK(numel() == 1, "item() requires a scalar tensor, got shape " +
                                detail::format_shape(shape()));
    return impl_->value[0];
  }

  // Flat and [C,H,W] accessors.
  double operator[](long i) const { return impl_->value[i]; }
  double at(int c, int y, int x) const {
    const int h = dim(ndim() - 2), w = dim(ndim() - 1);
    return impl_->value[(static_cast<long>(c) * h + y) * w + x];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return impl_->grad.size() != 0; }
  const Array& grad() const {
    TPR_CHECK(has_grad(), "tensor has no accumulated gradient");
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.resize(0); }

  /// Reverse-mode sweep from a scalar. Gradients accumulate into every
  /// reachable node with requires_grad; call zero_grad between steps.
  void backward() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Create a graph node. When the tape is enabled and any parent requires
/// grad, parents and the backward closure are retained; otherwise the node
/// is a detached value.
Tensor make_node(Shape shape, Array value, const std::vector<Tensor>& parents,
                 BackwardFn backward);

inline Tensor make_leaf(Shape shape, Array value, bool requires_grad = false) {
  Tensor t = Tensor::from_array(std::move(shape), std::move(value));
  t.set_requires_grad(requires_grad);
  return t;
}

}  // namespace tpr

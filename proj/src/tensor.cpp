#include "tpr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace tpr {

namespace detail {

void fail(const std::string& msg) { throw Error(msg); }

std::string format_shape(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(Shape shape) {
  return from_array(std::move(shape), Array());
}

Tensor Tensor::full(Shape shape, double v) {
  long n = numel_of(shape);
  return from_array(std::move(shape), Array::Constant(n, v));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  TPR_CHECK(numel_of(shape) == static_cast<long>(data.size()),
            "data length " + std::to_string(data.size()) +
                " does not match shape " + detail::format_shape(shape));
  Array a(data.size());
  std::copy(data.begin(), data.end(), a.data());
  return from_array(std::move(shape), std::move(a));
}

Tensor Tensor::from_array(Shape shape, Array data) {
  long n = numel_of(shape);
  TPR_CHECK(n >= 0, "negative extent in shape " + detail::format_shape(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = data.size() == 0 ? Array::Zero(n) : std::move(data);
  TPR_CHECK(impl->value.size() == n, "array size does not match shape " +
                                         detail::format_shape(impl->shape));
  impl->id = g_next_id.fetch_add(1);
  return Tensor(std::move(impl));
}

Tensor make_node(Shape shape, Array value, const std::vector<Tensor>& parents,
                 BackwardFn backward) {
  Tensor out = Tensor::from_array(std::move(shape), std::move(value));
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    auto impl = out.impl();
    impl->requires_grad = true;
    impl->parents.reserve(parents.size());
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward = std::move(backward);
  }
  return out;
}

void Tensor::backward() const {
  TPR_CHECK(defined() && numel() == 1,
            "backward() requires a scalar loss tensor");
  TPR_CHECK(impl_->requires_grad,
            "backward() on a tensor detached from the op graph");

  // Collect reachable nodes; descending creation id is a reverse topo order
  // because every op output is created after its inputs.
  std::vector<TensorImpl*> nodes;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->id > b->id; });

  impl_->accumulate(Array::Ones(1));
  for (TensorImpl* n : nodes) {
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

}  // namespace tpr

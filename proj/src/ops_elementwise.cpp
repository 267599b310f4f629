#include <cmath>

#include "tpr/ops.hpp"

namespace tpr::ops {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  TPR_CHECK(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " +
                detail::format_shape(a.shape()) + " vs " +
                detail::format_shape(b.shape()));
}

void check_chw(const Tensor& t, const char* op) {
  TPR_CHECK(t.ndim() == 3, std::string(op) + ": expected [C,H,W], got " +
                               detail::format_shape(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto ai = a.impl(), bi = b.impl();
  return make_node(a.shape(), a.data() + b.data(), {a, b},
                   [ai, bi](const TensorImpl& o) {
                     if (ai->requires_grad) ai->accumulate(o.grad);
                     if (bi->requires_grad) bi->accumulate(o.grad);
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto ai = a.impl(), bi = b.impl();
  return make_node(a.shape(), a.data() - b.data(), {a, b},
                   [ai, bi](const TensorImpl& o) {
                     if (ai->requires_grad) ai->accumulate(o.grad);
                     if (bi->requires_grad) bi->accumulate(-o.grad);
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto ai = a.impl(), bi = b.impl();
  return make_node(a.shape(), a.data() * b.data(), {a, b},
                   [ai, bi](const TensorImpl& o) {
                     if (ai->requires_grad) ai->accumulate(o.grad * bi->value);
                     if (bi->requires_grad) bi->accumulate(o.grad * ai->value);
                   });
}

Tensor scale(const Tensor& a, double s) {
  auto ai = a.impl();
  return make_node(a.shape(), a.data() * s, {a}, [ai, s](const TensorImpl& o) {
    ai->accumulate(o.grad * s);
  });
}

Tensor sum(const Tensor& a) {
  auto ai = a.impl();
  return make_node({1}, Array::Constant(1, a.data().sum()), {a},
                   [ai](const TensorImpl& o) {
                     ai->accumulate(Array::Constant(ai->value.size(), o.grad[0]));
                   });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

Tensor relu(const Tensor& a) {
  auto ai = a.impl();
  return make_node(a.shape(), a.data().max(0.0), {a},
                   [ai](const TensorImpl& o) {
                     ai->accumulate(o.grad * (ai->value > 0.0).cast<double>());
                   });
}

Tensor sigmoid(const Tensor& a) {
  Array y = 1.0 / (1.0 + (-a.data()).exp());
  auto ai = a.impl();
  return make_node(a.shape(), std::move(y), {a}, [ai](const TensorImpl& o) {
    ai->accumulate(o.grad * o.value * (1.0 - o.value));
  });
}

Tensor tanh_op(const Tensor& a) {
  auto ai = a.impl();
  return make_node(a.shape(), a.data().tanh(), {a}, [ai](const TensorImpl& o) {
    ai->accumulate(o.grad * (1.0 - o.value.square()));
  });
}

Tensor log_op(const Tensor& a) {
  auto ai = a.impl();
  return make_node(a.shape(), a.data().log(), {a}, [ai](const TensorImpl& o) {
    ai->accumulate(o.grad / ai->value);
  });
}

Tensor clipped_tanh(const Tensor& a) {
  Array y = a.data().tanh().max(0.0);
  auto ai = a.impl();
  return make_node(a.shape(), std::move(y), {a}, [ai](const TensorImpl& o) {
    Array open = (ai->value > 0.0).cast<double>();
    ai->accumulate(o.grad * open * (1.0 - o.value.square()));
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_chw(a, "concat_channels");
  check_chw(b, "concat_channels");
  TPR_CHECK(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
            "concat_channels: spatial mismatch " +
                detail::format_shape(a.shape()) + " vs " +
                detail::format_shape(b.shape()));
  const long na = a.numel(), nb = b.numel();
  Array y(na + nb);
  y.head(na) = a.data();
  y.tail(nb) = b.data();
  auto ai = a.impl(), bi = b.impl();
  return make_node({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(y),
                   {a, b}, [ai, bi, na, nb](const TensorImpl& o) {
                     if (ai->requires_grad) ai->accumulate(o.grad.head(na));
                     if (bi->requires_grad) bi->accumulate(o.grad.tail(nb));
                   });
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  check_chw(x, "slice_channels");
  TPR_CHECK(0 <= c0 && c0 < c1 && c1 <= x.dim(0),
            "slice_channels: bad range [" + std::to_string(c0) + "," +
                std::to_string(c1) + ") for C=" + std::to_string(x.dim(0)));
  const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
  Array y = x.data().segment(c0 * hw, (c1 - c0) * hw);
  auto xi = x.impl();
  return make_node({c1 - c0, x.dim(1), x.dim(2)}, std::move(y), {x},
                   [xi, c0, c1, hw](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     g.segment(c0 * hw, (c1 - c0) * hw) = o.grad;
                     xi->accumulate(g);
                   });
}

Tensor mul_gate(const Tensor& x, const Tensor& g) {
  check_chw(x, "mul_gate");
  TPR_CHECK(g.ndim() == 3 && g.dim(0) == 1 && g.dim(1) == x.dim(1) &&
                g.dim(2) == x.dim(2),
            "mul_gate: gate shape " + detail::format_shape(g.shape()) +
                " does not match feature " + detail::format_shape(x.shape()));
  const int c = x.dim(0);
  const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
  Array y(x.numel());
  for (int ch = 0; ch < c; ++ch)
    y.segment(ch * hw, hw) = x.data().segment(ch * hw, hw) * g.data();
  auto xi = x.impl(), gi = g.impl();
  return make_node(x.shape(), std::move(y), {x, g},
                   [xi, gi, c, hw](const TensorImpl& o) {
                     if (xi->requires_grad) {
                       Array gx(xi->value.size());
                       for (int ch = 0; ch < c; ++ch)
                         gx.segment(ch * hw, hw) =
                             o.grad.segment(ch * hw, hw) * gi->value;
                       xi->accumulate(gx);
                     }
                     if (gi->requires_grad) {
                       Array gg = Array::Zero(hw);
                       for (int ch = 0; ch < c; ++ch)
                         gg += o.grad.segment(ch * hw, hw) *
                               xi->value.segment(ch * hw, hw);
                       gi->accumulate(gg);
                     }
                   });
}

Tensor convex_blend(const Tensor& g, const Tensor& x, const Tensor& y) {
  check_same_shape(x, y, "convex_blend");
  TPR_CHECK(g.ndim() == 3 && g.dim(0) == 1 && g.dim(1) == x.dim(1) &&
                g.dim(2) == x.dim(2),
            "convex_blend: gate shape " + detail::format_shape(g.shape()) +
                " does not match features " + detail::format_shape(x.shape()));
  const int c = x.dim(0);
  const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
  Array out(x.numel());
  for (int ch = 0; ch < c; ++ch)
    out.segment(ch * hw, hw) = g.data() * x.data().segment(ch * hw, hw) +
                               (1.0 - g.data()) * y.data().segment(ch * hw, hw);
  auto gi = g.impl(), xi = x.impl(), yi = y.impl();
  return make_node(x.shape(), std::move(out), {g, x, y},
                   [gi, xi, yi, c, hw](const TensorImpl& o) {
                     if (gi->requires_grad) {
                       Array gg = Array::Zero(hw);
                       for (int ch = 0; ch < c; ++ch)
                         gg += o.grad.segment(ch * hw, hw) *
                               (xi->value.segment(ch * hw, hw) -
                                yi->value.segment(ch * hw, hw));
                       gi->accumulate(gg);
                     }
                     if (xi->requires_grad) {
                       Array gx(xi->value.size());
                       for (int ch = 0; ch < c; ++ch)
                         gx.segment(ch * hw, hw) =
                             o.grad.segment(ch * hw, hw) * gi->value;
                       xi->accumulate(gx);
                     }
                     if (yi->requires_grad) {
                       Array gy(yi->value.size());
                       for (int ch = 0; ch < c; ++ch)
                         gy.segment(ch * hw, hw) =
                             o.grad.segment(ch * hw, hw) * (1.0 - gi->value);
                       yi->accumulate(gy);
                     }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  TPR_CHECK(x.ndim() == 1 && w.ndim() == 2 && w.dim(1) == x.dim(0),
            "linear: w " + detail::format_shape(w.shape()) + " incompatible with x " +
                detail::format_shape(x.shape()));
  const int out = w.dim(0), in = w.dim(1);
  using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<const Eigen::VectorXd>;
  MatMap wm(w.data().data(), out, in);
  VecMap xv(x.data().data(), in);
  Eigen::VectorXd yv = wm * xv;
  if (b) {
    TPR_CHECK(b->ndim() == 1 && b->dim(0) == out,
              "linear: bias shape " + detail::format_shape(b->shape()));
    yv += VecMap(b->data().data(), out);
  }
  Array y = yv.array();
  auto xi = x.impl(), wi = w.impl();
  auto bi = b ? b->impl() : nullptr;
  std::vector<Tensor> parents{x, w};
  if (b) parents.push_back(*b);
  return make_node({out}, std::move(y), parents,
                   [xi, wi, bi, out, in](const TensorImpl& o) {
                     MatMap wm2(wi->value.data(), out, in);
                     VecMap go(o.grad.data(), out);
                     if (xi->requires_grad) {
                       Eigen::VectorXd gx = wm2.transpose() * go;
                       xi->accumulate(gx.array());
                     }
                     if (wi->requires_grad) {
                       VecMap xv2(xi->value.data(), in);
                       Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>
                           gw = go * xv2.transpose();
                       wi->accumulate(
                           Eigen::Map<Array>(gw.data(), gw.size()));
                     }
                     if (bi && bi->requires_grad) bi->accumulate(o.grad);
                   });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  auto ai = a.impl(), bi = b.impl();
  return make_node({1}, Array::Constant(1, (a.data() * b.data()).sum()), {a, b},
                   [ai, bi](const TensorImpl& o) {
                     if (ai->requires_grad) ai->accumulate(o.grad[0] * bi->value);
                     if (bi->requires_grad) bi->accumulate(o.grad[0] * ai->value);
                   });
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  TPR_CHECK(!xs.empty(), "stack_scalars: empty input");
  Array y(xs.size());
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    TPR_CHECK(xs[i].numel() == 1, "stack_scalars: element " + std::to_string(i) +
                                      " is not scalar");
    y[static_cast<long>(i)] = xs[i].item();
    impls.push_back(xs[i].impl());
  }
  return make_node({static_cast<int>(xs.size())}, std::move(y), xs,
                   [impls](const TensorImpl& o) {
                     for (size_t i = 0; i < impls.size(); ++i)
                       if (impls[i]->requires_grad)
                         impls[i]->accumulate(
                             Array::Constant(1, o.grad[static_cast<long>(i)]));
                   });
}

Tensor pick(const Tensor& v, int index) {
  TPR_CHECK(v.ndim() == 1 && index >= 0 && index < v.dim(0),
            "pick: index " + std::to_string(index) + " out of range for " +
                detail::format_shape(v.shape()));
  auto vi = v.impl();
  return make_node({1}, Array::Constant(1, v[index]), {v},
                   [vi, index](const TensorImpl& o) {
                     Array g = Array::Zero(vi->value.size());
                     g[index] = o.grad[0];
                     vi->accumulate(g);
                   });
}

}  // namespace tpr::ops

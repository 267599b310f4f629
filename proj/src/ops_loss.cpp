#include <cmath>

#include "tpr/ops.hpp"

namespace tpr::ops {

Tensor softmax_zero(const Tensor& logits) {
  TPR_CHECK(logits.ndim() == 1, "softmax_zero: logits must be a vector, got " +
                                    detail::format_shape(logits.shape()));
  const int k = logits.dim(0);
  double m = 0.0;  // implicit zero logit participates in the max
  for (int i = 0; i < k; ++i) m = std::max(m, logits[i]);
  Array p(k + 1);
  p[0] = std::exp(-m);
  double z = p[0];
  for (int i = 0; i < k; ++i) {
    p[i + 1] = std::exp(logits[i] - m);
    z += p[i + 1];
  }
  p /= z;
  auto li = logits.impl();
  return make_node({k + 1}, std::move(p), {logits},
                   [li, k](const TensorImpl& o) {
                     // dL/dl_j = p_j * (g_j - sum_i p_i g_i), zero-logit class
                     // has no parameter.
                     const double dotpg = (o.value * o.grad).sum();
                     Array g(k);
                     for (int j = 0; j < k; ++j)
                       g[j] = o.value[j + 1] * (o.grad[j + 1] - dotpg);
                     li->accumulate(g);
                   });
}

Tensor softmax_ce_map(const Tensor& logits, const std::vector<int>& targets,
                      double normalizer) {
  TPR_CHECK(logits.ndim() == 3, "softmax_ce_map: logits must be [N,H,W]");
  const int n = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  const long hw = static_cast<long>(h) * w;
  TPR_CHECK(static_cast<long>(targets.size()) == hw,
            "softmax_ce_map: targets length " + std::to_string(targets.size()) +
                " does not match " + std::to_string(hw) + " locations");
  TPR_CHECK(normalizer > 0, "softmax_ce_map: normalizer must be positive");
  const double* lp = logits.data().data();
  double loss = 0;
  Array softmax(logits.numel());
  for (long i = 0; i < hw; ++i) {
    double m = lp[i];
    for (int cls = 1; cls < n; ++cls) m = std::max(m, lp[cls * hw + i]);
    double z = 0;
    for (int cls = 0; cls < n; ++cls) {
      const double e = std::exp(lp[cls * hw + i] - m);
      softmax[cls * hw + i] = e;
      z += e;
    }
    for (int cls = 0; cls < n; ++cls) softmax[cls * hw + i] /= z;
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0) continue;
    TPR_CHECK(t < n, "softmax_ce_map: target class " + std::to_string(t) +
                         " out of range for " + std::to_string(n) + " classes");
    loss += std::log(z) + m - lp[t * hw + i];
  }
  loss /= normalizer;
  auto li = logits.impl();
  return make_node({1}, Array::Constant(1, loss), {logits},
                   [li, targets, softmax = std::move(softmax), n, hw,
                    normalizer](const TensorImpl& o) {
                     const double g = o.grad[0] / normalizer;
                     Array gl = Array::Zero(li->value.size());
                     for (long i = 0; i < hw; ++i) {
                       const int t = targets[static_cast<size_t>(i)];
                       if (t < 0) continue;
                       for (int cls = 0; cls < n; ++cls)
                         gl[cls * hw + i] =
                             g * (softmax[cls * hw + i] - (cls == t ? 1.0 : 0.0));
                     }
                     li->accumulate(gl);
                   });
}

Tensor bce_logits_mean(const Tensor& logits, const Array& targets) {
  TPR_CHECK(logits.numel() == targets.size(),
            "bce_logits_mean: targets size " + std::to_string(targets.size()) +
                " does not match logits " + detail::format_shape(logits.shape()));
  const Array& z = logits.data();
  // max(z,0) - z*t + log(1 + exp(-|z|))
  Array perel = z.max(0.0) - z * targets + (1.0 + (-z.abs()).exp()).log();
  const double n = static_cast<double>(logits.numel());
  auto li = logits.impl();
  return make_node({1}, Array::Constant(1, perel.sum() / n), {logits},
                   [li, targets, n](const TensorImpl& o) {
                     Array sig = 1.0 / (1.0 + (-li->value).exp());
                     li->accumulate(o.grad[0] / n * (sig - targets));
                   });
}

Tensor smooth_l1(const Tensor& pred, const Array& targets, double normalizer) {
  TPR_CHECK(pred.numel() == targets.size(),
            "smooth_l1: targets size " + std::to_string(targets.size()) +
                " does not match pred " + detail::format_shape(pred.shape()));
  TPR_CHECK(normalizer > 0, "smooth_l1: normalizer must be positive");
  Array d = pred.data() - targets;
  Array loss = (d.abs() < 1.0).select(0.5 * d.square(), d.abs() - 0.5);
  auto pi = pred.impl();
  return make_node({1}, Array::Constant(1, loss.sum() / normalizer), {pred},
                   [pi, targets, normalizer](const TensorImpl& o) {
                     Array d2 = pi->value - targets;
                     Array g = (d2.abs() < 1.0)
                                   .select(d2, (d2 > 0.0).cast<double>() * 2.0 - 1.0);
                     pi->accumulate(o.grad[0] / normalizer * g);
                   });
}

}  // namespace tpr::ops

#pragma once

#include <optional>
#include <vector>

#include "tpr/tensor.hpp"

namespace tpr::ops {

// ---------------------------------------------------------------------------
// Elementwise / reduction
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor log_op(const Tensor& a);
/// Gate activation: max(0, tanh(x)). Exact zeros for x <= 0 so gated work
/// is skippable; subgradient 0 on the closed side.
Tensor clipped_tanh(const Tensor& a);

// ---------------------------------------------------------------------------
// Channel layout ([C,H,W] tensors)
// ---------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int c0, int c1);  // [c0,c1)
/// x[C,H,W] * g[1,H,W], gate broadcast over channels.
Tensor mul_gate(const Tensor& x, const Tensor& g);
/// g*x + (1-g)*y with g[1,H,W] broadcast over channels.
Tensor convex_blend(const Tensor& g, const Tensor& x, const Tensor& y);

// ---------------------------------------------------------------------------
// Dense layers
// ---------------------------------------------------------------------------

/// w[out,in] @ x[in] (+ b[out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr);
Tensor dot(const Tensor& a, const Tensor& b);  // -> scalar
Tensor stack_scalars(const std::vector<Tensor>& xs);
Tensor pick(const Tensor& v, int index);  // -> scalar

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

/// Boolean spatial mask over an output map. Empty `on` means "dense".
struct SpatialMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> on;
  bool none() const { return on.empty(); }
  long count() const;
  bool at(int y, int x) const { return on[static_cast<size_t>(y) * w + x] != 0; }
};

/// Cross-correlation, zero padding, odd kernels. With a mask, output
/// positions where mask==0 are exactly zero, cost nothing, and pass no
/// gradient.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr,
              int stride = 1, int padding = -1,
              const SpatialMask* mask = nullptr);

/// Ceil-mode pooling: output ceil(H/stride), windows clipped at the border.
Tensor maxpool2d(const Tensor& x, int k, int stride);
inline Tensor maxpool2d(const Tensor& x, int k) { return maxpool2d(x, k, k); }
/// 2x2 mean pooling, ceil mode, border windows averaged over their actual
/// extent (preserves constants).
Tensor avgpool2x2(const Tensor& x);
/// Stride-1 max filter with centered odd window, same size ("same" padding
/// by window clipping). Used for receptive-field expansion of gate maps.
Tensor maxfilter(const Tensor& x, int k);

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

Tensor upsample_nearest(const Tensor& x, int out_h, int out_w);
/// Bilinear resize, half-pixel centers, edge-clamped reads.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
inline Tensor upsample_bilinear2x(const Tensor& x) {
  return resize_bilinear(x, 2 * x.dim(x.ndim() - 2), 2 * x.dim(x.ndim() - 1));
}

/// Zero-padded bilinear point sample of channel c at continuous (y, x).
double bilinear_sample(const Tensor& x, double y, double xx, int c);
struct BilinearGrad {
  double value = 0;
  double dy = 0, dx = 0;     // d value / d coordinate
  int iy[4] = {0, 0, 0, 0};  // in-bounds neighbor indices and weights
  int ix[4] = {0, 0, 0, 0};
  double wgt[4] = {0, 0, 0, 0};
  int n = 0;
};
BilinearGrad bilinear_sample_grad(const Tensor& x, double y, double xx, int c);

/// Deformable 3x3 sampling (one scalar weight per tap, shared across
/// channels): out[c,i] = sum_n sample(x[c], i + p_n + off(i, p_n)) * w9[n].
/// off has 18 channels, (dy, dx) per tap in row-major tap order.
Tensor deform_sample(const Tensor& x, const Tensor& off, const Tensor& w9);

struct BoxF {
  double y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double h() const { return y1 - y0; }
  double w() const { return x1 - x0; }
};

/// Bilinear crop of a continuous box to an SxS grid (zero-padded reads).
/// Differentiable w.r.t. x only; box coordinates are treated as constants.
Tensor crop_resize(const Tensor& x, const BoxF& box, int s);
/// Mean over an integer pixel region -> [C]. Errors on an empty region.
Tensor avgpool_region(const Tensor& x, int y0, int x0, int y1, int x1);

// ---------------------------------------------------------------------------
// Losses / softmax
// ---------------------------------------------------------------------------

/// Softmax over {0, l_1..l_K} where the class-0 logit is fixed at zero.
/// Stable via max subtraction (zero included in the max). Output [K+1].
Tensor softmax_zero(const Tensor& logits);
/// Per-location multi-class cross entropy over channel dim. targets[h*w]
/// holds class indices; entries < 0 are ignored. Sum over locations divided
/// by `normalizer`.
Tensor softmax_ce_map(const Tensor& logits, const std::vector<int>& targets,
                      double normalizer);
/// Stable binary cross entropy with logits against constant targets, mean.
Tensor bce_logits_mean(const Tensor& logits, const Array& targets);
/// Smooth-L1 (beta=1) against constant targets, summed then / normalizer.
Tensor smooth_l1(const Tensor& pred, const Array& targets, double normalizer);

}  // namespace tpr::ops

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "tpr/ops.hpp"
#include "tpr/tensor.hpp"

namespace testutil {

inline tpr::Tensor random_tensor(tpr::Shape shape, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0,
                                 bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  tpr::Array a(tpr::numel_of(shape));
  for (long i = 0; i < a.size(); ++i) a[i] = dist(rng);
  return tpr::make_leaf(std::move(shape), std::move(a), requires_grad);
}

// Reference convolution, written independently of the library kernels:
// plain cross-correlation with zero padding over [C,H,W].
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int cin,
                                        int h, int w,
                                        const std::vector<double>& k, int cout,
                                        int ks, int stride, int pad,
                                        const std::vector<double>* bias = nullptr) {
  const int oh = (h + 2 * pad - ks) / stride + 1;
  const int ow = (w + 2 * pad - ks) / stride + 1;
  std::vector<double> out(static_cast<size_t>(cout) * oh * ow, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias ? (*bias)[static_cast<size_t>(co)] : 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x[(static_cast<size_t>(ci) * h + iy) * w + ix] *
                     k[((static_cast<size_t>(co) * cin + ci) * ks + ky) * ks + kx];
            }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] = acc;
      }
  return out;
}

inline double max_abs_diff(const tpr::Tensor& a, const tpr::Tensor& b) {
  return (a.data() - b.data()).abs().maxCoeff();
}

inline double max_abs_diff(const tpr::Tensor& a, const std::vector<double>& b) {
  double m = 0;
  for (long i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[static_cast<size_t>(i)]));
  return m;
}

inline tpr::ops::SpatialMask random_mask(int h, int w, std::mt19937_64& rng,
                                         double p_on = 0.5) {
  std::bernoulli_distribution on(p_on);
  tpr::ops::SpatialMask m;
  m.h = h;
  m.w = w;
  m.on.resize(static_cast<size_t>(h) * w);
  for (auto& v : m.on) v = on(rng) ? 1 : 0;
  return m;
}

}  // namespace testutil

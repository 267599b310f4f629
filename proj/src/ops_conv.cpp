#include <cmath>

#include "tpr/ops.hpp"

namespace tpr::ops {

long SpatialMask::count() const {
  long n = 0;
  for (std::uint8_t v : on) n += v != 0;
  return n;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int padding, const SpatialMask* mask) {
  TPR_CHECK(x.ndim() == 3, "conv2d: input must be [C,H,W], got " +
                               detail::format_shape(x.shape()));
  TPR_CHECK(w.ndim() == 4, "conv2d: kernel must be [Cout,Cin,k,k], got " +
                               detail::format_shape(w.shape()));
  const int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  TPR_CHECK(w.dim(1) == cin, "conv2d: kernel expects Cin=" +
                                 std::to_string(w.dim(1)) + " but input has C=" +
                                 std::to_string(cin));
  TPR_CHECK(w.dim(3) == k && k % 2 == 1,
            "conv2d: kernel spatial size must be odd square, got " +
                detail::format_shape(w.shape()));
  TPR_CHECK(stride >= 1, "conv2d: stride must be >= 1");
  if (padding < 0) padding = (k - 1) / 2;
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (ww + 2 * padding - k) / stride + 1;
  TPR_CHECK(oh > 0 && ow > 0, "conv2d: input " + detail::format_shape(x.shape()) +
                                  " too small for kernel " + std::to_string(k));
  if (bias)
    TPR_CHECK(bias->ndim() == 1 && bias->dim(0) == cout,
              "conv2d: bias shape " + detail::format_shape(bias->shape()) +
                  " does not match Cout=" + std::to_string(cout));
  if (mask && !mask->none())
    TPR_CHECK(mask->h == oh && mask->w == ow,
              "conv2d: mask " + std::to_string(mask->h) + "x" +
                  std::to_string(mask->w) + " does not match output " +
                  std::to_string(oh) + "x" + std::to_string(ow));

  const bool masked = mask && !mask->none();
  Array out = Array::Zero(static_cast<long>(cout) * oh * ow);
  const double* xp = x.data().data();
  const double* wp = w.data().data();
  for (int co = 0; co < cout; ++co) {
    const double b = bias ? bias->data()[co] : 0.0;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        if (masked && !mask->at(oy, ox)) continue;
        double acc = b;
        const int iy0 = oy * stride - padding;
        const int ix0 = ox * stride - padding;
        for (int ci = 0; ci < cin; ++ci) {
          const double* xc = xp + static_cast<long>(ci) * h * ww;
          const double* wc = wp + (static_cast<long>(co) * cin + ci) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const double* xrow = xc + static_cast<long>(iy) * ww;
            const double* wrow = wc + static_cast<long>(ky) * k;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= ww) continue;
              acc += xrow[ix] * wrow[kx];
            }
          }
        }
        out[(static_cast<long>(co) * oh + oy) * ow + ox] = acc;
      }
    }
  }

  auto xi = x.impl(), wi = w.impl();
  auto bi = bias ? bias->impl() : nullptr;
  std::vector<Tensor> parents{x, w};
  if (bias) parents.push_back(*bias);
  SpatialMask mcopy = masked ? *mask : SpatialMask{};
  return make_node(
      {cout, oh, ow}, std::move(out), parents,
      [xi, wi, bi, stride, padding, cin, cout, h, ww, k, oh, ow,
       mcopy = std::move(mcopy)](const TensorImpl& o) {
        const bool masked2 = !mcopy.none();
        const double* gop = o.grad.data();
        const double* xp2 = xi->value.data();
        const double* wp2 = wi->value.data();
        Array gx, gw, gb;
        if (xi->requires_grad) gx = Array::Zero(xi->value.size());
        if (wi->requires_grad) gw = Array::Zero(wi->value.size());
        if (bi && bi->requires_grad) gb = Array::Zero(cout);
        for (int co = 0; co < cout; ++co) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              if (masked2 && !mcopy.at(oy, ox)) continue;
              const double g = gop[(static_cast<long>(co) * oh + oy) * ow + ox];
              if (g == 0.0) continue;
              if (gb.size()) gb[co] += g;
              const int iy0 = oy * stride - padding;
              const int ix0 = ox * stride - padding;
              for (int ci = 0; ci < cin; ++ci) {
                const long xoff = static_cast<long>(ci) * h * ww;
                const long woff = (static_cast<long>(co) * cin + ci) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = iy0 + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= ww) continue;
                    const long xidx = xoff + static_cast<long>(iy) * ww + ix;
                    const long widx = woff + static_cast<long>(ky) * k + kx;
                    if (gx.size()) gx[xidx] += g * wp2[widx];
                    if (gw.size()) gw[widx] += g * xp2[xidx];
                  }
                }
              }
            }
          }
        }
        if (gx.size()) xi->accumulate(gx);
        if (gw.size()) wi->accumulate(gw);
        if (gb.size()) bi->accumulate(gb);
      });
}

Tensor maxpool2d(const Tensor& x, int k, int stride) {
  TPR_CHECK(x.ndim() == 3, "maxpool2d: input must be [C,H,W], got " +
                               detail::format_shape(x.shape()));
  TPR_CHECK(k >= 1 && stride >= 1, "maxpool2d: bad window/stride");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = (h + stride - 1) / stride;
  const int ow = (w + stride - 1) / stride;
  Array out(static_cast<long>(c) * oh * ow);
  std::vector<long> argmax(out.size());
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* xc = xp + static_cast<long>(ch) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy * stride, y1 = std::min(y0 + k, h);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox * stride, x1 = std::min(x0 + k, w);
        double best = xc[static_cast<long>(y0) * w + x0];
        long bidx = static_cast<long>(y0) * w + x0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) {
            const long idx = static_cast<long>(yy) * w + xx;
            if (xc[idx] > best) {
              best = xc[idx];
              bidx = idx;
            }
          }
        const long oidx = (static_cast<long>(ch) * oh + oy) * ow + ox;
        out[oidx] = best;
        argmax[static_cast<size_t>(oidx)] = static_cast<long>(ch) * h * w + bidx;
      }
    }
  }
  auto xi = x.impl();
  return make_node({c, oh, ow}, std::move(out), {x},
                   [xi, argmax = std::move(argmax)](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (long i = 0; i < o.grad.size(); ++i)
                       g[argmax[static_cast<size_t>(i)]] += o.grad[i];
                     xi->accumulate(g);
                   });
}

Tensor avgpool2x2(const Tensor& x) {
  TPR_CHECK(x.ndim() == 3, "avgpool2x2: input must be [C,H,W], got " +
                               detail::format_shape(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Array out(static_cast<long>(c) * oh * ow);
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* xc = xp + static_cast<long>(ch) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = 2 * oy, y1 = std::min(y0 + 2, h);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = 2 * ox, x1 = std::min(x0 + 2, w);
        double acc = 0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) acc += xc[static_cast<long>(yy) * w + xx];
        out[(static_cast<long>(ch) * oh + oy) * ow + ox] =
            acc / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  auto xi = x.impl();
  return make_node({c, oh, ow}, std::move(out), {x},
                   [xi, c, h, w, oh, ow](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (int ch = 0; ch < c; ++ch)
                       for (int oy = 0; oy < oh; ++oy) {
                         const int y0 = 2 * oy, y1 = std::min(y0 + 2, h);
                         for (int ox = 0; ox < ow; ++ox) {
                           const int x0 = 2 * ox, x1 = std::min(x0 + 2, w);
                           const double gv =
                               o.grad[(static_cast<long>(ch) * oh + oy) * ow + ox] /
                               ((y1 - y0) * (x1 - x0));
                           for (int yy = y0; yy < y1; ++yy)
                             for (int xx = x0; xx < x1; ++xx)
                               g[(static_cast<long>(ch) * h + yy) * w + xx] += gv;
                         }
                       }
                     xi->accumulate(g);
                   });
}

Tensor maxfilter(const Tensor& x, int k) {
  TPR_CHECK(x.ndim() == 3, "maxfilter: input must be [C,H,W], got " +
                               detail::format_shape(x.shape()));
  TPR_CHECK(k >= 1 && k % 2 == 1, "maxfilter: window must be odd");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int r = k / 2;
  Array out(x.numel());
  std::vector<long> argmax(static_cast<size_t>(x.numel()));
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* xc = xp + static_cast<long>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
      for (int xx = 0; xx < w; ++xx) {
        const int x0 = std::max(0, xx - r), x1 = std::min(w, xx + r + 1);
        double best = xc[static_cast<long>(y0) * w + x0];
        long bidx = static_cast<long>(y0) * w + x0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xi2 = x0; xi2 < x1; ++xi2) {
            const long idx = static_cast<long>(yy) * w + xi2;
            if (xc[idx] > best) {
              best = xc[idx];
              bidx = idx;
            }
          }
        const long oidx = (static_cast<long>(ch) * h + y) * w + xx;
        out[oidx] = best;
        argmax[static_cast<size_t>(oidx)] = static_cast<long>(ch) * h * w + bidx;
      }
    }
  }
  auto xi = x.impl();
  return make_node(x.shape(), std::move(out), {x},
                   [xi, argmax = std::move(argmax)](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (long i = 0; i < o.grad.size(); ++i)
                       g[argmax[static_cast<size_t>(i)]] += o.grad[i];
                     xi->accumulate(g);
                   });
}

}  // namespace tpr::ops

#include <cmath>

#include "tpr/ops.hpp"

namespace tpr::ops {

Tensor upsample_nearest(const Tensor& x, int out_h, int out_w) {
  TPR_CHECK(x.ndim() == 3, "upsample_nearest: input must be [C,H,W]");
  TPR_CHECK(out_h >= 1 && out_w >= 1, "upsample_nearest: bad target size");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Array out(static_cast<long>(c) * out_h * out_w);
  std::vector<int> ymap(static_cast<size_t>(out_h)), xmap(static_cast<size_t>(out_w));
  for (int y = 0; y < out_h; ++y)
    ymap[static_cast<size_t>(y)] = std::min(h - 1, y * h / out_h);
  for (int xx = 0; xx < out_w; ++xx)
    xmap[static_cast<size_t>(xx)] = std::min(w - 1, xx * w / out_w);
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < out_h; ++y)
      for (int xx = 0; xx < out_w; ++xx)
        out[(static_cast<long>(ch) * out_h + y) * out_w + xx] =
            xp[(static_cast<long>(ch) * h + ymap[static_cast<size_t>(y)]) * w +
               xmap[static_cast<size_t>(xx)]];
  auto xi = x.impl();
  return make_node({c, out_h, out_w}, std::move(out), {x},
                   [xi, c, h, w, out_h, out_w, ymap = std::move(ymap),
                    xmap = std::move(xmap)](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (int ch = 0; ch < c; ++ch)
                       for (int y = 0; y < out_h; ++y)
                         for (int xx = 0; xx < out_w; ++xx)
                           g[(static_cast<long>(ch) * h +
                              ymap[static_cast<size_t>(y)]) *
                                 w +
                             xmap[static_cast<size_t>(xx)]] +=
                               o.grad[(static_cast<long>(ch) * out_h + y) * out_w +
                                      xx];
                     xi->accumulate(g);
                   });
}

namespace {

struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets (1 - w1)
};

// Half-pixel-center source coordinate with edge clamping.
std::vector<LerpTap> resize_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<size_t>(out));
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    double f = std::floor(src);
    int i0 = static_cast<int>(f);
    double w1 = src - f;
    int i1 = i0 + 1;
    if (i0 < 0) {
      i0 = 0;
      i1 = 0;
      w1 = 0;
    } else if (i1 > in - 1) {
      i0 = in - 1;
      i1 = in - 1;
      w1 = 0;
    }
    taps[static_cast<size_t>(o)] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  TPR_CHECK(x.ndim() == 3, "resize_bilinear: input must be [C,H,W]");
  TPR_CHECK(out_h >= 1 && out_w >= 1, "resize_bilinear: bad target size");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = resize_taps(h, out_h);
  auto tx = resize_taps(w, out_w);
  Array out(static_cast<long>(c) * out_h * out_w);
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* xc = xp + static_cast<long>(ch) * h * w;
    for (int y = 0; y < out_h; ++y) {
      const LerpTap& a = ty[static_cast<size_t>(y)];
      for (int xx = 0; xx < out_w; ++xx) {
        const LerpTap& b = tx[static_cast<size_t>(xx)];
        const double v00 = xc[static_cast<long>(a.i0) * w + b.i0];
        const double v01 = xc[static_cast<long>(a.i0) * w + b.i1];
        const double v10 = xc[static_cast<long>(a.i1) * w + b.i0];
        const double v11 = xc[static_cast<long>(a.i1) * w + b.i1];
        out[(static_cast<long>(ch) * out_h + y) * out_w + xx] =
            (1 - a.w1) * ((1 - b.w1) * v00 + b.w1 * v01) +
            a.w1 * ((1 - b.w1) * v10 + b.w1 * v11);
      }
    }
  }
  auto xi = x.impl();
  return make_node(
      {c, out_h, out_w}, std::move(out), {x},
      [xi, c, h, w, out_h, out_w, ty = std::move(ty),
       tx = std::move(tx)](const TensorImpl& o) {
        Array g = Array::Zero(xi->value.size());
        for (int ch = 0; ch < c; ++ch) {
          const long off = static_cast<long>(ch) * h * w;
          for (int y = 0; y < out_h; ++y) {
            const LerpTap& a = ty[static_cast<size_t>(y)];
            for (int xx = 0; xx < out_w; ++xx) {
              const LerpTap& b = tx[static_cast<size_t>(xx)];
              const double gv =
                  o.grad[(static_cast<long>(ch) * out_h + y) * out_w + xx];
              g[off + static_cast<long>(a.i0) * w + b.i0] +=
                  gv * (1 - a.w1) * (1 - b.w1);
              g[off + static_cast<long>(a.i0) * w + b.i1] += gv * (1 - a.w1) * b.w1;
              g[off + static_cast<long>(a.i1) * w + b.i0] += gv * a.w1 * (1 - b.w1);
              g[off + static_cast<long>(a.i1) * w + b.i1] += gv * a.w1 * b.w1;
            }
          }
        }
        xi->accumulate(g);
      });
}

namespace {

inline double sample_or_zero(const double* plane, int h, int w, int y, int x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
  return plane[static_cast<long>(y) * w + x];
}

}  // namespace

double bilinear_sample(const Tensor& x, double y, double xx, int c) {
  return bilinear_sample_grad(x, y, xx, c).value;
}

BilinearGrad bilinear_sample_grad(const Tensor& x, double y, double xx, int c) {
  TPR_CHECK(x.ndim() == 3 && c >= 0 && c < x.dim(0),
            "bilinear_sample: bad channel " + std::to_string(c) + " for " +
                detail::format_shape(x.shape()));
  const int h = x.dim(1), w = x.dim(2);
  const double* plane = x.data().data() + static_cast<long>(c) * h * w;
  BilinearGrad r;
  const double fy = std::floor(y), fx = std::floor(xx);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const double wy = y - fy, wx = xx - fx;
  const double v00 = sample_or_zero(plane, h, w, y0, x0);
  const double v01 = sample_or_zero(plane, h, w, y0, x0 + 1);
  const double v10 = sample_or_zero(plane, h, w, y0 + 1, x0);
  const double v11 = sample_or_zero(plane, h, w, y0 + 1, x0 + 1);
  r.value = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
            wy * ((1 - wx) * v10 + wx * v11);
  r.dy = ((1 - wx) * v10 + wx * v11) - ((1 - wx) * v00 + wx * v01);
  r.dx = ((1 - wy) * v01 + wy * v11) - ((1 - wy) * v00 + wy * v10);
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const double ws[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx),
                        wy * wx};
  for (int i = 0; i < 4; ++i) {
    if (ys[i] < 0 || ys[i] >= h || xs[i] < 0 || xs[i] >= w) continue;
    r.iy[r.n] = ys[i];
    r.ix[r.n] = xs[i];
    r.wgt[r.n] = ws[i];
    ++r.n;
  }
  return r;
}

Tensor deform_sample(const Tensor& x, const Tensor& off, const Tensor& w9) {
  TPR_CHECK(x.ndim() == 3, "deform_sample: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  TPR_CHECK(off.ndim() == 3 && off.dim(0) == 18 && off.dim(1) == h &&
                off.dim(2) == w,
            "deform_sample: offset field " + detail::format_shape(off.shape()) +
                " does not match input " + detail::format_shape(x.shape()));
  TPR_CHECK(w9.ndim() == 1 && w9.dim(0) == 9,
            "deform_sample: tap weights must be [9], got " +
                detail::format_shape(w9.shape()));

  const double* xp = x.data().data();
  const double* op = off.data().data();
  const double* wp = w9.data().data();
  const long hw = static_cast<long>(h) * w;
  Array out = Array::Zero(x.numel());
  for (int t = 0; t < 9; ++t) {
    const int py = t / 3 - 1, px = t % 3 - 1;
    const double* ody = op + static_cast<long>(2 * t) * hw;
    const double* odx = op + static_cast<long>(2 * t + 1) * hw;
    const double wt = wp[t];
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const long sidx = static_cast<long>(y) * w + xx;
        const double sy = y + py + ody[sidx];
        const double sx = xx + px + odx[sidx];
        const double fy = std::floor(sy), fx = std::floor(sx);
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const double wy = sy - fy, wx = sx - fx;
        for (int ch = 0; ch < c; ++ch) {
          const double* plane = xp + static_cast<long>(ch) * hw;
          const double v00 = sample_or_zero(plane, h, w, y0, x0);
          const double v01 = sample_or_zero(plane, h, w, y0, x0 + 1);
          const double v10 = sample_or_zero(plane, h, w, y0 + 1, x0);
          const double v11 = sample_or_zero(plane, h, w, y0 + 1, x0 + 1);
          out[static_cast<long>(ch) * hw + sidx] +=
              wt * ((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                    wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  }

  auto xi = x.impl(), oi = off.impl(), wi = w9.impl();
  return make_node(
      x.shape(), std::move(out), {x, off, w9},
      [xi, oi, wi, c, h, w, hw](const TensorImpl& o) {
        const double* xp2 = xi->value.data();
        const double* op2 = oi->value.data();
        const double* wp2 = wi->value.data();
        Array gx, go, gw;
        if (xi->requires_grad) gx = Array::Zero(xi->value.size());
        if (oi->requires_grad) go = Array::Zero(oi->value.size());
        if (wi->requires_grad) gw = Array::Zero(9);
        for (int t = 0; t < 9; ++t) {
          const int py = t / 3 - 1, px = t % 3 - 1;
          const double* ody = op2 + static_cast<long>(2 * t) * hw;
          const double* odx = op2 + static_cast<long>(2 * t + 1) * hw;
          const double wt = wp2[t];
          for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
              const long sidx = static_cast<long>(y) * w + xx;
              const double sy = y + py + ody[sidx];
              const double sx = xx + px + odx[sidx];
              const double fy = std::floor(sy), fx = std::floor(sx);
              const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
              const double wy = sy - fy, wx = sx - fx;
              const bool in00 = y0 >= 0 && y0 < h && x0 >= 0 && x0 < w;
              const bool in01 = y0 >= 0 && y0 < h && x0 + 1 >= 0 && x0 + 1 < w;
              const bool in10 = y0 + 1 >= 0 && y0 + 1 < h && x0 >= 0 && x0 < w;
              const bool in11 =
                  y0 + 1 >= 0 && y0 + 1 < h && x0 + 1 >= 0 && x0 + 1 < w;
              double acc_dy = 0, acc_dx = 0;
              for (int ch = 0; ch < c; ++ch) {
                const double g = o.grad[static_cast<long>(ch) * hw + sidx];
                if (g == 0.0) continue;
                const double* plane = xp2 + static_cast<long>(ch) * hw;
                const double v00 = in00 ? plane[static_cast<long>(y0) * w + x0] : 0;
                const double v01 =
                    in01 ? plane[static_cast<long>(y0) * w + x0 + 1] : 0;
                const double v10 =
                    in10 ? plane[static_cast<long>(y0 + 1) * w + x0] : 0;
                const double v11 =
                    in11 ? plane[static_cast<long>(y0 + 1) * w + x0 + 1] : 0;
                const double val = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                   wy * ((1 - wx) * v10 + wx * v11);
                if (gw.size()) gw[t] += g * val;
                if (gx.size()) {
                  const long choff = static_cast<long>(ch) * hw;
                  const double gwt = g * wt;
                  if (in00)
                    gx[choff + static_cast<long>(y0) * w + x0] +=
                        gwt * (1 - wy) * (1 - wx);
                  if (in01)
                    gx[choff + static_cast<long>(y0) * w + x0 + 1] +=
                        gwt * (1 - wy) * wx;
                  if (in10)
                    gx[choff + static_cast<long>(y0 + 1) * w + x0] +=
                        gwt * wy * (1 - wx);
                  if (in11)
                    gx[choff + static_cast<long>(y0 + 1) * w + x0 + 1] +=
                        gwt * wy * wx;
                }
                if (go.size()) {
                  acc_dy += g * wt *
                            (((1 - wx) * v10 + wx * v11) -
                             ((1 - wx) * v00 + wx * v01));
                  acc_dx += g * wt *
                            (((1 - wy) * v01 + wy * v11) -
                             ((1 - wy) * v00 + wy * v10));
                }
              }
              if (go.size()) {
                go[static_cast<long>(2 * t) * hw + sidx] += acc_dy;
                go[static_cast<long>(2 * t + 1) * hw + sidx] += acc_dx;
              }
            }
          }
        }
        if (gx.size()) xi->accumulate(gx);
        if (go.size()) oi->accumulate(go);
        if (gw.size()) wi->accumulate(gw);
      });
}

Tensor crop_resize(const Tensor& x, const BoxF& box, int s) {
  TPR_CHECK(x.ndim() == 3, "crop_resize: input must be [C,H,W]");
  TPR_CHECK(s >= 1, "crop_resize: bad grid size");
  TPR_CHECK(box.h() > 0 && box.w() > 0, "crop_resize: empty box");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const long hw = static_cast<long>(h) * w;
  std::vector<double> ys(static_cast<size_t>(s)), xs(static_cast<size_t>(s));
  for (int i = 0; i < s; ++i) {
    ys[static_cast<size_t>(i)] = box.y0 + (i + 0.5) * box.h() / s - 0.5;
    xs[static_cast<size_t>(i)] = box.x0 + (i + 0.5) * box.w() / s - 0.5;
  }
  Array out(static_cast<long>(c) * s * s);
  const double* xp = x.data().data();
  struct Tap {
    int y0, x0;
    double wy, wx;
  };
  std::vector<Tap> taps(static_cast<size_t>(s) * s);
  for (int gy = 0; gy < s; ++gy)
    for (int gx = 0; gx < s; ++gx) {
      const double sy = ys[static_cast<size_t>(gy)], sx = xs[static_cast<size_t>(gx)];
      const double fy = std::floor(sy), fx = std::floor(sx);
      taps[static_cast<size_t>(gy) * s + gx] = {static_cast<int>(fy),
                                                static_cast<int>(fx), sy - fy,
                                                sx - fx};
    }
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = xp + static_cast<long>(ch) * hw;
    for (int gy = 0; gy < s; ++gy)
      for (int gx = 0; gx < s; ++gx) {
        const Tap& t = taps[static_cast<size_t>(gy) * s + gx];
        const double v00 = sample_or_zero(plane, h, w, t.y0, t.x0);
        const double v01 = sample_or_zero(plane, h, w, t.y0, t.x0 + 1);
        const double v10 = sample_or_zero(plane, h, w, t.y0 + 1, t.x0);
        const double v11 = sample_or_zero(plane, h, w, t.y0 + 1, t.x0 + 1);
        out[(static_cast<long>(ch) * s + gy) * s + gx] =
            (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) +
            t.wy * ((1 - t.wx) * v10 + t.wx * v11);
      }
  }
  auto xi = x.impl();
  return make_node({c, s, s}, std::move(out), {x},
                   [xi, c, h, w, hw, s, taps = std::move(taps)](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (int ch = 0; ch < c; ++ch) {
                       const long choff = static_cast<long>(ch) * hw;
                       for (int gy = 0; gy < s; ++gy)
                         for (int gx = 0; gx < s; ++gx) {
                           const Tap& t = taps[static_cast<size_t>(gy) * s + gx];
                           const double gv =
                               o.grad[(static_cast<long>(ch) * s + gy) * s + gx];
                           auto put = [&](int yy, int xx, double ww) {
                             if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
                             g[choff + static_cast<long>(yy) * w + xx] += gv * ww;
                           };
                           put(t.y0, t.x0, (1 - t.wy) * (1 - t.wx));
                           put(t.y0, t.x0 + 1, (1 - t.wy) * t.wx);
                           put(t.y0 + 1, t.x0, t.wy * (1 - t.wx));
                           put(t.y0 + 1, t.x0 + 1, t.wy * t.wx);
                         }
                     }
                     xi->accumulate(g);
                   });
}

Tensor avgpool_region(const Tensor& x, int y0, int x0, int y1, int x1) {
  TPR_CHECK(x.ndim() == 3, "avgpool_region: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  y0 = std::max(0, y0);
  x0 = std::max(0, x0);
  y1 = std::min(h, y1);
  x1 = std::min(w, x1);
  TPR_CHECK(y1 > y0 && x1 > x0, "avgpool_region: empty region after clamping");
  const double inv = 1.0 / (static_cast<double>(y1 - y0) * (x1 - x0));
  Array out(c);
  const double* xp = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0;
    const double* plane = xp + static_cast<long>(ch) * h * w;
    for (int y = y0; y < y1; ++y)
      for (int xx = x0; xx < x1; ++xx) acc += plane[static_cast<long>(y) * w + xx];
    out[ch] = acc * inv;
  }
  auto xi = x.impl();
  return make_node({c}, std::move(out), {x},
                   [xi, c, h, w, y0, x0, y1, x1, inv](const TensorImpl& o) {
                     Array g = Array::Zero(xi->value.size());
                     for (int ch = 0; ch < c; ++ch) {
                       const double gv = o.grad[ch] * inv;
                       for (int y = y0; y < y1; ++y)
                         for (int xx = x0; xx < x1; ++xx)
                           g[(static_cast<long>(ch) * h + y) * w + xx] += gv;
                     }
                     xi->accumulate(g);
                   });
}

}  // namespace tpr::ops

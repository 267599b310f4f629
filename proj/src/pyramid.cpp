#include "tpr/pyramid.hpp"

#include "tpr/ops.hpp"

namespace tpr {

namespace {

Tensor stem_conv(const Tensor& x, int cout, ParamStore& params,
                 const std::string& name, budget::FlopLedger* ledger) {
  const int cin = x.dim(0);
  Tensor& w = params.get(name, {cout, cin, 3, 3}, Init::fan_in_uniform(cin * 9));
  Tensor y = ops::relu(ops::conv2d(x, w, nullptr, /*stride=*/2));
  if (ledger)
    ledger->add_static(name, static_cast<double>(budget::conv_macs(
                                 3, cin, cout, y.dim(1), y.dim(2))));
  return y;
}

}  // namespace

FeaturePyramid build_pyramid(const Tensor& frame, const BackboneConfig& cfg,
                             ParamStore& params, budget::FlopLedger* ledger,
                             int frame_index) {
  TPR_CHECK(cfg.levels >= 2, "BackboneConfig: need at least 2 pyramid levels");
  TPR_CHECK(cfg.channels >= 4, "BackboneConfig: need at least 4 channels");
  TPR_CHECK(frame.ndim() == 3 && frame.dim(0) == cfg.in_channels,
            "build_pyramid: frame must be [" + std::to_string(cfg.in_channels) +
                ",H,W], got " + detail::format_shape(frame.shape()));
  const int h = frame.dim(1), w = frame.dim(2);
  TPR_CHECK(h % 8 == 0, "build_pyramid: H=" + std::to_string(h) +
                            " not divisible by the finest stride 8");
  TPR_CHECK(w % 8 == 0, "build_pyramid: W=" + std::to_string(w) +
                            " not divisible by the finest stride 8");

  // Stem: three stride-2 stages down to stride 8.
  Tensor t = stem_conv(frame, cfg.stem_channels, params, "backbone.stem1.w", ledger);
  t = stem_conv(t, cfg.channels, params, "backbone.stem2.w", ledger);
  t = stem_conv(t, cfg.channels, params, "backbone.stem3.w", ledger);

  std::vector<Tensor> trunk{t};
  for (int i = 1; i < cfg.levels; ++i)
    trunk.push_back(stem_conv(trunk.back(), cfg.channels, params,
                              "backbone.down" + std::to_string(i) + ".w",
                              ledger));

  // Top-down lateral fusion: coarsest projected, finer = lateral + upsampled.
  std::vector<Tensor> pyr(static_cast<size_t>(cfg.levels));
  for (int i = cfg.levels - 1; i >= 0; --i) {
    const Tensor& ti = trunk[static_cast<size_t>(i)];
    Tensor& lw = params.get("fpn.lat" + std::to_string(i) + ".w",
                            {cfg.channels, cfg.channels, 1, 1},
                            Init::fan_in_uniform(cfg.channels));
    Tensor lat = ops::conv2d(ti, lw);
    if (ledger)
      ledger->add_static("fpn.lat" + std::to_string(i),
                         static_cast<double>(budget::conv_macs(
                             1, cfg.channels, cfg.channels, ti.dim(1),
                             ti.dim(2))));
    if (i == cfg.levels - 1) {
      pyr[static_cast<size_t>(i)] = lat;
    } else {
      Tensor up = ops::resize_bilinear(pyr[static_cast<size_t>(i + 1)],
                                       ti.dim(1), ti.dim(2));
      pyr[static_cast<size_t>(i)] = ops::add(lat, up);
    }
  }

  FeaturePyramid out;
  out.frame_index = frame_index;
  out.channels = cfg.channels;
  out.levels = std::move(pyr);
  return out;
}

Tensor resize_to_scale(const Tensor& x, int scale_steps,
                       const std::vector<std::pair<int, int>>* up_targets) {
  if (scale_steps == 0) return x;
  Tensor t = x;
  if (scale_steps > 0) {
    for (int i = 0; i < scale_steps; ++i) t = ops::avgpool2x2(t);
    return t;
  }
  const int n = -scale_steps;
  if (up_targets)
    TPR_CHECK(static_cast<int>(up_targets->size()) == n,
              "resize_to_scale: expected " + std::to_string(n) +
                  " upsampling targets, got " +
                  std::to_string(up_targets->size()));
  for (int i = 0; i < n; ++i) {
    const int th = up_targets ? (*up_targets)[static_cast<size_t>(i)].first
                              : 2 * t.dim(1);
    const int tw = up_targets ? (*up_targets)[static_cast<size_t>(i)].second
                              : 2 * t.dim(2);
    t = ops::resize_bilinear(t, th, tw);
  }
  return t;
}

Tensor resize_between_strides(const Tensor& x, int from_stride, int to_stride) {
  TPR_CHECK(from_stride > 0 && to_stride > 0,
            "resize_between_strides: strides must be positive");
  int steps = 0;
  int a = from_stride, b = to_stride;
  if (a < b) {
    while (a < b && b % 2 == 0) {
      b /= 2;
      ++steps;
    }
  } else {
    while (b < a && a % 2 == 0) {
      a /= 2;
      --steps;
    }
  }
  TPR_CHECK(a == b, "resize_between_strides: scale ratio " +
                        std::to_string(from_stride) + " -> " +
                        std::to_string(to_stride) +
                        " is not a power of two");
  return resize_to_scale(x, steps);
}

}  // namespace tpr

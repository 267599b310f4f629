#pragma once

#include <utility>
#include <vector>

#include "tpr/budget.hpp"
#include "tpr/param_store.hpp"
#include "tpr/tensor.hpp"

namespace tpr {

struct BackboneConfig {
  int in_channels = 3;
  int stem_channels = 8;
  int channels = 16;  // common pyramid channel count C
  int levels = 4;
};

/// Per-frame multi-scale features, finest first. Level i sits at stride
/// 8 * 2^i relative to the frame; adjacent levels differ by a factor of two
/// in each spatial dimension (ceil division on odd sizes).
struct FeaturePyramid {
  int frame_index = -1;
  int channels = 0;
  std::vector<Tensor> levels;

  int count() const { return static_cast<int>(levels.size()); }
  std::pair<int, int> size(int i) const {
    return {levels[static_cast<size_t>(i)].dim(1),
            levels[static_cast<size_t>(i)].dim(2)};
  }
  int stride(int i) const { return 8 << i; }
};

/// Tiny trainable backbone + top-down lateral fusion. Bias-free convolutions
/// throughout, so an all-zero frame yields an all-zero pyramid.
FeaturePyramid build_pyramid(const Tensor& frame, const BackboneConfig& cfg,
                             ParamStore& params,
                             budget::FlopLedger* ledger = nullptr,
                             int frame_index = -1);

/// Move a map across 2^j scale steps: j > 0 applies j stride-2 mean-pool
/// reductions, j < 0 applies -j bilinear x2 upsamplings. `up_targets`, when
/// given, pins the exact output size of each upsampling step (odd-size
/// pyramids record their original sizes).
Tensor resize_to_scale(const Tensor& x, int scale_steps,
                       const std::vector<std::pair<int, int>>* up_targets =
                           nullptr);

/// Convenience over strides (both powers of two times a common factor).
Tensor resize_between_strides(const Tensor& x, int from_stride, int to_stride);

}  // namespace tpr

#pragma once

#include <vector>

#include "tpr/synth.hpp"

namespace tpr::metrics {

/// One instance over a clip: a mask per frame (empty vector = absent).
struct Tube {
  int cls = 0;
  double score = 1.0;
  std::vector<std::vector<std::uint8_t>> masks;
};

/// Spatio-temporal IoU: per-frame intersections and unions summed over the
/// clip before dividing.
double tube_iou(const Tube& a, const Tube& b);

struct EvalResult {
  double st_map = 0;              // AP over IoU thresholds 0.5:0.05:0.95,
                                  // averaged over classes with ground truth
  double association_accuracy = 0;  // consecutive-frame GT links kept intact
  double mean_mask_iou = 0;       // per-frame matched mask IoU
  int links = 0;
  int correct_links = 0;
};

/// pred_clips[c] / gt_clips[c] hold the tubes of clip c. Prediction identity
/// is the tube's position in its clip vector, so the metric is invariant to
/// id relabeling.
EvalResult evaluate(const std::vector<std::vector<Tube>>& pred_clips,
                    const std::vector<std::vector<Tube>>& gt_clips);

std::vector<Tube> gt_tubes(const synth::ClipGroundTruth& gt);

}  // namespace tpr::metrics

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpr/tensor.hpp"

namespace tpr::synth {

struct SynthConfig {
  int video_count = 200;
  int frames_per_clip = 8;
  int frame_h = 96;
  int frame_w = 96;
  int min_shapes = 1;
  int max_shapes = 4;
  double scale_change_rate = 1.0;  // 1.0 allows up to a 3x size change
  double overlap_bias = 0.8;       // probability a shape pair is steered to cross
  double motion_speed = 3.0;       // pixels per frame
  std::uint64_t seed = 1;
};

/// Shape classes; instances of a class share the same color, so appearance
/// alone cannot separate two overlapping same-class instances.
enum class ShapeKind { Circle = 0, Square = 1, Triangle = 2 };
inline constexpr int kNumClasses = 3;

struct InstanceFrameGT {
  bool visible = false;
  std::vector<std::uint8_t> mask;  // H*W modal mask (occluders win)
  int y0 = -1, x0 = -1, y1 = -1, x1 = -1;  // tight half-open box
};

struct ClipGroundTruth {
  int frames = 0, h = 0, w = 0;
  std::vector<int> instance_ids;      // 1-based, stable across the clip
  std::vector<int> instance_classes;  // ShapeKind as int
  // per_frame[t][i] describes instance i at frame t
  std::vector<std::vector<InstanceFrameGT>> per_frame;
  bool overlap_heavy = false;  // some pair of shapes crosses during the clip

  int instances() const { return static_cast<int>(instance_ids.size()); }
};

struct Clip {
  std::vector<Tensor> frames;  // [3,H,W], values in [0,1]
  ClipGroundTruth gt;
};

/// Deterministic generation: shapes translate and rescale smoothly over a
/// textured-noise background; trajectories are steered to cross with
/// probability `overlap_bias`. Every instance is visible in at least two
/// frames (regenerated with a bumped sub-seed otherwise).
Clip gen_clip(const SynthConfig& cfg, std::uint64_t clip_index);

/// Dataset directory: one frames tensor + one masks tensor per clip and a
/// JSON index describing instances, boxes, and the generator config.
void write_dataset(const std::string& dir, const SynthConfig& cfg,
                   int clip_count);
std::vector<Clip> read_dataset(const std::string& dir);

}  // namespace tpr::synth

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tpr/budget.hpp"
#include "tpr/gate.hpp"
#include "tpr/pyramid.hpp"

namespace tpr::dacr {

struct DacrConfig {
  int channels = 16;
  /// Separate cell parameters per branch (query/reference). Shared weights
  /// are a config alternative.
  bool shared_branch_params = false;
  /// One shared inner gate multiplying both branches (default); per-branch
  /// gates are the config alternative.
  bool per_branch_gates = false;
};

/// Per-pixel, per-tap sampling offsets for one frame, in pixels at the
/// feature's own scale: 18 channels, (dy, dx) per 3x3 tap in row-major order.
struct OffsetField {
  Tensor field;  // [18,H,W]
};

struct DacrScaleOutputs {
  Tensor aligned_q, aligned_r;  // deformable-sampled features
  Tensor merged;                // inner-gated, 1x1-fused pair
  Tensor fused;                 // outer blend of query and merged
  GateMap inner;                // full-resolution inner gate (shared-gate mode)
  GateMap outer;
};

/// One 3x3 convolution over the concatenated pair emits both offset fields
/// (query first). Zero-initialized so alignment starts as the identity.
std::pair<OffsetField, OffsetField> predict_offsets(const Tensor& x_q,
                                                    const Tensor& x_r,
                                                    ParamStore& params,
                                                    const std::string& prefix);

/// Shared inner gate on the aligned pair, gated per-branch 3x3 cells, then a
/// 1x1 fusion of the two gated branches. The cells run as masked
/// convolutions on the gate's positive support when `sparse`.
Tensor inner_route(const Tensor& aligned_q, const Tensor& aligned_r,
                   ParamStore& params, const std::string& prefix,
                   const DacrConfig& cfg, budget::FlopLedger* ledger,
                   bool sparse, GateMap* inner_out = nullptr);

/// Outer fusion: fused = G * x_q + (1 - G) * merged, G = sigmoid conv of the
/// concatenated pair.
std::pair<Tensor, GateMap> outer_fuse(const Tensor& x_q, const Tensor& merged,
                                      ParamStore& params,
                                      const std::string& prefix);

/// Full DACR pass: offsets -> deformable sampling of both frames -> inner
/// routing -> outer fusion, independently per scale. Inner-gate budget terms
/// are recorded into the ledger; sparse cell execution follows the ledger
/// mode (hard = masked convolution).
FeaturePyramid dacr_forward(const FeaturePyramid& pyr_q,
                            const FeaturePyramid& pyr_r, ParamStore& params,
                            budget::FlopLedger& ledger, const DacrConfig& cfg,
                            std::vector<DacrScaleOutputs>* debug = nullptr);

/// MACs per output location of one inner-gated cell pass (two 3x3 branch
/// convolutions plus the 1x1 merge).
inline double inner_cell_cost_per_loc(int channels) {
  const double c = channels;
  return 2.0 * 9.0 * c * c + 2.0 * c * c;
}

}  // namespace tpr::dacr

#pragma once

#include <string>
#include <vector>

#include "tpr/ops.hpp"
#include "tpr/param_store.hpp"
#include "tpr/tensor.hpp"

namespace tpr {

enum class GateKind { Inner, Outer, Path };

/// Per-pixel gating factors. Inner and path gates use max(0, tanh(v)) so a
/// closed pixel is an exact zero and its work is skippable; the outer gate is
/// a sigmoid blend weight in (0,1).
struct GateMap {
  Tensor values;  // [1,H,W]
  GateKind kind = GateKind::Path;

  int h() const { return values.dim(1); }
  int w() const { return values.dim(2); }
  ops::SpatialMask positive() const {
    ops::SpatialMask m;
    m.h = h();
    m.w = w();
    m.on.resize(static_cast<size_t>(m.h) * m.w);
    for (long i = 0; i < values.numel(); ++i) m.on[static_cast<size_t>(i)] =
        values[i] > 0.0 ? 1 : 0;
    return m;
  }
};

/// Gate pre-activations start at +0.5 (open) so routing does not begin dead.
/// Gate convolutions carry only this learned bias; feature convolutions in
/// this project are bias-free.
inline constexpr double kGateBiasInit = 0.5;

/// Inner gate: stride-2 3x3 conv on the concatenated pair, 2x max pooling at
/// stride 1, clipped-tanh, then nearest upsampling back to (out_h, out_w).
GateMap make_inner_gate(const Tensor& pair_features, ParamStore& params,
                        const std::string& prefix, int out_h, int out_w);

/// Path gates for a routing cell: one 3x3 conv emitting n_dirs channels at
/// the node's own scale, split and clipped-tanh'd per direction.
std::vector<GateMap> make_path_gates(const Tensor& x, int n_dirs,
                                     ParamStore& params,
                                     const std::string& prefix);

/// Outer gate: sigmoid of a single-channel 3x3 conv over the concatenation.
GateMap make_outer_gate(const Tensor& pair_features, ParamStore& params,
                        const std::string& prefix);

}  // namespace tpr

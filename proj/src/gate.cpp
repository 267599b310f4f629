#include "tpr/gate.hpp"

namespace tpr {

GateMap make_inner_gate(const Tensor& pair_features, ParamStore& params,
                        const std::string& prefix, int out_h, int out_w) {
  const int cin = pair_features.dim(0);
  Tensor& w = params.get(prefix + ".w", {1, cin, 3, 3},
                         Init::fan_in_uniform(cin * 9));
  Tensor& b = params.get(prefix + ".b", {1}, Init::constant(kGateBiasInit));
  Tensor pre = ops::conv2d(pair_features, w, &b, /*stride=*/2);
  Tensor pooled = ops::maxpool2d(pre, /*k=*/2, /*stride=*/1);
  Tensor half = ops::clipped_tanh(pooled);
  return GateMap{ops::upsample_nearest(half, out_h, out_w), GateKind::Inner};
}

std::vector<GateMap> make_path_gates(const Tensor& x, int n_dirs,
                                     ParamStore& params,
                                     const std::string& prefix) {
  TPR_CHECK(n_dirs >= 1, "make_path_gates: need at least one direction");
  const int cin = x.dim(0);
  Tensor& w = params.get(prefix + ".w", {n_dirs, cin, 3, 3},
                         Init::fan_in_uniform(cin * 9));
  Tensor& b = params.get(prefix + ".b", {n_dirs}, Init::constant(kGateBiasInit));
  Tensor pre = ops::conv2d(x, w, &b);
  std::vector<GateMap> gates;
  gates.reserve(static_cast<size_t>(n_dirs));
  for (int d = 0; d < n_dirs; ++d)
    gates.push_back(
        {ops::clipped_tanh(ops::slice_channels(pre, d, d + 1)), GateKind::Path});
  return gates;
}

GateMap make_outer_gate(const Tensor& pair_features, ParamStore& params,
                        const std::string& prefix) {
  const int cin = pair_features.dim(0);
  Tensor& w = params.get(prefix + ".w", {1, cin, 3, 3},
                         Init::fan_in_uniform(cin * 9));
  Tensor& b = params.get(prefix + ".b", {1}, Init::constant(0.0));
  return GateMap{ops::sigmoid(ops::conv2d(pair_features, w, &b)),
                 GateKind::Outer};
}

}  // namespace tpr

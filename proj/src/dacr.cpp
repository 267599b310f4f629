#include "tpr/dacr.hpp"

#include "tpr/ops.hpp"

namespace tpr::dacr {

using ops::SpatialMask;

std::pair<OffsetField, OffsetField> predict_offsets(const Tensor& x_q,
                                                    const Tensor& x_r,
                                                    ParamStore& params,
                                                    const std::string& prefix) {
  TPR_CHECK(x_q.shape() == x_r.shape(),
            "predict_offsets: query " + detail::format_shape(x_q.shape()) +
                " and reference " + detail::format_shape(x_r.shape()) +
                " must share a scale");
  const int c2 = 2 * x_q.dim(0);
  Tensor pair = ops::concat_channels(x_q, x_r);
  Tensor& w = params.get(prefix + ".offset.w", {36, c2, 3, 3}, Init::zero());
  Tensor both = ops::conv2d(pair, w);
  return {OffsetField{ops::slice_channels(both, 0, 18)},
          OffsetField{ops::slice_channels(both, 18, 36)}};
}

Tensor inner_route(const Tensor& aligned_q, const Tensor& aligned_r,
                   ParamStore& params, const std::string& prefix,
                   const DacrConfig& cfg, budget::FlopLedger* ledger,
                   bool sparse, GateMap* inner_out) {
  TPR_CHECK(aligned_q.shape() == aligned_r.shape(),
            "inner_route: branch shapes differ");
  const int c = aligned_q.dim(0);
  const int h = aligned_q.dim(1), w = aligned_q.dim(2);
  Tensor pair = ops::concat_channels(aligned_q, aligned_r);

  GateMap gate_q = make_inner_gate(pair, params, prefix + ".inner_gate", h, w);
  GateMap gate_r = cfg.per_branch_gates
                       ? make_inner_gate(pair, params, prefix + ".inner_gate_r",
                                         h, w)
                       : gate_q;
  if (inner_out) *inner_out = gate_q;

  SpatialMask mask_q = sparse ? gate_q.positive() : SpatialMask{};
  SpatialMask mask_r = sparse ? gate_r.positive() : SpatialMask{};

  const std::string rprefix = cfg.shared_branch_params ? ".cell_q" : ".cell_r";
  Tensor& wq = params.get(prefix + ".cell_q.w", {c, c, 3, 3},
                          Init::fan_in_uniform(c * 9));
  Tensor& wr = params.get(prefix + rprefix + ".w", {c, c, 3, 3},
                          Init::fan_in_uniform(c * 9));
  Tensor hq = ops::relu(ops::conv2d(aligned_q, wq, nullptr, 1, -1,
                                    sparse ? &mask_q : nullptr));
  Tensor hr = ops::relu(ops::conv2d(aligned_r, wr, nullptr, 1, -1,
                                    sparse ? &mask_r : nullptr));
  Tensor yq = ops::mul_gate(hq, gate_q.values);
  Tensor yr = ops::mul_gate(hr, gate_r.values);

  Tensor& wm = params.get(prefix + ".merge.w", {c, 2 * c, 1, 1},
                          Init::fan_in_uniform(2 * c));
  Tensor merged = ops::conv2d(ops::concat_channels(yq, yr), wm, nullptr, 1, -1,
                              sparse ? &mask_q : nullptr);

  if (ledger) {
    if (cfg.per_branch_gates) {
      const double branch = 9.0 * c * c + 1.0 * c * c;  // cell + half of merge
      ledger->record(prefix + ".inner_q", gate_q, branch, 3, "dacr");
      ledger->record(prefix + ".inner_r", gate_r, branch, 3, "dacr");
    } else {
      ledger->record(prefix + ".inner", gate_q, inner_cell_cost_per_loc(c), 3,
                     "dacr");
    }
  }
  return merged;
}

std::pair<Tensor, GateMap> outer_fuse(const Tensor& x_q, const Tensor& merged,
                                      ParamStore& params,
                                      const std::string& prefix) {
  TPR_CHECK(x_q.shape() == merged.shape(), "outer_fuse: shapes differ");
  GateMap g = make_outer_gate(ops::concat_channels(x_q, merged), params,
                              prefix + ".outer");
  return {ops::convex_blend(g.values, x_q, merged), g};
}

FeaturePyramid dacr_forward(const FeaturePyramid& pyr_q,
                            const FeaturePyramid& pyr_r, ParamStore& params,
                            budget::FlopLedger& ledger, const DacrConfig& cfg,
                            std::vector<DacrScaleOutputs>* debug) {
  TPR_CHECK(pyr_q.count() == pyr_r.count(),
            "dacr_forward: pyramids have different level counts (" +
                std::to_string(pyr_q.count()) + " vs " +
                std::to_string(pyr_r.count()) + ")");
  const bool sparse = ledger.mode() == budget::LedgerMode::Hard;

  FeaturePyramid out;
  out.frame_index = pyr_q.frame_index;
  out.channels = pyr_q.channels;
  for (int s = 0; s < pyr_q.count(); ++s) {
    const Tensor& xq = pyr_q.levels[static_cast<size_t>(s)];
    const Tensor& xr = pyr_r.levels[static_cast<size_t>(s)];
    TPR_CHECK(xq.shape() == xr.shape(),
              "dacr_forward: level " + std::to_string(s) + " shapes differ: " +
                  detail::format_shape(xq.shape()) + " vs " +
                  detail::format_shape(xr.shape()));
    const std::string prefix = "dacr.s" + std::to_string(s);
    const int c = xq.dim(0), h = xq.dim(1), w = xq.dim(2);

    auto [off_q, off_r] = predict_offsets(xq, xr, params, prefix);
    Tensor& sq = params.get(prefix + ".sample_q.w", {9}, Init::delta_center9());
    Tensor& sr = params.get(prefix + ".sample_r.w", {9}, Init::delta_center9());
    Tensor aq = ops::deform_sample(xq, off_q.field, sq);
    Tensor ar = ops::deform_sample(xr, off_r.field, sr);

    GateMap inner;
    Tensor merged =
        inner_route(aq, ar, params, prefix, cfg, &ledger, sparse, &inner);
    auto [fused, outer] = outer_fuse(xq, merged, params, prefix);

    // Unconditional convolutions at this scale.
    ledger.add_static(prefix + ".offset",
                      static_cast<double>(budget::conv_macs(3, 2 * c, 36, h, w)));
    ledger.add_static(prefix + ".inner_gate",
                      static_cast<double>(budget::conv_macs(
                          3, 2 * c, 1, (h + 1) / 2, (w + 1) / 2)));
    ledger.add_static(prefix + ".outer",
                      static_cast<double>(budget::conv_macs(3, 2 * c, 1, h, w)));

    if (debug)
      debug->push_back({aq, ar, merged, fused, inner, outer});
    out.levels.push_back(std::move(fused));
  }
  return out;
}

}  // namespace tpr::dacr

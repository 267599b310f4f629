#include "tpr/budget.hpp"

#include <algorithm>
#include <cmath>

namespace tpr::budget {

void FlopLedger::record(const std::string& layer, const GateMap& gate,
                        double cost_per_loc, int receptive_field,
                        const std::string& group) {
  TPR_CHECK(receptive_field >= 1 && receptive_field % 2 == 1,
            "FlopLedger::record: receptive field must be odd, got " +
                std::to_string(receptive_field));
  TPR_CHECK(gate.kind != GateKind::Outer,
            "FlopLedger::record: outer gates weight information, not compute");
  const int h = gate.h(), w = gate.w();

  LedgerEntry e;
  e.layer = layer;
  e.group = group;
  e.cost_per_loc = cost_per_loc;
  e.receptive_field = receptive_field;
  e.c = static_cast<double>(h) * w * cost_per_loc;

  // Hard budget: count of positions inside the max-pooled positive support.
  const int r = receptive_field / 2;
  ops::SpatialMask pos = gate.positive();
  long expanded = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hit = false;
      for (int yy = std::max(0, y - r); !hit && yy < std::min(h, y + r + 1); ++yy)
        for (int xx = std::max(0, x - r); !hit && xx < std::min(w, x + r + 1);
             ++xx)
          hit = pos.at(yy, xx);
      expanded += hit;
    }
  e.b_hard = static_cast<double>(expanded) * cost_per_loc;

  if (mode_ == LedgerMode::Soft) {
    // Soft budget: gate values spread over the same expanded support, so the
    // term stays differentiable w.r.t. the gate pre-activations.
    e.b_soft =
        ops::scale(ops::sum(ops::maxfilter(gate.values, receptive_field)),
                   cost_per_loc);
  }
  entries_.push_back(std::move(e));
}

void FlopLedger::add_static(const std::string& layer, double macs) {
  (void)layer;
  static_macs_ += macs;
}

Tensor FlopLedger::budget_loss() const {
  TPR_CHECK(!entries_.empty(),
            "budget_loss on an empty ledger: no gates were recorded");
  double total_c = 0;
  for (const auto& e : entries_) total_c += e.c;
  if (mode_ == LedgerMode::Hard) {
    double b = 0;
    for (const auto& e : entries_) b += e.b_hard;
    return Tensor::scalar(b / total_c);
  }
  Tensor acc = entries_[0].b_soft;
  for (size_t i = 1; i < entries_.size(); ++i)
    acc = ops::add(acc, entries_[i].b_soft);
  return ops::scale(acc, 1.0 / total_c);
}

double FlopLedger::budget_ratio() const { return budget_loss().item(); }

double FlopLedger::dynamic_macs() const {
  double b = 0;
  for (const auto& e : entries_) b += e.b_hard;
  return b;
}

double FlopLedger::dynamic_macs(const std::string& group) const {
  double b = 0;
  for (const auto& e : entries_)
    if (e.group == group) b += e.b_hard;
  return b;
}

void FlopLedger::reset() {
  entries_.clear();
  static_macs_ = 0;
}

Tensor total_loss(const Tensor& task, const Tensor& budget,
                  const LossConfig& cfg) {
  TPR_CHECK(cfg.lambda1 >= 0 && cfg.lambda2 >= 0,
            "total_loss: loss weights must be non-negative");
  TPR_CHECK(std::isfinite(task.item()) && std::isfinite(budget.item()),
            "total_loss: non-finite loss input");
  return ops::add(ops::scale(task, cfg.lambda1), ops::scale(budget, cfg.lambda2));
}

FlopsReport flops_report(std::vector<double> per_clip_macs) {
  TPR_CHECK(!per_clip_macs.empty(), "flops_report: need at least one clip");
  FlopsReport r;
  r.clips = static_cast<int>(per_clip_macs.size());
  // Sorting makes the average independent of clip processing order.
  std::sort(per_clip_macs.begin(), per_clip_macs.end());
  r.min_macs = per_clip_macs.front();
  r.max_macs = per_clip_macs.back();
  double s = 0;
  for (double v : per_clip_macs) s += v;
  r.avg_macs = s / r.clips;
  return r;
}

}  // namespace tpr::budget

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpr/gate.hpp"
#include "tpr/tensor.hpp"

namespace tpr::budget {

inline std::uint64_t conv_macs(int k, int cin, int cout, int out_h, int out_w) {
  return static_cast<std::uint64_t>(k) * k * cin * cout *
         static_cast<std::uint64_t>(out_h) * out_w;
}

/// Soft: budget terms are recorded as differentiable tape scalars built from
/// max-filtered gate values (training). Hard: terms count the expanded
/// positive support (inference / reporting).
enum class LedgerMode { Soft, Hard };

struct LedgerEntry {
  std::string layer;
  std::string group;  // "dacr" or "space"
  double cost_per_loc = 0;
  int receptive_field = 1;
  double b_hard = 0;  // count(expanded positive support) * cost
  double c = 0;       // H * W * cost
  Tensor b_soft;      // defined in Soft mode only
};

/// Per-forward-pass FLOP accounting. Gated layers are recorded through
/// `record`; unconditional convolutions through `add_static`. Adds are
/// commutative, one ledger per forward pass.
class FlopLedger {
 public:
  explicit FlopLedger(LedgerMode mode = LedgerMode::Soft) : mode_(mode) {}

  LedgerMode mode() const { return mode_; }

  /// B over the receptive-field-expanded positive support of the gate.
  /// The expansion is a stride-1 max pool with an odd window.
  void record(const std::string& layer, const GateMap& gate,
              double cost_per_loc, int receptive_field,
              const std::string& group = "space");
  void add_static(const std::string& layer, double macs);

  bool empty() const { return entries_.empty(); }
  const std::vector<LedgerEntry>& entries() const { return entries_; }

  /// Eq-8 style global ratio sum_l B^l / sum_l C^l as a tape scalar
  /// (differentiable in Soft mode). Errors on an empty ledger.
  Tensor budget_loss() const;
  double budget_ratio() const;

  double dynamic_macs() const;
  double dynamic_macs(const std::string& group) const;
  double static_macs() const { return static_macs_; }
  double total_macs() const { return static_macs_ + dynamic_macs(); }

  void reset();

 private:
  LedgerMode mode_;
  std::vector<LedgerEntry> entries_;
  double static_macs_ = 0;
};

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.5;
};

/// Eq. 9: lambda1 * task + lambda2 * budget.
Tensor total_loss(const Tensor& task, const Tensor& budget,
                  const LossConfig& cfg);

struct FlopsReport {
  double min_macs = 0;
  double avg_macs = 0;
  double max_macs = 0;
  int clips = 0;
};

/// Min/avg/max over per-clip MAC totals; invariant to clip order.
FlopsReport flops_report(std::vector<double> per_clip_macs);

}  // namespace tpr::budget

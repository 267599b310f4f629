#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tpr/ops.hpp"
#include "tpr/param_store.hpp"
#include "tpr/pyramid.hpp"

namespace tpr::tracker {

struct TrackerConfig {
  int embed_dim = 32;
  int hidden = 32;
  /// 0 = overwrite stored embeddings on match; otherwise exponential moving
  /// average weight of the old embedding.
  double memory_ema = 0.0;
  /// Box max-side upper bound per pyramid level for feature pooling.
  std::vector<double> level_max_side = {24.0, 48.0, 96.0, 1e9};
};

/// Stored embeddings of previously identified instances. k=0 in the
/// assignment distribution means "new track".
struct TrackMemory {
  struct Entry {
    int id = 0;
    Tensor embedding;
    int last_seen = -1;
  };
  std::vector<Entry> entries;
  int next_id = 1;

  int size() const { return static_cast<int>(entries.size()); }
};

int level_for_size(double max_side, const std::vector<double>& bounds);

/// Average-pool the refined pyramid over the box region at the level
/// matching the box size, then a two-layer perceptron. No normalization:
/// assignment uses raw dot products.
Tensor embed(const FeaturePyramid& pyr, const ops::BoxF& box_px,
             ParamStore& params, const TrackerConfig& cfg);

/// Assignment distribution over {new track, existing instances}: softmax of
/// the memory dot products with an implicit zero logit for k=0, computed
/// with max-logit subtraction. Output has length memory.size() + 1.
Tensor assign_probs(const Tensor& f, const TrackMemory& memory);

/// -log p(gt); differentiable through assign_probs and embed.
Tensor tracking_loss(const Tensor& dist, int gt);

struct AssocRecord {
  int frame = 0;
  int candidate = 0;
  int chosen_k = 0;  // 0 = new track
  int assigned_id = 0;
  double prob = 0;  // renormalized over the classes still available
};

/// Greedy per-candidate argmax in descending score order, already-claimed
/// ids excluded (distribution renormalized over the rest). k=0 mints a fresh
/// id; matches overwrite the stored embedding. Ties break toward the lowest
/// id. Returns assigned ids in input order.
std::vector<int> associate(const std::vector<Tensor>& embeddings,
                           const std::vector<double>& scores,
                           TrackMemory& memory, int frame_index,
                           const TrackerConfig& cfg,
                           std::vector<AssocRecord>* log = nullptr);

void write_assoc_log(std::ostream& os, const std::vector<AssocRecord>& log);

}  // namespace tpr::tracker

#include "tpr/tracker.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace tpr::tracker {

int level_for_size(double max_side, const std::vector<double>& bounds) {
  for (size_t i = 0; i < bounds.size(); ++i)
    if (max_side < bounds[i]) return static_cast<int>(i);
  return static_cast<int>(bounds.size()) - 1;
}

Tensor embed(const FeaturePyramid& pyr, const ops::BoxF& box_px,
             ParamStore& params, const TrackerConfig& cfg) {
  TPR_CHECK(box_px.h() > 0 && box_px.w() > 0, "embed: empty box");
  int level = level_for_size(std::max(box_px.h(), box_px.w()), cfg.level_max_side);
  level = std::min(level, pyr.count() - 1);
  const Tensor& feat = pyr.levels[static_cast<size_t>(level)];
  const double stride = pyr.stride(level);
  const int y0 = static_cast<int>(std::floor(box_px.y0 / stride));
  const int x0 = static_cast<int>(std::floor(box_px.x0 / stride));
  const int y1 = static_cast<int>(std::ceil(box_px.y1 / stride));
  const int x1 = static_cast<int>(std::ceil(box_px.x1 / stride));
  Tensor pooled = ops::avgpool_region(feat, y0, x0, y1, x1);

  const int c = feat.dim(0);
  Tensor& w1 = params.get("track.fc1.w", {cfg.hidden, c}, Init::fan_in_uniform(c));
  Tensor& b1 = params.get("track.fc1.b", {cfg.hidden}, Init::zero());
  Tensor& w2 = params.get("track.fc2.w", {cfg.embed_dim, cfg.hidden},
                          Init::fan_in_uniform(cfg.hidden));
  Tensor& b2 = params.get("track.fc2.b", {cfg.embed_dim}, Init::zero());
  return ops::linear(ops::relu(ops::linear(pooled, w1, &b1)), w2, &b2);
}

Tensor assign_probs(const Tensor& f, const TrackMemory& memory) {
  if (memory.entries.empty()) return Tensor::scalar(1.0);
  std::vector<Tensor> logits;
  logits.reserve(memory.entries.size());
  for (const auto& e : memory.entries) {
    TPR_CHECK(e.embedding.shape() == f.shape(),
              "assign_probs: embedding dim mismatch with memory entry id " +
                  std::to_string(e.id));
    logits.push_back(ops::dot(f, e.embedding));
  }
  return ops::softmax_zero(ops::stack_scalars(logits));
}

Tensor tracking_loss(const Tensor& dist, int gt) {
  TPR_CHECK(gt >= 0 && gt < dist.dim(0),
            "tracking_loss: label " + std::to_string(gt) +
                " outside distribution of length " + std::to_string(dist.dim(0)));
  return ops::scale(ops::log_op(ops::pick(dist, gt)), -1.0);
}

std::vector<int> associate(const std::vector<Tensor>& embeddings,
                           const std::vector<double>& scores,
                           TrackMemory& memory, int frame_index,
                           const TrackerConfig& cfg,
                           std::vector<AssocRecord>* log) {
  TPR_CHECK(embeddings.size() == scores.size(),
            "associate: embeddings/scores length mismatch");
  const int n = static_cast<int>(embeddings.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });

  // Assignment distributions are computed against the frame-entry snapshot;
  // ids minted within the frame are excluded by construction.
  const std::vector<TrackMemory::Entry> snapshot = memory.entries;
  std::vector<bool> claimed(snapshot.size(), false);
  std::vector<int> ids(static_cast<size_t>(n), 0);

  for (int oi = 0; oi < n; ++oi) {
    const int ci = order[static_cast<size_t>(oi)];
    TrackMemory snap_mem;
    snap_mem.entries = snapshot;
    Tensor dist = assign_probs(embeddings[static_cast<size_t>(ci)], snap_mem);

    double denom = dist[0];
    for (size_t k = 0; k < snapshot.size(); ++k)
      if (!claimed[k]) denom += dist[static_cast<long>(k) + 1];

    // argmax over the still-available classes; ties go to the lowest id,
    // with "new track" last.
    int best_k = 0;
    double best_p = dist[0];
    for (size_t k = 0; k < snapshot.size(); ++k) {
      if (claimed[k]) continue;
      const double p = dist[static_cast<long>(k) + 1];
      if (p > best_p) {
        best_p = p;
        best_k = static_cast<int>(k) + 1;
      } else if (p == best_p && best_k == 0) {
        best_k = static_cast<int>(k) + 1;
      }
    }

    int assigned;
    if (best_k == 0) {
      assigned = memory.next_id++;
      memory.entries.push_back(
          {assigned, embeddings[static_cast<size_t>(ci)], frame_index});
    } else {
      const int mem_idx = best_k - 1;
      claimed[static_cast<size_t>(mem_idx)] = true;
      assigned = snapshot[static_cast<size_t>(mem_idx)].id;
      for (auto& e : memory.entries) {
        if (e.id != assigned) continue;
        if (cfg.memory_ema > 0) {
          Array blended = cfg.memory_ema * e.embedding.data() +
                          (1.0 - cfg.memory_ema) *
                              embeddings[static_cast<size_t>(ci)].data();
          e.embedding = Tensor::from_array(e.embedding.shape(), std::move(blended));
        } else {
          e.embedding = embeddings[static_cast<size_t>(ci)];
        }
        e.last_seen = frame_index;
      }
    }
    ids[static_cast<size_t>(ci)] = assigned;
    if (log)
      log->push_back({frame_index, ci, best_k, assigned,
                      denom > 0 ? best_p / denom : 1.0});
  }
  return ids;
}

void write_assoc_log(std::ostream& os, const std::vector<AssocRecord>& log) {
  for (const AssocRecord& r : log) {
    nlohmann::json j;
    j["frame"] = r.frame;
    j["candidate"] = r.candidate;
    j["chosen_k"] = r.chosen_k;
    j["id"] = r.assigned_id;
    j["prob"] = r.prob;
    os << j.dump() << "\n";
  }
}

}  // namespace tpr::tracker

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpr/budget.hpp"
#include "tpr/gate.hpp"
#include "tpr/pyramid.hpp"

namespace tpr::cpr {

enum class SpaceKind { Cpr, FullRouting, FullAlign, TopDown };

std::string kind_name(SpaceKind kind);
SpaceKind kind_from_name(const std::string& name);

/// Transfer direction of a gated cell output. Up moves toward the coarser
/// neighbor scale, Down toward the finer one, Keep stays at the node's scale
/// (the terminal Keep feeds the level's output accumulator).
enum class Dir { Up, Keep, Down };

struct CellEdge {
  Dir dir = Dir::Keep;
  int target = -1;  // node index; -1 = level output accumulator (Keep only)
};

/// A routing cell at (level, depth). The cell op set is {3x3 conv + relu,
/// identity}; each outgoing edge carries its own path gate.
struct CellNode {
  int level = 0;
  int depth = 1;
  std::vector<CellEdge> edges;
};

struct AlignPair {
  int ref_level = 0;
  int query_level = 0;
};

struct RoutingSpace {
  SpaceKind kind = SpaceKind::Cpr;
  int levels = 0;
  std::vector<int> depths;
  std::vector<CellNode> nodes;   // topologically ordered (grid kinds)
  std::vector<AlignPair> pairs;  // full_align only

  std::string to_text() const;
  static RoutingSpace from_text(const std::string& text);
};

/// cpr: lower-triangular grid, transfers keep/up (finer feeds coarser).
/// full_routing: every level at max(depths) with keep/up/down transfers.
/// full_align: no grid; pairwise gated alignment cells from every reference
/// level onto every other query level. top_down: cpr mirrored, keep/down.
RoutingSpace build_space(SpaceKind kind, int levels, std::vector<int> depths);

/// Evaluate the space over a pyramid of DACR outputs. Each node input is the
/// sum of incoming gated transfers plus, at depth 1, the pyramid level; the
/// refined level is the original feature plus the terminal node's gated
/// output (residual identity when every gate is closed). `eval_order`, when
/// given, must be a topological permutation of the nodes (cycle check).
FeaturePyramid route_pyramid(const RoutingSpace& space,
                             const FeaturePyramid& pyr, ParamStore& params,
                             budget::FlopLedger& ledger,
                             const std::vector<int>* eval_order = nullptr);

/// MACs of one 3x3 C->C cell over an HxW map.
inline std::uint64_t cell_macs(int channels, int h, int w) {
  return budget::conv_macs(3, channels, channels, h, w);
}

/// Exact worst-case MAC count of the space's own machinery (cells and their
/// gate convolutions) with every gate open. Elementwise ops and resizes are
/// not counted; the per-scale DACR stage is common to all kinds and excluded.
std::uint64_t static_cost(const RoutingSpace& space,
                          const std::vector<std::pair<int, int>>& level_sizes,
                          int channels);

}  // namespace tpr::cpr

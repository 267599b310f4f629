#include "tpr/cpr.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "tpr/ops.hpp"

namespace tpr::cpr {

std::string kind_name(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Cpr:
      return "cpr";
    case SpaceKind::FullRouting:
      return "full_routing";
    case SpaceKind::FullAlign:
      return "full_align";
    case SpaceKind::TopDown:
      return "top_down";
  }
  return "cpr";
}

SpaceKind kind_from_name(const std::string& name) {
  if (name == "cpr") return SpaceKind::Cpr;
  if (name == "full_routing") return SpaceKind::FullRouting;
  if (name == "full_align") return SpaceKind::FullAlign;
  if (name == "top_down") return SpaceKind::TopDown;
  throw Error("unknown routing space kind '" + name + "'");
}

namespace {

const char* dir_name(Dir d) {
  switch (d) {
    case Dir::Up:
      return "up";
    case Dir::Keep:
      return "keep";
    case Dir::Down:
      return "down";
  }
  return "keep";
}

Dir dir_from_name(const std::string& s) {
  if (s == "up") return Dir::Up;
  if (s == "keep") return Dir::Keep;
  if (s == "down") return Dir::Down;
  throw Error("unknown transfer direction '" + s + "'");
}

void topo_sort(RoutingSpace& space) {
  const int n = static_cast<int>(space.nodes.size());
  std::vector<int> indeg(static_cast<size_t>(n), 0);
  for (const CellNode& node : space.nodes)
    for (const CellEdge& e : node.edges)
      if (e.target >= 0) ++indeg[static_cast<size_t>(e.target)];

  // Deterministic Kahn order with (depth, level) tie-break.
  auto before = [&](int a, int b) {
    const CellNode& na = space.nodes[static_cast<size_t>(a)];
    const CellNode& nb = space.nodes[static_cast<size_t>(b)];
    if (na.depth != nb.depth) return na.depth < nb.depth;
    return na.level < nb.level;
  };
  std::vector<int> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[static_cast<size_t>(i)] == 0) ready.push_back(i);
  std::vector<int> order;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end(), before);
    const int cur = ready.front();
    ready.erase(ready.begin());
    order.push_back(cur);
    for (const CellEdge& e : space.nodes[static_cast<size_t>(cur)].edges)
      if (e.target >= 0 && --indeg[static_cast<size_t>(e.target)] == 0)
        ready.push_back(e.target);
  }
  TPR_CHECK(static_cast<int>(order.size()) == n,
            "routing space contains a cycle");

  std::vector<int> pos(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<size_t>(order[static_cast<size_t>(i)])] = i;
  std::vector<CellNode> sorted(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    CellNode node = space.nodes[static_cast<size_t>(order[static_cast<size_t>(i)])];
    for (CellEdge& e : node.edges)
      if (e.target >= 0) e.target = pos[static_cast<size_t>(e.target)];
    sorted[static_cast<size_t>(i)] = std::move(node);
  }
  space.nodes = std::move(sorted);
}

}  // namespace

RoutingSpace build_space(SpaceKind kind, int levels, std::vector<int> depths) {
  TPR_CHECK(levels >= 1, "build_space: need at least one level");
  TPR_CHECK(static_cast<int>(depths.size()) == levels,
            "build_space: depth list has " + std::to_string(depths.size()) +
                " entries for " + std::to_string(levels) + " levels");
  for (int d : depths)
    TPR_CHECK(d >= 1, "build_space: depths must be >= 1");
  if (kind == SpaceKind::Cpr || kind == SpaceKind::TopDown)
    for (size_t i = 0; i + 1 < depths.size(); ++i)
      TPR_CHECK(depths[i] >= depths[i + 1],
                "build_space: depths must be non-increasing toward coarse "
                "levels, got depths[" +
                    std::to_string(i) + "]=" + std::to_string(depths[i]) +
                    " < depths[" + std::to_string(i + 1) +
                    "]=" + std::to_string(depths[i + 1]));

  RoutingSpace space;
  space.kind = kind;
  space.levels = levels;
  space.depths = depths;

  if (kind == SpaceKind::FullAlign) {
    for (int q = 0; q < levels; ++q)
      for (int r = 0; r < levels; ++r)
        if (r != q) space.pairs.push_back({r, q});
    return space;
  }

  // Depth budget per level; top_down mirrors the triangle so the coarsest
  // level owns the deepest path.
  auto level_depth = [&](int s) {
    if (kind == SpaceKind::FullRouting)
      return *std::max_element(depths.begin(), depths.end());
    if (kind == SpaceKind::TopDown)
      return depths[static_cast<size_t>(levels - 1 - s)];
    return depths[static_cast<size_t>(s)];
  };

  std::map<std::pair<int, int>, int> index;  // (level, depth) -> node id
  for (int s = 0; s < levels; ++s)
    for (int d = 1; d <= level_depth(s); ++d) {
      index[{s, d}] = static_cast<int>(space.nodes.size());
      space.nodes.push_back({s, d, {}});
    }

  for (CellNode& node : space.nodes) {
    const int s = node.level, d = node.depth;
    if (kind == SpaceKind::Cpr) {
      if (s + 1 < levels)
        node.edges.push_back(
            {Dir::Up, index.at({s + 1, std::min(d + 1, level_depth(s + 1))})});
      node.edges.push_back(
          {Dir::Keep, d < level_depth(s) ? index.at({s, d + 1}) : -1});
    } else if (kind == SpaceKind::TopDown) {
      node.edges.push_back(
          {Dir::Keep, d < level_depth(s) ? index.at({s, d + 1}) : -1});
      if (s - 1 >= 0)
        node.edges.push_back(
            {Dir::Down, index.at({s - 1, std::min(d + 1, level_depth(s - 1))})});
    } else {  // FullRouting
      if (d < level_depth(s)) {
        if (s + 1 < levels) node.edges.push_back({Dir::Up, index.at({s + 1, d + 1})});
        node.edges.push_back({Dir::Keep, index.at({s, d + 1})});
        if (s - 1 >= 0) node.edges.push_back({Dir::Down, index.at({s - 1, d + 1})});
      } else {
        node.edges.push_back({Dir::Keep, -1});
      }
    }
  }
  topo_sort(space);
  return space;
}

namespace {

void add_into(Tensor& slot, const Tensor& v) {
  slot = slot.defined() ? ops::add(slot, v) : v;
}

/// Transfer a gated map from one level's shape to another's.
Tensor transfer(const Tensor& y, int from_level, int to_level,
                const std::vector<std::pair<int, int>>& sizes) {
  if (from_level == to_level) return y;
  if (to_level > from_level) {
    Tensor t = y;
    for (int s = from_level; s < to_level; ++s) t = ops::avgpool2x2(t);
    return t;
  }
  Tensor t = y;
  for (int s = from_level; s > to_level; --s)
    t = ops::resize_bilinear(t, sizes[static_cast<size_t>(s - 1)].first,
                             sizes[static_cast<size_t>(s - 1)].second);
  return t;
}

}  // namespace

FeaturePyramid route_pyramid(const RoutingSpace& space,
                             const FeaturePyramid& pyr, ParamStore& params,
                             budget::FlopLedger& ledger,
                             const std::vector<int>* eval_order) {
  TPR_CHECK(pyr.count() == space.levels,
            "route_pyramid: pyramid has " + std::to_string(pyr.count()) +
                " levels but the space was built for " +
                std::to_string(space.levels));
  const bool sparse = ledger.mode() == budget::LedgerMode::Hard;
  const int c = pyr.channels;
  std::vector<std::pair<int, int>> sizes;
  for (int i = 0; i < pyr.count(); ++i) sizes.push_back(pyr.size(i));

  FeaturePyramid out;
  out.frame_index = pyr.frame_index;
  out.channels = pyr.channels;
  out.levels.resize(static_cast<size_t>(space.levels));

  std::vector<Tensor> level_acc(static_cast<size_t>(space.levels));

  if (space.kind == SpaceKind::FullAlign) {
    for (const AlignPair& p : space.pairs) {
      const Tensor& xq = pyr.levels[static_cast<size_t>(p.query_level)];
      Tensor xref = transfer(pyr.levels[static_cast<size_t>(p.ref_level)],
                             p.ref_level, p.query_level, sizes);
      const std::string prefix = "space.a" + std::to_string(p.ref_level) + "_" +
                                 std::to_string(p.query_level);
      GateMap gate = make_inner_gate(ops::concat_channels(xq, xref), params,
                                     prefix + ".gate", xq.dim(1), xq.dim(2));
      ops::SpatialMask mask = sparse ? gate.positive() : ops::SpatialMask{};
      Tensor& w = params.get(prefix + ".cell.w", {c, c, 3, 3},
                             Init::fan_in_uniform(c * 9));
      Tensor h = ops::relu(
          ops::conv2d(xref, w, nullptr, 1, -1, sparse ? &mask : nullptr));
      ledger.record(prefix, gate, 9.0 * c * c, 3, "space");
      ledger.add_static(prefix + ".gate",
                        static_cast<double>(budget::conv_macs(
                            3, 2 * c, 1, (xq.dim(1) + 1) / 2,
                            (xq.dim(2) + 1) / 2)));
      add_into(level_acc[static_cast<size_t>(p.query_level)],
               ops::mul_gate(h, gate.values));
    }
  } else {
    const int n = static_cast<int>(space.nodes.size());
    std::vector<int> order(static_cast<size_t>(n));
    if (eval_order) {
      TPR_CHECK(static_cast<int>(eval_order->size()) == n,
                "route_pyramid: evaluation order has wrong length");
      order = *eval_order;
      std::vector<int> pos(static_cast<size_t>(n), -1);
      for (int i = 0; i < n; ++i) {
        const int v = order[static_cast<size_t>(i)];
        TPR_CHECK(v >= 0 && v < n && pos[static_cast<size_t>(v)] == -1,
                  "route_pyramid: evaluation order is not a permutation");
        pos[static_cast<size_t>(v)] = i;
      }
      for (int i = 0; i < n; ++i)
        for (const CellEdge& e : space.nodes[static_cast<size_t>(i)].edges)
          if (e.target >= 0)
            TPR_CHECK(pos[static_cast<size_t>(e.target)] >
                          pos[static_cast<size_t>(i)],
                      "route_pyramid: evaluation order violates an edge "
                      "(cycle or bad permutation)");
    } else {
      for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    }

    std::vector<Tensor> node_in(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      if (space.nodes[static_cast<size_t>(i)].depth == 1)
        node_in[static_cast<size_t>(i)] =
            pyr.levels[static_cast<size_t>(space.nodes[static_cast<size_t>(i)].level)];

    for (int oi = 0; oi < n; ++oi) {
      const int ni = order[static_cast<size_t>(oi)];
      const CellNode& node = space.nodes[static_cast<size_t>(ni)];
      const Tensor& x = node_in[static_cast<size_t>(ni)];
      TPR_CHECK(x.defined(), "route_pyramid: node has no input (bad space)");
      const std::string prefix = "space.n" + std::to_string(node.level) + "_" +
                                 std::to_string(node.depth);

      const int n_dirs = static_cast<int>(node.edges.size());
      std::vector<GateMap> gates =
          make_path_gates(x, n_dirs, params, prefix + ".gate");
      ledger.add_static(prefix + ".gate",
                        static_cast<double>(budget::conv_macs(
                            3, c, n_dirs, x.dim(1), x.dim(2))));

      ops::SpatialMask mask;
      if (sparse) {
        mask.h = x.dim(1);
        mask.w = x.dim(2);
        mask.on.assign(static_cast<size_t>(mask.h) * mask.w, 0);
        for (const GateMap& g : gates) {
          auto p = g.positive();
          for (size_t i = 0; i < mask.on.size(); ++i) mask.on[i] |= p.on[i];
        }
      }
      Tensor& w = params.get(prefix + ".cell.w", {c, c, 3, 3},
                             Init::fan_in_uniform(c * 9));
      Tensor h = ops::add(
          x, ops::relu(ops::conv2d(x, w, nullptr, 1, -1, sparse ? &mask : nullptr)));

      const double gate_cost = 9.0 * c * c / n_dirs;
      for (int ei = 0; ei < n_dirs; ++ei) {
        const CellEdge& e = node.edges[static_cast<size_t>(ei)];
        ledger.record(prefix + "." + dir_name(e.dir), gates[static_cast<size_t>(ei)],
                      gate_cost, 3, "space");
        Tensor y = ops::mul_gate(h, gates[static_cast<size_t>(ei)].values);
        if (e.target < 0) {
          add_into(level_acc[static_cast<size_t>(node.level)], y);
        } else {
          const CellNode& tgt = space.nodes[static_cast<size_t>(e.target)];
          add_into(node_in[static_cast<size_t>(e.target)],
                   transfer(y, node.level, tgt.level, sizes));
        }
      }
    }
  }

  for (int s = 0; s < space.levels; ++s) {
    const Tensor& base = pyr.levels[static_cast<size_t>(s)];
    out.levels[static_cast<size_t>(s)] =
        level_acc[static_cast<size_t>(s)].defined()
            ? ops::add(base, level_acc[static_cast<size_t>(s)])
            : base;
  }
  return out;
}

std::uint64_t static_cost(const RoutingSpace& space,
                          const std::vector<std::pair<int, int>>& level_sizes,
                          int channels) {
  TPR_CHECK(static_cast<int>(level_sizes.size()) == space.levels,
            "static_cost: level size list does not match the space");
  std::uint64_t total = 0;
  if (space.kind == SpaceKind::FullAlign) {
    for (const AlignPair& p : space.pairs) {
      const auto [h, w] = level_sizes[static_cast<size_t>(p.query_level)];
      total += cell_macs(channels, h, w);
      total += budget::conv_macs(3, 2 * channels, 1, (h + 1) / 2, (w + 1) / 2);
    }
    return total;
  }
  for (const CellNode& node : space.nodes) {
    const auto [h, w] = level_sizes[static_cast<size_t>(node.level)];
    total += cell_macs(channels, h, w);
    total += budget::conv_macs(3, channels, static_cast<int>(node.edges.size()),
                               h, w);
  }
  return total;
}

std::string RoutingSpace::to_text() const {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  j["levels"] = levels;
  j["depths"] = depths;
  nlohmann::json jnodes = nlohmann::json::array();
  for (const CellNode& n : nodes) {
    nlohmann::json jn;
    jn["level"] = n.level;
    jn["depth"] = n.depth;
    nlohmann::json je = nlohmann::json::array();
    for (const CellEdge& e : n.edges)
      je.push_back({{"dir", dir_name(e.dir)}, {"target", e.target}});
    jn["edges"] = je;
    jnodes.push_back(jn);
  }
  j["nodes"] = jnodes;
  nlohmann::json jpairs = nlohmann::json::array();
  for (const AlignPair& p : pairs)
    jpairs.push_back({{"ref", p.ref_level}, {"query", p.query_level}});
  j["pairs"] = jpairs;
  return j.dump(2) + "\n";
}

RoutingSpace RoutingSpace::from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("routing space parse error: ") + e.what());
  }
  RoutingSpace s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.levels = j.at("levels").get<int>();
  s.depths = j.at("depths").get<std::vector<int>>();
  for (const auto& jn : j.at("nodes")) {
    CellNode n;
    n.level = jn.at("level").get<int>();
    n.depth = jn.at("depth").get<int>();
    for (const auto& je : jn.at("edges"))
      n.edges.push_back({dir_from_name(je.at("dir").get<std::string>()),
                         je.at("target").get<int>()});
    s.nodes.push_back(std::move(n));
  }
  for (const auto& jp : j.at("pairs"))
    s.pairs.push_back({jp.at("ref").get<int>(), jp.at("query").get<int>()});
  return s;
}

}  // namespace tpr::cpr

#include <doctest.h>

#include <algorithm>
#include <random>

#include "test_util.hpp"
#include "tpr/cpr.hpp"
#include "tpr/ops.hpp"

using namespace tpr;
using namespace tpr::cpr;

namespace {

FeaturePyramid toy_pyramid(std::mt19937_64& rng, int channels,
                           std::vector<std::pair<int, int>> sizes) {
  FeaturePyramid p;
  p.channels = channels;
  for (auto [h, w] : sizes)
    p.levels.push_back(testutil::random_tensor({channels, h, w}, rng));
  return p;
}

const std::vector<std::pair<int, int>> kDefaultSizes = {
    {12, 12}, {6, 6}, {3, 3}, {2, 2}};

void force_gates(ParamStore& params, double bias) {
  for (auto& [name, t] : const_cast<std::map<std::string, Tensor>&>(params.all()))
    if (name.rfind("space.", 0) == 0 && name.size() > 2 &&
        name.substr(name.size() - 2) == ".b")
      const_cast<Tensor&>(t).mutable_data().setConstant(bias);
}

}  // namespace

TEST_CASE("build_space node counts") {
  CHECK(build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1}).nodes.size() == 7);
  CHECK(build_space(SpaceKind::FullRouting, 4, {3, 2, 1, 1}).nodes.size() == 12);
  CHECK(build_space(SpaceKind::TopDown, 4, {3, 2, 1, 1}).nodes.size() == 7);
  CHECK(build_space(SpaceKind::FullAlign, 4, {3, 2, 1, 1}).pairs.size() == 12);

  auto a = build_space(SpaceKind::Cpr, 4, {1, 1, 1, 1});
  auto b = build_space(SpaceKind::FullRouting, 4, {1, 1, 1, 1});
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].level == b.nodes[i].level);
    CHECK(a.nodes[i].depth == b.nodes[i].depth);
  }
}

TEST_CASE("build_space rejects bad depth lists") {
  CHECK_THROWS_AS(build_space(SpaceKind::Cpr, 4, {3, 2, 1}), Error);
  CHECK_THROWS_AS(build_space(SpaceKind::Cpr, 4, {1, 2, 1, 1}), Error);
  CHECK_THROWS_AS(build_space(SpaceKind::Cpr, 4, {3, 2, 1, 0}), Error);
}

TEST_CASE("closed space is the identity on the pyramid, all kinds") {
  for (SpaceKind kind : {SpaceKind::Cpr, SpaceKind::FullRouting,
                         SpaceKind::TopDown, SpaceKind::FullAlign}) {
    std::mt19937_64 rng(3);
    FeaturePyramid pyr = toy_pyramid(rng, 16, kDefaultSizes);
    RoutingSpace space = build_space(kind, 4, {3, 2, 1, 1});
    ParamStore params(3);
    budget::FlopLedger warmup(budget::LedgerMode::Soft);
    route_pyramid(space, pyr, params, warmup);
    force_gates(params, -50.0);
    budget::FlopLedger ledger(budget::LedgerMode::Hard);
    FeaturePyramid out = route_pyramid(space, pyr, params, ledger);
    for (int i = 0; i < 4; ++i)
      CHECK(testutil::max_abs_diff(out.levels[static_cast<size_t>(i)],
                                   pyr.levels[static_cast<size_t>(i)]) == 0.0);
    CHECK(ledger.dynamic_macs() == 0.0);
  }
}

TEST_CASE("keep-only unit-depth space equals independent per-scale cells") {
  std::mt19937_64 rng(4);
  FeaturePyramid pyr = toy_pyramid(rng, 8, {{6, 6}, {3, 3}});
  RoutingSpace space = build_space(SpaceKind::Cpr, 2, {1, 1});
  ParamStore params(4);
  budget::FlopLedger warmup(budget::LedgerMode::Soft);
  route_pyramid(space, pyr, params, warmup);
  // node (0,1) has gates [up, keep]; node (1,1) has [keep] only
  params.at("space.n0_1.gate.b").mutable_data() << -50.0, 50.0;
  params.at("space.n1_1.gate.b").mutable_data().setConstant(50.0);

  budget::FlopLedger ledger(budget::LedgerMode::Soft);
  FeaturePyramid out = route_pyramid(space, pyr, params, ledger);
  for (int s = 0; s < 2; ++s) {
    const Tensor& x = pyr.levels[static_cast<size_t>(s)];
    Tensor h = ops::add(
        x, ops::relu(ops::conv2d(
               x, params.at("space.n" + std::to_string(s) + "_1.cell.w"))));
    Tensor expect = ops::add(x, h);  // residual + fully open keep gate
    CHECK(testutil::max_abs_diff(out.levels[static_cast<size_t>(s)], expect) <
          1e-12);
  }
}

TEST_CASE("masked node execution equals dense-then-gate, random gates") {
  for (SpaceKind kind : {SpaceKind::Cpr, SpaceKind::FullRouting,
                         SpaceKind::TopDown, SpaceKind::FullAlign}) {
    for (int trial = 0; trial < 5; ++trial) {
      std::mt19937_64 rng(10 + static_cast<std::uint64_t>(trial));
      FeaturePyramid pyr = toy_pyramid(rng, 8, {{8, 8}, {4, 4}, {2, 2}});
      RoutingSpace space = build_space(kind, 3, {2, 2, 1});
      ParamStore params(20 + static_cast<std::uint64_t>(trial));
      budget::FlopLedger warmup(budget::LedgerMode::Soft);
      route_pyramid(space, pyr, params, warmup);
      // scatter gate weights so supports are partial
      std::mt19937_64 grng(trial);
      for (auto& [name, t] :
           const_cast<std::map<std::string, Tensor>&>(params.all()))
        if (name.rfind("space.", 0) == 0 && name.find(".gate.") != std::string::npos) {
          Array& d = const_cast<Tensor&>(t).mutable_data();
          for (long i = 0; i < d.size(); ++i)
            d[i] = std::uniform_real_distribution<double>(-1.5, 1.5)(grng);
        }

      budget::FlopLedger lh(budget::LedgerMode::Hard);
      FeaturePyramid sparse = route_pyramid(space, pyr, params, lh);
      budget::FlopLedger ls(budget::LedgerMode::Soft);
      FeaturePyramid dense = route_pyramid(space, pyr, params, ls);
      for (int i = 0; i < 3; ++i)
        CHECK(testutil::max_abs_diff(sparse.levels[static_cast<size_t>(i)],
                                     dense.levels[static_cast<size_t>(i)]) <
              1e-10);
    }
  }
}

TEST_CASE("evaluation order only matters up to commutative sums") {
  std::mt19937_64 rng(5);
  FeaturePyramid pyr = toy_pyramid(rng, 8, {{8, 8}, {4, 4}, {2, 2}, {1, 1}});
  RoutingSpace space = build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1});
  ParamStore params(5);
  budget::FlopLedger l1(budget::LedgerMode::Soft);
  FeaturePyramid a = route_pyramid(space, pyr, params, l1);

  // alternate topological order: Kahn sweep always taking the highest-index
  // ready node, the mirror of the built-in tie-break
  const int n = static_cast<int>(space.nodes.size());
  std::vector<int> indeg(static_cast<size_t>(n), 0);
  for (const CellNode& node : space.nodes)
    for (const CellEdge& e : node.edges)
      if (e.target >= 0) ++indeg[static_cast<size_t>(e.target)];
  std::vector<int> ready, order;
  for (int i = 0; i < n; ++i)
    if (indeg[static_cast<size_t>(i)] == 0) ready.push_back(i);
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end());
    const int cur = ready.back();
    ready.pop_back();
    order.push_back(cur);
    for (const CellEdge& e : space.nodes[static_cast<size_t>(cur)].edges)
      if (e.target >= 0 && --indeg[static_cast<size_t>(e.target)] == 0)
        ready.push_back(e.target);
  }
  REQUIRE(static_cast<int>(order.size()) == n);
  CHECK(order != [n] {
    std::vector<int> id(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) id[static_cast<size_t>(i)] = i;
    return id;
  }());
  budget::FlopLedger l2(budget::LedgerMode::Soft);
  FeaturePyramid b = route_pyramid(space, pyr, params, l2, &order);
  for (int i = 0; i < 4; ++i)
    CHECK(testutil::max_abs_diff(a.levels[static_cast<size_t>(i)],
                                 b.levels[static_cast<size_t>(i)]) < 1e-12);

  // an order violating an edge is rejected as a cycle/bad permutation
  std::reverse(order.begin(), order.end());
  budget::FlopLedger l3(budget::LedgerMode::Soft);
  CHECK_THROWS_AS(route_pyramid(space, pyr, params, l3, &order), Error);
}

TEST_CASE("static_cost fixtures and orderings") {
  SUBCASE("empty space costs nothing") {
    RoutingSpace empty;
    empty.levels = 0;
    CHECK(static_cost(empty, {}, 16) == 0);
  }
  SUBCASE("closed-form single cell MACs") {
    CHECK(cell_macs(16, 12, 12) == 331776);
  }
  SUBCASE("acceptance ordering at default shapes and channels") {
    auto cpr_cost =
        static_cost(build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1}), kDefaultSizes, 16);
    auto align_cost = static_cost(build_space(SpaceKind::FullAlign, 4, {3, 2, 1, 1}),
                                  kDefaultSizes, 16);
    auto full_cost = static_cost(build_space(SpaceKind::FullRouting, 4, {3, 3, 3, 3}),
                                 kDefaultSizes, 16);
    CHECK(cpr_cost == 1339488);
    CHECK(align_cost == 1377216);
    CHECK(full_cost == 1485936);
    CHECK(cpr_cost < align_cost);
    CHECK(align_cost < full_cost);
  }
  SUBCASE("cpr is cheaper than full routing at equal depth configs") {
    auto cpr_cost =
        static_cost(build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1}), kDefaultSizes, 16);
    auto full_cost = static_cost(build_space(SpaceKind::FullRouting, 4, {3, 2, 1, 1}),
                                 kDefaultSizes, 16);
    CHECK(cpr_cost < full_cost);
  }
}

TEST_CASE("space ledger totals stay under the static upper bound") {
  std::mt19937_64 rng(6);
  FeaturePyramid pyr = toy_pyramid(rng, 16, kDefaultSizes);
  RoutingSpace space = build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1});
  ParamStore params(6);
  budget::FlopLedger ledger(budget::LedgerMode::Hard);
  route_pyramid(space, pyr, params, ledger);
  CHECK(ledger.dynamic_macs("space") <=
        static_cast<double>(static_cost(space, kDefaultSizes, 16)));
}

TEST_CASE("routing space serializes to structured text and back") {
  RoutingSpace space = build_space(SpaceKind::Cpr, 4, {3, 2, 1, 1});
  RoutingSpace parsed = RoutingSpace::from_text(space.to_text());
  CHECK(parsed.kind == space.kind);
  CHECK(parsed.depths == space.depths);
  REQUIRE(parsed.nodes.size() == space.nodes.size());
  for (size_t i = 0; i < space.nodes.size(); ++i) {
    CHECK(parsed.nodes[i].level == space.nodes[i].level);
    CHECK(parsed.nodes[i].depth == space.nodes[i].depth);
    CHECK(parsed.nodes[i].edges.size() == space.nodes[i].edges.size());
  }
  CHECK(static_cost(parsed, kDefaultSizes, 16) ==
        static_cost(space, kDefaultSizes, 16));
  CHECK_THROWS_AS(RoutingSpace::from_text("not json"), Error);
}

TEST_CASE("route_pyramid gradients flow through path gates and cells") {
  std::mt19937_64 rng(7);
  FeaturePyramid pyr = toy_pyramid(rng, 3, {{6, 6}, {3, 3}});
  RoutingSpace space = build_space(SpaceKind::Cpr, 2, {2, 1});
  ParamStore params(7);
  auto f = [&]() {
    budget::FlopLedger ledger(budget::LedgerMode::Soft);
    FeaturePyramid out = route_pyramid(space, pyr, params, ledger);
    Tensor task = ops::add(ops::sum(ops::mul(out.levels[0], out.levels[0])),
                           ops::sum(out.levels[1]));
    return ops::add(task, ledger.budget_loss());
  };
  CHECK(finite_diff_check(f, params, 1e-5, 96, 8) < 1e-5);
}

#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "tpr/budget.hpp"
#include "tpr/param_store.hpp"

using namespace tpr;
using namespace tpr::budget;

namespace {

GateMap gate_from(Shape shape, std::vector<double> vals,
                  GateKind kind = GateKind::Path) {
  return GateMap{Tensor::from_data(std::move(shape), std::move(vals)), kind};
}

}  // namespace

TEST_CASE("record: all-zero gate contributes zero budget") {
  FlopLedger ledger(LedgerMode::Hard);
  ledger.record("l0", gate_from({1, 4, 4}, std::vector<double>(16, 0.0)), 2.0, 3);
  CHECK(ledger.entries()[0].b_hard == 0.0);
  CHECK(ledger.entries()[0].c == 32.0);
}

TEST_CASE("record: fully open gate in hard mode reaches B == C") {
  FlopLedger ledger(LedgerMode::Hard);
  ledger.record("l0", gate_from({1, 4, 4}, std::vector<double>(16, 0.7)), 2.0, 3);
  CHECK(ledger.entries()[0].b_hard == ledger.entries()[0].c);
  CHECK(ledger.budget_ratio() == 1.0);
}

TEST_CASE("record: single interior pixel expands to the 3x3 receptive field") {
  std::vector<double> vals(16, 0.0);
  vals[5] = 0.9;  // (1,1) interior of a 4x4 map
  FlopLedger ledger(LedgerMode::Hard);
  ledger.record("l0", gate_from({1, 4, 4}, vals), 7.0, 3);
  CHECK(ledger.entries()[0].b_hard == 9.0 * 7.0);
}

TEST_CASE("budget_loss fixtures") {
  SUBCASE("empty ledger errors") {
    FlopLedger ledger(LedgerMode::Hard);
    CHECK_THROWS_AS(ledger.budget_loss(), Error);
  }
  SUBCASE("all gates closed gives exactly zero") {
    FlopLedger ledger(LedgerMode::Soft);
    ledger.record("a", gate_from({1, 3, 3}, std::vector<double>(9, 0.0)), 1.0, 3);
    ledger.record("b", gate_from({1, 5, 5}, std::vector<double>(25, 0.0)), 2.0, 3);
    CHECK(ledger.budget_loss().item() == 0.0);
  }
  SUBCASE("two-layer 9/32 fixture") {
    // B = (9, 0), C = (16, 16): one 4x4 layer fully open at cost 1 in hard
    // mode would give 16; instead a single interior pixel expands to 9.
    std::vector<double> one(16, 0.0);
    one[5] = 1.0;
    FlopLedger ledger(LedgerMode::Hard);
    ledger.record("a", gate_from({1, 4, 4}, one), 1.0, 3);
    ledger.record("b", gate_from({1, 4, 4}, std::vector<double>(16, 0.0)), 1.0, 3);
    CHECK(ledger.entries()[0].b_hard == 9.0);
    CHECK(ledger.entries()[1].b_hard == 0.0);
    CHECK(ledger.budget_ratio() == 9.0 / 32.0);
  }
}

TEST_CASE("budget_loss stays within [0,1] for random gates") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> v(0.0, 0.999);
  for (int trial = 0; trial < 50; ++trial) {
    FlopLedger soft(LedgerMode::Soft);
    FlopLedger hard(LedgerMode::Hard);
    std::uniform_int_distribution<int> sdist(2, 8);
    for (int layer = 0; layer < 3; ++layer) {
      const int h = sdist(rng), w = sdist(rng);
      std::vector<double> vals(static_cast<size_t>(h) * w);
      for (auto& x : vals) x = rng() % 3 == 0 ? 0.0 : v(rng);
      auto g = gate_from({1, h, w}, vals);
      soft.record("l", g, 1.5, 3);
      hard.record("l", g, 1.5, 3);
    }
    const double ls = soft.budget_loss().item();
    const double lh = hard.budget_ratio();
    CHECK(ls >= 0.0);
    CHECK(ls <= 1.0);
    CHECK(lh >= 0.0);
    CHECK(lh <= 1.0);
  }
}

TEST_CASE("soft budget gradient w.r.t. gate pre-activations is non-negative") {
  ParamStore params(12);
  // scattered pre-activations keep the max filter away from tie points
  params.get("pre", {1, 5, 5}, Init::fan_in_uniform(1));
  auto f = [&]() {
    GateMap g{ops::clipped_tanh(params.at("pre")), GateKind::Path};
    FlopLedger ledger(LedgerMode::Soft);
    ledger.record("l", g, 2.0, 3);
    return ledger.budget_loss();
  };
  CHECK(finite_diff_check(f, params, 1e-5, 64, 7) < 1e-6);
  params.zero_grad();
  Tensor loss = f();
  loss.backward();
  const Array& g = params.at("pre").grad();
  for (long i = 0; i < g.size(); ++i) CHECK(g[i] >= 0.0);
}

TEST_CASE("opening one more gate pixel never lowers the recorded cost") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> v(0.1, 0.9);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> vals(36, 0.0);
    for (auto& x : vals) x = rng() % 2 ? v(rng) : 0.0;
    std::vector<size_t> zeros;
    for (size_t i = 0; i < vals.size(); ++i)
      if (vals[i] == 0.0) zeros.push_back(i);
    if (zeros.empty()) continue;

    FlopLedger before(LedgerMode::Hard);
    before.record("l", gate_from({1, 6, 6}, vals), 1.0, 3);
    auto opened = vals;
    opened[zeros[rng() % zeros.size()]] = v(rng);
    FlopLedger after(LedgerMode::Hard);
    after.record("l", gate_from({1, 6, 6}, opened), 1.0, 3);
    CHECK(after.entries()[0].b_hard >= before.entries()[0].b_hard);
  }
}

TEST_CASE("total_loss fixtures") {
  LossConfig cfg;
  CHECK(total_loss(Tensor::scalar(0), Tensor::scalar(0), cfg).item() == 0.0);
  CHECK(total_loss(Tensor::scalar(2), Tensor::scalar(0.5), cfg).item() ==
        2.75);
  cfg.lambda2 = 0;
  CHECK(total_loss(Tensor::scalar(1.7), Tensor::scalar(0.9), cfg).item() ==
        1.7);
}

TEST_CASE("flops_report aggregation") {
  SUBCASE("one clip collapses min/avg/max") {
    auto r = flops_report({42.0});
    CHECK(r.min_macs == 42.0);
    CHECK(r.avg_macs == 42.0);
    CHECK(r.max_macs == 42.0);
  }
  SUBCASE("all-closed clips sit at the static floor") {
    auto r = flops_report({100.0, 100.0, 100.0});
    CHECK(r.min_macs == r.max_macs);
    CHECK(r.avg_macs == 100.0);
  }
  SUBCASE("hand-enumerated two-clip fixture") {
    // clip A: static 100 + one open 3x3-expanded pixel (9 MACs at cost 1)
    // clip B: static 100 + fully open 4x4 map (16 MACs)
    FlopLedger a(LedgerMode::Hard);
    a.add_static("backbone", 100.0);
    std::vector<double> one(16, 0.0);
    one[5] = 1.0;
    a.record("l", gate_from({1, 4, 4}, one), 1.0, 3);
    FlopLedger b(LedgerMode::Hard);
    b.add_static("backbone", 100.0);
    b.record("l", gate_from({1, 4, 4}, std::vector<double>(16, 0.5)), 1.0, 3);
    auto r = flops_report({a.total_macs(), b.total_macs()});
    CHECK(r.min_macs == 109.0);
    CHECK(r.max_macs == 116.0);
    CHECK(r.avg_macs == 112.5);
  }
  SUBCASE("invariant to clip order") {
    auto r1 = flops_report({3.0, 1.0, 2.0, 5.0});
    auto r2 = flops_report({5.0, 2.0, 3.0, 1.0});
    CHECK(r1.min_macs == r2.min_macs);
    CHECK(r1.avg_macs == r2.avg_macs);
    CHECK(r1.max_macs == r2.max_macs);
  }
}

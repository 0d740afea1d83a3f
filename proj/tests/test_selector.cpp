#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "ttseal/selector.hpp"

using namespace ttseal;
using namespace ttseal::testing;

namespace {

std::vector<Item> make_items_raw(const std::vector<std::pair<std::uint64_t, std::int64_t>>& wv) {
  std::vector<Item> items;
  for (std::size_t i = 0; i < wv.size(); ++i)
    items.push_back({CoreId{0, static_cast<std::uint32_t>(i)}, wv[i].first, static_cast<double>(wv[i].second),
                     wv[i].second});
  return items;
}

// Minimal cost over all subsets, written independently of the library.
std::optional<std::uint64_t> exhaustive_cost(const std::vector<Item>& items, std::int64_t threshold) {
  std::optional<std::uint64_t> best;
  for (std::uint32_t mask = 0; mask < (1U << items.size()); ++mask) {
    std::uint64_t c = 0;
    std::int64_t v = 0;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (mask & (1U << i)) {
        c += items[i].cost;
        v += items[i].scaled_value;
      }
    if (v >= threshold && (!best || c < *best)) best = c;
  }
  return best;
}

std::optional<std::uint64_t> exhaustive_real_cost(const std::vector<Item>& items, double threshold) {
  std::optional<std::uint64_t> best;
  for (std::uint32_t mask = 0; mask < (1U << items.size()); ++mask) {
    std::uint64_t c = 0;
    double v = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (mask & (1U << i)) {
        c += items[i].cost;
        v += items[i].value;
      }
    if (v >= threshold && (!best || c < *best)) best = c;
  }
  return best;
}

std::vector<Item> random_instance(std::mt19937_64& gen, std::size_t n) {
  std::uniform_int_distribution<std::uint64_t> cost(1, 100);
  std::uniform_int_distribution<std::int64_t> value(0, 50);
  std::vector<Item> items;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = value(gen);
    items.push_back({CoreId{static_cast<std::uint32_t>(i / 4), static_cast<std::uint32_t>(i % 4)}, cost(gen),
                     static_cast<double>(v), v});
  }
  return items;
}

}  // namespace

TEST(Integerize, PaperThresholdsAtScaleHundred) {
  const std::vector<double> v{0.44, 0.79};
  const auto r = integerize(v, 100.0);
  EXPECT_EQ(r.values, (std::vector<std::int64_t>{44, 79}));
  EXPECT_EQ(r.v_max, 123);
}

TEST(Integerize, CoarseScaleMakesEverythingInfeasible) {
  const std::vector<double> v{0.2, 0.4, 0.49};
  const auto r = integerize(v, 1.0);
  EXPECT_EQ(r.v_max, 0);
  std::vector<Item> items;
  for (std::size_t i = 0; i < v.size(); ++i)
    items.push_back({CoreId{0, static_cast<std::uint32_t>(i)}, 5, v[i], r.values[i]});
  try {
    value_dp_select(items, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
  }
}

TEST(Integerize, DoublingScaleDoublesTotalWithinRounding) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(10);
    for (auto& x : v) x = u(gen);
    const double s = 37.5;
    const auto a = integerize(v, s).v_max, b = integerize(v, 2 * s).v_max;
    EXPECT_LE(std::abs(b - 2 * a), static_cast<std::int64_t>(v.size() / 2 + 1));
  }
}

TEST(Integerize, RejectsNegativeValues) {
  const std::vector<double> v{0.1, -0.1};
  EXPECT_THROW(integerize(v, 10.0), Error);
}

TEST(DefaultScale, KeepsFourDigitsAndBoundsTotal) {
  const std::vector<double> small{0.5, 0.25, 1.0};
  EXPECT_DOUBLE_EQ(default_scale(small), 1e4);
  const std::vector<double> many(5000, 1.0);
  EXPECT_LE(integerize(many, default_scale(many)).v_max, kMaxScaledTotal);
}

TEST(ValueDp, ZeroThresholdSelectsNothing) {
  const auto items = make_items_raw({{5, 3}, {2, 2}});
  const auto p = value_dp_select(items, 0);
  EXPECT_TRUE(p.selected.empty());
  EXPECT_EQ(p.total_cost, 0U);
}

TEST(ValueDp, WorkedExample) {
  const auto items = make_items_raw({{5, 3}, {2, 2}, {4, 2}});
  const auto p = value_dp_select(items, 4);
  EXPECT_EQ(p.selected, (std::vector<CoreId>{{0, 1}, {0, 2}}));
  EXPECT_EQ(p.total_cost, 6U);
  EXPECT_EQ(p.total_scaled_value, 4);
}

TEST(ValueDp, InfeasibleThresholdRaises) {
  const auto items = make_items_raw({{5, 3}, {2, 2}});
  try {
    value_dp_select(items, 6);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
  }
}

TEST(ValueDp, MatchesExhaustiveSearch) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 1500; ++trial) {
    const std::size_t n = 1 + trial % 15;
    const auto items = random_instance(gen, n);
    std::int64_t vmax = 0;
    for (const auto& it : items) vmax += it.scaled_value;
    const auto th = std::uniform_int_distribution<std::int64_t>(0, vmax + 5)(gen);
    const auto want = exhaustive_cost(items, th);
    if (!want) {
      EXPECT_THROW(value_dp_select(items, th), Error);
      EXPECT_THROW(brute_force_select(items, th), Error);
      continue;
    }
    const auto dp = value_dp_select(items, th);
    const auto bf = brute_force_select(items, th);
    ASSERT_EQ(dp.total_cost, *want) << "trial " << trial;
    ASSERT_EQ(bf.total_cost, *want) << "trial " << trial;
    EXPECT_GE(dp.total_scaled_value, th);
    // the backtracked set re-sums to the reported totals
    std::uint64_t c = 0;
    std::int64_t v = 0;
    for (auto id : dp.selected)
      for (const auto& it : items)
        if (it.core_id == id) {
          c += it.cost;
          v += it.scaled_value;
        }
    EXPECT_EQ(c, dp.total_cost);
    EXPECT_EQ(v, dp.total_scaled_value);
  }
}

TEST(ValueDp, CostIsMonotoneInThreshold) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto items = random_instance(gen, 10);
    std::int64_t vmax = 0;
    for (const auto& it : items) vmax += it.scaled_value;
    std::uint64_t prev = 0;
    for (std::int64_t th = 0; th <= vmax; ++th) {
      const auto c = value_dp_select(items, th).total_cost;
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(ValueDp, EncryptionRatioUsesTotalParameters) {
  const auto items = make_items_raw({{5, 3}, {2, 2}, {4, 2}});
  EXPECT_DOUBLE_EQ(value_dp_select(items, 4).encryption_ratio, 6.0 / 11.0);
  EXPECT_DOUBLE_EQ(value_dp_select(items, 4, 60).encryption_ratio, 0.1);
}

TEST(ValueDp, FineScalingRarelyDiffersFromRealOptimum) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> val(0.01, 1.0);
  std::uniform_int_distribution<std::uint64_t> cost(1, 100);
  int mismatches = 0;
  const int trials = 400;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<Item> items(8);
    double total = 0.0, mn = 1.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      items[i] = {CoreId{0, static_cast<std::uint32_t>(i)}, cost(gen), val(gen), 0};
      total += items[i].value;
      mn = std::min(mn, items[i].value);
    }
    const double scale = 1e3 / mn;
    std::vector<double> values;
    for (const auto& it : items) values.push_back(it.value);
    const auto ints = integerize(values, scale);
    for (std::size_t i = 0; i < items.size(); ++i) items[i].scaled_value = ints.values[i];
    const double th = std::uniform_real_distribution<double>(0.0, total)(gen);
    const auto exact = exhaustive_real_cost(items, th);
    ASSERT_TRUE(exact.has_value());
    const auto dp = value_dp_select(items, std::min(scale_threshold(th, scale), ints.v_max));
    if (dp.total_cost != *exact) ++mismatches;
  }
  EXPECT_LE(mismatches, trials / 100);
}

TEST(BruteForce, SingleItemAndFullThreshold) {
  const auto one = make_items_raw({{7, 5}});
  const auto p = brute_force_select(one, 5);
  EXPECT_EQ(p.selected.size(), 1U);
  EXPECT_EQ(p.total_cost, 7U);
  const auto items = make_items_raw({{1, 1}, {2, 2}, {3, 3}});
  EXPECT_EQ(brute_force_select(items, 6).selected.size(), 3U);
}

TEST(BruteForce, TiesPreferFewerItemsThenLowerIds) {
  // {0} costs 4 with value 2; {1,2} also costs 4 with value 2
  const auto items = make_items_raw({{4, 2}, {2, 1}, {2, 1}, {4, 2}});
  EXPECT_EQ(brute_force_select(items, 2).selected, (std::vector<CoreId>{{0, 0}}));
}

TEST(BruteForce, SizeGuard) {
  std::vector<Item> items(21, Item{CoreId{0, 0}, 1, 1.0, 1});
  try {
    brute_force_select(items, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size_guard);
  }
}

TEST(L1Baseline, ExtremesAndHalf) {
  const auto m = toy_model(3);
  EXPECT_EQ(l1_baseline_select(m, 0.0).total_cost, 0U);
  const auto full = l1_baseline_select(m, 1.0);
  EXPECT_DOUBLE_EQ(full.encryption_ratio, 1.0);

  // Direct computation: every row's L1 norm, largest first, until half covered.
  std::vector<std::pair<double, std::size_t>> rows;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    if (const auto* d = std::get_if<DenseLayer>(&m.layers()[l])) {
      for (std::size_t o = 0; o < d->out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < d->in; ++i) s += std::abs(d->weight[o * d->in + i]);
        rows.push_back({s, d->in});
      }
    } else if (const auto* tt = std::get_if<TTLinearLayer>(&m.layers()[l])) {
      for (const auto& c : tt->tt.cores())
        for (std::size_t j = 0; j < c.mode_size; ++j) {
          double s = 0.0;
          for (std::size_t a = 0; a < c.left_rank; ++a)
            for (std::size_t b = 0; b < c.right_rank; ++b) s += std::abs(c.at(a, j, b));
          rows.push_back({s, c.left_rank * c.right_rank});
        }
    }
  }
  std::sort(rows.begin(), rows.end(), [](auto a, auto b) { return a.first > b.first; });
  std::size_t total = 0;
  for (auto& r : rows) total += r.second;
  std::size_t covered = 0, count = 0;
  while (2 * covered < total) covered += rows[count++].second;
  const auto half = l1_baseline_select(m, 0.5);
  EXPECT_EQ(half.rows.size(), count);
  EXPECT_EQ(half.total_cost, covered);
  for (std::size_t i = 0; i < count; ++i) EXPECT_DOUBLE_EQ(half.rows[i].l1, rows[i].first);
}

TEST(PlanCsv, RoundTrip) {
  const auto items = make_items_raw({{5, 3}, {2, 2}, {4, 2}});
  const auto p = value_dp_select(items, 4);
  const auto back = plan_from_csv(plan_to_csv(p, items));
  EXPECT_EQ(back.selected, p.selected);
  EXPECT_EQ(back.total_cost, p.total_cost);
  EXPECT_THROW(plan_from_csv("nope\n"), Error);
}

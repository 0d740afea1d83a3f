#pragma once

// Minimal encryption set: 0-1 knapsack in the value dimension (minimize
// encrypted parameters subject to a scaled-importance threshold), with an
// exhaustive oracle and the dense L1 row-selection baseline.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/error.hpp"
#include "ttseal/importance.hpp"
#include "ttseal/nnet.hpp"

namespace ttseal {

struct Item {
  CoreId core_id;
  std::uint64_t cost = 1;        // parameter count of the core
  double value = 0.0;            // I_acc
  std::int64_t scaled_value = 0; // round(value * scale)
};

/// One row picked by the L1 baseline: a dense weight row or a TT-core mode
/// slice G[:, j, :].
struct RowSelection {
  ParamKey block;
  std::size_t row = 0;
  std::size_t size = 0;
  double l1 = 0.0;
};

struct EncryptionPlan {
  std::vector<CoreId> selected;  // sorted
  std::uint64_t total_cost = 0;
  std::int64_t total_scaled_value = 0;
  std::int64_t threshold_scaled = 0;
  double encryption_ratio = 0.0;
  std::vector<RowSelection> rows;  // L1 baseline only

  bool contains(CoreId id) const { return std::binary_search(selected.begin(), selected.end(), id); }

  std::uint64_t fingerprint() const {
    ByteWriter w;
    for (auto id : selected) {
      w.u32(id.layer);
      w.u32(id.core);
    }
    return fnv1a64(w.bytes());
  }
};

struct Integerized {
  std::vector<std::int64_t> values;
  std::int64_t v_max = 0;
};

inline Integerized integerize(std::span<const double> values, double scale) {
  require(scale > 0.0 && std::isfinite(scale), ErrorKind::config, "scale must be positive");
  Integerized out;
  for (double v : values) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::config, "values must be finite and nonnegative");
    const auto s = static_cast<std::int64_t>(std::llround(v * scale));
    out.values.push_back(s);
    out.v_max += s;
  }
  return out;
}

inline constexpr std::int64_t kMaxScaledTotal = 10'000'000;

/// 1e4 / max(values), reduced when needed so the scaled total stays <= 1e7.
inline double default_scale(std::span<const double> values) {
  double mx = 0.0, sum = 0.0;
  for (double v : values) {
    mx = std::max(mx, v);
    sum += v;
  }
  if (mx <= 0.0) return 1.0;
  double scale = 1e4 / mx;
  if (sum * scale > static_cast<double>(kMaxScaledTotal) - static_cast<double>(values.size()))
    scale = (static_cast<double>(kMaxScaledTotal) - static_cast<double>(values.size())) / sum;
  return scale;
}

inline std::int64_t scale_threshold(double threshold, double scale) {
  require(threshold >= 0.0, ErrorKind::config, "threshold must be nonnegative");
  return static_cast<std::int64_t>(std::llround(threshold * scale));
}

/// Items in report (model core) order.
inline std::vector<Item> make_items(const ImportanceReport& report, double scale) {
  std::vector<double> values;
  for (const auto& s : report.scores) values.push_back(s.i_acc);
  const auto ints = integerize(values, scale);
  std::vector<Item> items;
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    const auto& s = report.scores[i];
    items.push_back({s.core_id, s.size(), s.i_acc, ints.values[i]});
  }
  return items;
}

namespace detail {

inline void check_items(std::span<const Item> items, std::int64_t threshold_scaled) {
  require(threshold_scaled >= 0, ErrorKind::config, "threshold must be nonnegative");
  for (const auto& it : items) {
    require(it.cost >= 1, ErrorKind::config, "item cost must be positive");
    require(it.scaled_value >= 0, ErrorKind::config, "item value must be nonnegative");
  }
}

inline EncryptionPlan make_plan(std::span<const Item> items, std::vector<std::size_t> chosen,
                                std::int64_t threshold_scaled, std::uint64_t total_parameters) {
  EncryptionPlan plan;
  plan.threshold_scaled = threshold_scaled;
  for (auto i : chosen) {
    plan.selected.push_back(items[i].core_id);
    plan.total_cost += items[i].cost;
    plan.total_scaled_value += items[i].scaled_value;
  }
  std::sort(plan.selected.begin(), plan.selected.end());
  if (total_parameters == 0)
    for (const auto& it : items) total_parameters += it.cost;
  plan.encryption_ratio =
      total_parameters == 0 ? 0.0 : static_cast<double>(plan.total_cost) / static_cast<double>(total_parameters);
  return plan;
}

}  // namespace detail

/// Value-dimension DP: dp[v] is the least cost reaching scaled value exactly v
/// with the items seen so far, updated in place with v descending so that
/// dp[v - v_i] still holds the previous row. One parent bit per (item, value)
/// records whether the improvement came from taking the item; backtracking from
/// v* = argmin_{v >= threshold} dp[v] (lowest v on ties) rebuilds the set.
/// total_parameters (0: sum of item costs) is the encryption-ratio denominator.
inline EncryptionPlan value_dp_select(std::span<const Item> items, std::int64_t threshold_scaled,
                                      std::uint64_t total_parameters = 0) {
  detail::check_items(items, threshold_scaled);
  std::int64_t v_max = 0;
  for (const auto& it : items) v_max += it.scaled_value;
  require(threshold_scaled <= v_max, ErrorKind::infeasible,
          "threshold " + std::to_string(threshold_scaled) + " exceeds total attainable value " +
              std::to_string(v_max));

  constexpr std::uint64_t kInf = std::numeric_limits<std::uint64_t>::max();
  const auto width = static_cast<std::size_t>(v_max) + 1;
  const std::size_t words = (width + 63) / 64;
  const std::size_t n = items.size();
  std::vector<std::uint64_t> dp(width, kInf);
  std::vector<std::uint64_t> parent(n * words, 0);
  dp[0] = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto vi = static_cast<std::size_t>(items[i].scaled_value);
    const std::uint64_t wi = items[i].cost;
    std::uint64_t* bits = &parent[i * words];
    for (std::size_t v = width; v-- > vi;) {
      const std::uint64_t from = dp[v - vi];
      if (from == kInf) continue;
      if (from + wi < dp[v]) {
        dp[v] = from + wi;
        bits[v / 64] |= std::uint64_t{1} << (v % 64);
      }
    }
  }

  std::size_t best_v = static_cast<std::size_t>(threshold_scaled);
  for (std::size_t v = best_v; v < width; ++v)
    if (dp[v] < dp[best_v]) best_v = v;
  require(dp[best_v] != kInf, ErrorKind::infeasible, "no subset reaches the threshold");

  std::vector<std::size_t> chosen;
  std::size_t v = best_v;
  for (std::size_t i = n; i-- > 0;) {
    if ((parent[i * words + v / 64] >> (v % 64)) & 1U) {
      chosen.push_back(i);
      v -= static_cast<std::size_t>(items[i].scaled_value);
    }
  }
  auto plan = detail::make_plan(items, std::move(chosen), threshold_scaled, total_parameters);
  require(plan.total_cost == dp[best_v] && plan.total_scaled_value == static_cast<std::int64_t>(best_v),
          ErrorKind::internal, "value-DP backtrack disagrees with the table");
  return plan;
}

inline constexpr std::size_t kBruteForceLimit = 20;

/// Exhaustive minimum-cost subset meeting the threshold. Ties: fewer items,
/// then lexicographically smaller sorted core-id list.
inline EncryptionPlan brute_force_select(std::span<const Item> items, std::int64_t threshold_scaled,
                                         std::uint64_t total_parameters = 0) {
  detail::check_items(items, threshold_scaled);
  const std::size_t n = items.size();
  require(n <= kBruteForceLimit, ErrorKind::size_guard,
          "brute force limited to " + std::to_string(kBruteForceLimit) + " items");

  auto ids_of = [&](std::uint32_t mask) {
    std::vector<CoreId> ids;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) ids.push_back(items[i].core_id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };

  bool found = false;
  std::uint32_t best = 0;
  std::uint64_t best_cost = 0;
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << n); ++mask) {
    std::uint64_t cost = 0;
    std::int64_t value = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) {
        cost += items[i].cost;
        value += items[i].scaled_value;
      }
    if (value < threshold_scaled) continue;
    bool better = !found || cost < best_cost;
    if (found && cost == best_cost) {
      const int pa = std::popcount(mask), pb = std::popcount(best);
      better = pa < pb || (pa == pb && ids_of(mask) < ids_of(best));
    }
    if (better) {
      found = true;
      best = mask;
      best_cost = cost;
    }
  }
  require(found, ErrorKind::infeasible, "no subset reaches the threshold");
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n; ++i)
    if (best >> i & 1U) chosen.push_back(i);
  return detail::make_plan(items, std::move(chosen), threshold_scaled, total_parameters);
}

/// Plan holding the given cores (cost and value summed from the items).
inline EncryptionPlan plan_of(std::span<const Item> items, std::span<const CoreId> cores,
                              std::uint64_t total_parameters = 0) {
  std::vector<std::size_t> chosen;
  for (auto id : cores) {
    auto it = std::find_if(items.begin(), items.end(), [&](const Item& x) { return x.core_id == id; });
    require(it != items.end(), ErrorKind::unknown_core, "plan names unknown core " + id.str());
    chosen.push_back(static_cast<std::size_t>(it - items.begin()));
  }
  return detail::make_plan(items, std::move(chosen), 0, total_parameters);
}

/// Dense baseline: rank weight rows (dense rows and TT-core mode slices) by
/// descending L1 norm and take them until at least ratio of the row parameters
/// is covered.
inline EncryptionPlan l1_baseline_select(const Model& model, double ratio) {
  require(ratio >= 0.0 && ratio <= 1.0, ErrorKind::config, "ratio must lie in [0,1]");
  std::vector<RowSelection> rows;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    const auto lid = static_cast<std::uint32_t>(l);
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      for (std::size_t o = 0; o < d->out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < d->in; ++i) s += std::abs(d->weight[o * d->in + i]);
        rows.push_back({{lid, BlockKind::weight, 0}, o, d->in, s});
      }
    } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      for (std::size_t k = 0; k < tt->tt.order(); ++k) {
        const auto& c = tt->tt.core(k);
        for (std::size_t j = 0; j < c.mode_size; ++j) {
          double s = 0.0;
          for (std::size_t a = 0; a < c.left_rank; ++a)
            for (std::size_t b = 0; b < c.right_rank; ++b) s += std::abs(c.at(a, j, b));
          rows.push_back({{lid, BlockKind::core, static_cast<std::uint32_t>(k)}, j,
                          c.left_rank * c.right_rank, s});
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.l1 > b.l1; });
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size;
  const double target = ratio * static_cast<double>(total);

  EncryptionPlan plan;
  for (const auto& r : rows) {
    if (static_cast<double>(plan.total_cost) >= target) break;
    plan.rows.push_back(r);
    plan.total_cost += r.size;
  }
  plan.encryption_ratio = total == 0 ? 0.0 : static_cast<double>(plan.total_cost) / static_cast<double>(total);
  return plan;
}

/// `core_id,selected,cost,value` for every item.
inline std::string plan_to_csv(const EncryptionPlan& plan, std::span<const Item> items) {
  std::ostringstream out;
  out.precision(17);
  out << "core_id,selected,cost,value\n";
  for (const auto& it : items)
    out << it.core_id.str() << ',' << (plan.contains(it.core_id) ? 1 : 0) << ',' << it.cost << ','
        << it.value << '\n';
  return out.str();
}

inline EncryptionPlan plan_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("core_id,selected,cost,value", 0) == 0,
          ErrorKind::format, "plan CSV header must be core_id,selected,cost,value");
  EncryptionPlan plan;
  std::uint64_t total = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, sel, cost, value;
    require(std::getline(fields, id, ',') && std::getline(fields, sel, ',') &&
                std::getline(fields, cost, ',') && std::getline(fields, value, ','),
            ErrorKind::format, "bad plan row '" + line + "'");
    require(sel == "0" || sel == "1", ErrorKind::format, "selected must be 0 or 1");
    const auto c = std::stoull(cost);
    total += c;
    if (sel == "1") {
      plan.selected.push_back(CoreId::parse(id));
      plan.total_cost += c;
    }
  }
  std::sort(plan.selected.begin(), plan.selected.end());
  plan.encryption_ratio = total == 0 ? 0.0 : static_cast<double>(plan.total_cost) / static_cast<double>(total);
  return plan;
}

}  // namespace ttseal

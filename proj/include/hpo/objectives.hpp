#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpo/config_space.hpp"

namespace hpo {

/// Linear-interpolation percentile (closest-ranks), q in [0, 100].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

inline double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

// ---------------------------------------------------------------------------
// Error measures

/// Magnitude of relative error. A zero actual falls back to |predicted|.
inline double mre(double actual, double predicted) noexcept {
  if (actual == 0.0) return std::abs(predicted);
  return std::abs(actual - predicted) / std::abs(actual);
}

inline constexpr double kPred40Threshold = 0.40;

inline double pred40(std::span<const double> mres) {
  if (mres.empty()) throw std::invalid_argument("pred40 of an empty list");
  const auto hits = std::count_if(mres.begin(), mres.end(),
                                  [](double m) { return m <= kPred40Threshold; });
  return static_cast<double>(hits) / static_cast<double>(mres.size());
}

inline double mean_absolute_error(std::span<const double> predictions,
                                  std::span<const double> actuals) {
  if (predictions.size() != actuals.size() || predictions.empty())
    throw std::invalid_argument("MAE needs equal, non-empty lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) s += std::abs(predictions[i] - actuals[i]);
  return s / static_cast<double>(actuals.size());
}

inline constexpr double kSaFloor = -1000.0;

/// Standardized accuracy against naive guesses, in percent.
inline double sa(std::span<const double> predictions, std::span<const double> actuals,
                 std::span<const double> guesses) {
  if (guesses.size() != actuals.size())
    throw std::invalid_argument("sa: guesses and actuals differ in length");
  const double mae = mean_absolute_error(predictions, actuals);
  const double mae_guess = mean_absolute_error(guesses, actuals);
  if (mae_guess == 0.0) return mae == 0.0 ? 100.0 : kSaFloor;
  return (1.0 - mae / mae_guess) * 100.0;
}

// ---------------------------------------------------------------------------
// Objectives and goal directions

struct Objectives {
  double mre = 0.0;
  double pred40 = 0.0;
  double sa = 0.0;
  std::optional<double> d2h;

  /// The three goals known at evaluation time, in GoalSpec::search() order.
  std::vector<double> goals() const { return {mre, pred40, sa}; }

  friend bool operator==(const Objectives&, const Objectives&) = default;
};

/// Scores a rolling test window: MRE is the median of per-month MREs.
inline Objectives score_window(std::span<const double> predictions,
                               std::span<const double> actuals,
                               std::span<const double> guesses) {
  if (predictions.size() != actuals.size() || actuals.empty())
    throw std::invalid_argument("score_window needs equal, non-empty lengths");
  std::vector<double> mres(actuals.size());
  for (std::size_t i = 0; i < actuals.size(); ++i) mres[i] = mre(actuals[i], predictions[i]);
  Objectives o;
  o.pred40 = pred40(mres);
  o.mre = median(std::move(mres));
  o.sa = sa(predictions, actuals, guesses);
  return o;
}

/// Goal names and directions: +1 maximize, -1 minimize.
struct GoalSpec {
  std::vector<std::string> names;
  std::vector<int> weights;

  std::size_t size() const noexcept { return weights.size(); }

  /// Goals available while searching (d2h only exists post hoc).
  static GoalSpec search() { return {{"mre", "pred40", "sa"}, {-1, +1, +1}}; }
  /// All four reported goals.
  static GoalSpec health() { return {{"mre", "pred40", "sa", "d2h"}, {-1, +1, +1, -1}}; }
};

/// Per-goal min/max over a comparison pool.
struct GoalBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  static GoalBounds of(std::span<const std::vector<double>> pool) {
    if (pool.empty()) throw std::invalid_argument("goal bounds of an empty pool");
    GoalBounds b{pool.front(), pool.front()};
    for (const auto& v : pool) {
      if (v.size() != b.lo.size()) throw std::invalid_argument("goal vectors differ in length");
      for (std::size_t j = 0; j < v.size(); ++j) {
        b.lo[j] = std::min(b.lo[j], v[j]);
        b.hi[j] = std::max(b.hi[j], v[j]);
      }
    }
    return b;
  }

  double normalize(std::size_t j, double x) const {
    const double w = hi[j] - lo[j];
    return w > 0.0 ? (x - lo[j]) / w : 0.0;
  }
};

namespace detail {

inline void check_lengths(std::span<const double> a, std::span<const double> b,
                          const GoalSpec& goals) {
  if (a.size() != goals.size() || b.size() != goals.size() || goals.names.size() != goals.size())
    throw std::invalid_argument("goal vector length does not match the goal spec");
}

}  // namespace detail

/// Continuous-domination loss of moving from a to b, on goals already
/// normalized by `bounds`.
inline double zitzler_loss(std::span<const double> a, std::span<const double> b,
                           const GoalSpec& goals, const GoalBounds& bounds) {
  detail::check_lengths(a, b, goals);
  const auto n = static_cast<double>(goals.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < goals.size(); ++j) {
    const double delta =
        goals.weights[j] * (bounds.normalize(j, a[j]) - bounds.normalize(j, b[j])) / n;
    loss -= std::exp(delta) / n;
  }
  return loss;
}

namespace detail {

/// Pair-normalized values: min-max over {a, b} maps the larger to 1, the
/// smaller to 0, and equal values to 0.
inline double pair_normalized(double x, double other) noexcept { return x > other ? 1.0 : 0.0; }

inline double pair_loss(std::span<const double> a, std::span<const double> b,
                        const GoalSpec& goals) noexcept {
  const auto n = static_cast<double>(goals.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < goals.size(); ++j) {
    const double delta =
        goals.weights[j] * (pair_normalized(a[j], b[j]) - pair_normalized(b[j], a[j])) / n;
    loss -= std::exp(delta) / n;
  }
  return loss;
}

}  // namespace detail

/// Loss with the pair {a, b} as the normalization pool.
inline double zitzler_loss(std::span<const double> a, std::span<const double> b,
                           const GoalSpec& goals) {
  detail::check_lengths(a, b, goals);
  return detail::pair_loss(a, b, goals);
}

/// True iff b is worse than a: loss(b, a) > loss(a, b).
inline bool better(std::span<const double> a, std::span<const double> b, const GoalSpec& goals,
                   const GoalBounds& bounds) {
  return zitzler_loss(b, a, goals, bounds) > zitzler_loss(a, b, goals, bounds);
}

inline bool better(std::span<const double> a, std::span<const double> b, const GoalSpec& goals) {
  detail::check_lengths(a, b, goals);
  return detail::pair_loss(b, a, goals) > detail::pair_loss(a, b, goals);
}

inline bool better(const Objectives& a, const Objectives& b,
                   const GoalSpec& goals = GoalSpec::search()) {
  return better(a.goals(), b.goals(), goals);
}

/// Classic Pareto domination. Only used as a reference relation in tests.
inline bool boolean_dominates(std::span<const double> a, std::span<const double> b,
                              const GoalSpec& goals) {
  detail::check_lengths(a, b, goals);
  bool strictly = false;
  for (std::size_t j = 0; j < goals.size(); ++j) {
    const double x = goals.weights[j] * a[j];
    const double y = goals.weights[j] * b[j];
    if (x < y) return false;
    if (x > y) strictly = true;
  }
  return strictly;
}

/// Best-first order of a pool of goal vectors. Zitzler's pairwise relation is
/// not transitive, so items are keyed by how many pool members they beat
/// (pool-normalized), ties broken by ascending id. Returns positions.
inline std::vector<std::size_t> zitzler_order(std::span<const std::vector<double>> vectors,
                                              std::span<const std::uint64_t> ids,
                                              const GoalSpec& goals) {
  if (vectors.size() != ids.size()) throw std::invalid_argument("ids and vectors differ in length");
  const std::size_t m = vectors.size();
  if (m == 0) return {};
  const auto bounds = GoalBounds::of(vectors);
  const std::size_t n = goals.size();
  const auto nd = static_cast<double>(n);
  // loss(A,B) = -1/n * sum_j exp(w_j a_j / n) * exp(-w_j b_j / n)
  std::vector<double> up(m * n), down(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    detail::check_lengths(vectors[i], vectors[i], goals);
    for (std::size_t j = 0; j < n; ++j) {
      const double s = goals.weights[j] * bounds.normalize(j, vectors[i][j]) / nd;
      up[i * n + j] = std::exp(s);
      down[i * n + j] = std::exp(-s);
    }
  }
  auto loss = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += up[a * n + j] * down[b * n + j];
    return -s / nd;
  };
  std::vector<std::size_t> wins(m, 0);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const double ab = loss(a, b), ba = loss(b, a);
      if (ba > ab) ++wins[a];
      else if (ab > ba) ++wins[b];
    }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
    if (wins[p] != wins[q]) return wins[p] > wins[q];
    if (ids[p] != ids[q]) return ids[p] < ids[q];
    return p < q;
  });
  return order;
}

/// d2h = i / |Z| for the item at best-first position i.
inline std::vector<std::pair<Candidate, double>> rank_d2h(
    std::span<const std::pair<Candidate, std::vector<double>>> evaluated, const GoalSpec& goals) {
  if (evaluated.empty()) throw std::invalid_argument("rank_d2h of an empty pool");
  std::vector<std::vector<double>> vectors;
  std::vector<std::uint64_t> ids;
  vectors.reserve(evaluated.size());
  ids.reserve(evaluated.size());
  for (const auto& [c, v] : evaluated) {
    vectors.push_back(v);
    ids.push_back(c.id);
  }
  const auto order = zitzler_order(vectors, ids, goals);
  std::vector<std::pair<Candidate, double>> out;
  out.reserve(order.size());
  const auto z = static_cast<double>(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.emplace_back(evaluated[order[i]].first, static_cast<double>(i) / z);
  return out;
}

}  // namespace hpo

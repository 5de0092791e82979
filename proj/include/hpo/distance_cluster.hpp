#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hpo/config_space.hpp"
#include "hpo/rng.hpp"

namespace hpo {

/// Normalized Euclidean distance in [0, 1]. Numeric parameters contribute
/// |a - b| / (max - min), categoricals contribute 0 or 1.
inline double dist(const Candidate& a, const Candidate& b, const ConfigSpace& space) {
  if (!space.contains(a) || !space.contains(b))
    throw std::invalid_argument("dist: candidates do not belong to this space");
  double sum = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& p = space[i];
    double d = 0.0;
    if (p.is_numeric()) {
      const double w = p.span();
      d = w > 0.0 ? std::abs(a.value[i] - b.value[i]) / w : 0.0;
    } else {
      d = a.index[i] == b.index[i] ? 0.0 : 1.0;
    }
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(space.size()));
}

/// Cosine-rule position of a point on the line from the left pole (x = 0) to
/// the right pole (x = c), given its distances a, b to the two poles.
inline double project(double a, double b, double c) noexcept {
  return (a * a + c * c - b * b) / (2.0 * c);
}

struct SplitResult {
  Candidate left_pole;
  Candidate right_pole;
  /// Rows nearest the left pole, in ascending projection order.
  std::vector<Candidate> lefts;
  /// Remaining rows, continuing the projection order.
  std::vector<Candidate> rights;
};

namespace detail {

/// Row at the `furthest` quantile of distance from `from`; ties by id.
inline std::size_t quantile_far(std::span<const Candidate> rows, const Candidate& from,
                                const ConfigSpace& space, double furthest) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) d.emplace_back(dist(rows[i], from, space), i);
  std::sort(d.begin(), d.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    return rows[x.second].id < rows[y.second].id;
  });
  auto k = static_cast<std::size_t>(std::ceil(furthest * static_cast<double>(rows.size() - 1)));
  k = std::min(k, rows.size() - 1);
  return d[k].second;
}

}  // namespace detail

/// Split rows in two around a pair of distant poles (FastMap style).
inline SplitResult half(std::span<const Candidate> rows, const ConfigSpace& space, Rng& rng,
                        double furthest = 0.95) {
  if (rows.size() < 2) throw std::invalid_argument("half: need at least two rows");
  if (!(furthest > 0.0 && furthest <= 1.0)) throw std::invalid_argument("half: furthest in (0,1]");

  const auto& tmp = rows[rng.index(rows.size())];
  const std::size_t li = detail::quantile_far(rows, tmp, space, furthest);
  std::size_t ri = detail::quantile_far(rows, rows[li], space, furthest);
  if (ri == li) ri = (li + 1) % rows.size();

  SplitResult out{rows[li], rows[ri], {}, {}};
  const std::size_t n = rows.size();
  const std::size_t n_left = (n + 1) / 2;  // i < n/2 goes left
  const double c = dist(out.left_pole, out.right_pole, space);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (c > 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = dist(rows[i], out.left_pole, space);
      const double b = dist(rows[i], out.right_pole, space);
      x[i] = std::clamp(project(a, b, c), 0.0, c);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
      if (x[p] != x[q]) return x[p] < x[q];
      return rows[p].id < rows[q].id;
    });
  }
  // c == 0: every row coincides, keep input order.
  out.lefts.reserve(n_left);
  out.rights.reserve(n - n_left);
  for (std::size_t k = 0; k < n; ++k)
    (k < n_left ? out.lefts : out.rights).push_back(rows[order[k]]);
  return out;
}

inline SplitResult half(std::span<const Candidate> rows, const ConfigSpace& space,
                        std::uint64_t seed, double furthest = 0.95) {
  Rng rng(seed);
  return half(rows, space, rng, furthest);
}

/// Node of the recursive cluster tree. Internal nodes carry both poles and
/// both children; leaves carry neither.
struct TreeNode {
  std::vector<Candidate> rows;
  std::optional<Candidate> left_pole;
  std::optional<Candidate> right_pole;
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;
  std::size_t depth = 0;
  bool queried = false;

  bool is_leaf() const noexcept { return !left && !right; }

  template <class F>
  void visit(F&& f) {
    f(*this);
    if (left) left->visit(f);
    if (right) right->visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    f(*this);
    if (left) std::as_const(*left).visit(f);
    if (right) std::as_const(*right).visit(f);
  }
};

inline double default_stop(std::size_t n) { return std::sqrt(static_cast<double>(n)); }

namespace detail {

inline std::unique_ptr<TreeNode> build_tree(std::vector<Candidate> rows, const ConfigSpace& space,
                                            double stop, Rng& rng, double furthest,
                                            std::size_t depth) {
  auto node = std::make_unique<TreeNode>();
  node->depth = depth;
  node->rows = std::move(rows);
  if (node->rows.size() < 2 || static_cast<double>(node->rows.size()) <= stop) return node;
  auto split = half(node->rows, space, rng, furthest);
  node->left_pole = std::move(split.left_pole);
  node->right_pole = std::move(split.right_pole);
  node->left = build_tree(std::move(split.lefts), space, stop, rng, furthest, depth + 1);
  node->right = build_tree(std::move(split.rights), space, stop, rng, furthest, depth + 1);
  return node;
}

}  // namespace detail

/// Recursive halving until a node holds at most `stop` rows. Evaluates nothing.
inline std::unique_ptr<TreeNode> tree(std::vector<Candidate> rows, const ConfigSpace& space,
                                      std::uint64_t seed, std::optional<double> stop = {},
                                      double furthest = 0.95) {
  if (rows.empty()) throw std::invalid_argument("tree: rows must be non-empty");
  const double s = stop.value_or(default_stop(rows.size()));
  Rng rng(seed);
  return detail::build_tree(std::move(rows), space, s, rng, furthest, 0);
}

}  // namespace hpo

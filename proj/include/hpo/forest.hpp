#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpo/config_space.hpp"
#include "hpo/rng.hpp"

namespace hpo {

enum class Criterion { squared, absolute, poisson };

inline std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::squared: return "squared";
    case Criterion::absolute: return "absolute";
    case Criterion::poisson: return "poisson";
  }
  return "?";
}

inline Criterion parse_criterion(std::string_view s) {
  if (s == "squared") return Criterion::squared;
  if (s == "absolute") return Criterion::absolute;
  if (s == "poisson") return Criterion::poisson;
  throw std::invalid_argument("unknown criterion: " + std::string(s));
}

struct ForestParams {
  std::size_t n_estimators = 100;
  std::size_t min_samples_leaf = 1;
  double min_impurity_decrease = 0.0;
  std::size_t max_depth = 20;
  Criterion criterion = Criterion::squared;
  /// Off only for tests and single-tree surrogates.
  bool bootstrap = true;

  /// Reads the five forest parameters from a candidate by parameter name.
  static ForestParams from_candidate(const Candidate& c, const ConfigSpace& space) {
    ForestParams p;
    p.n_estimators = static_cast<std::size_t>(c.value.at(space.find("n_estimators")));
    p.min_samples_leaf = static_cast<std::size_t>(c.value.at(space.find("min_sample_leaves")));
    p.min_impurity_decrease = c.value.at(space.find("min_impurity_decrease"));
    p.max_depth = static_cast<std::size_t>(c.value.at(space.find("max_depth")));
    const auto ci = space.find("criterion");
    p.criterion = parse_criterion(space[ci].choices.at(c.index.at(ci)));
    return p;
  }
};

/// Row-major feature matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

namespace detail {

/// Sum of absolute deviations from the median of a dynamic multiset, with
/// values addressed by precomputed rank. Fenwick trees over counts and sums.
class AbsDeviation {
 public:
  explicit AbsDeviation(std::span<const double> sorted_values)
      : sorted_(sorted_values), cnt_(sorted_values.size() + 1, 0), sum_(sorted_values.size() + 1, 0.0) {
    while (top_ * 2 < cnt_.size()) top_ *= 2;
  }

  void reset() {
    std::fill(cnt_.begin(), cnt_.end(), 0);
    std::fill(sum_.begin(), sum_.end(), 0.0);
    n_ = 0;
    total_ = 0.0;
  }

  void add(std::size_t rank, int sign) {
    const double v = sign * sorted_[rank];
    n_ += sign;
    total_ += v;
    for (std::size_t i = rank + 1; i < cnt_.size(); i += i & (~i + 1)) {
      cnt_[i] += sign;
      sum_[i] += v;
    }
  }

  double deviation() const {
    if (n_ <= 0) return 0.0;
    // Any point between the middle order statistics minimizes the sum.
    const auto k = static_cast<std::size_t>((n_ + 1) / 2);  // 1-based lower median
    std::size_t pos = 0;
    int acc = 0;
    double below = 0.0;
    for (std::size_t step = top_; step; step /= 2) {
      const auto next = pos + step;
      if (next < cnt_.size() && acc + cnt_[next] < static_cast<int>(k)) {
        pos = next;
        acc += cnt_[next];
        below += sum_[next];
      }
    }
    const double med = sorted_[pos];  // rank pos (0-based) holds the k-th value
    const double n_below = acc, n_above = n_ - acc;
    const double above = total_ - below;
    return (med * n_below - below) + (above - med * n_above);
  }

  int size() const noexcept { return n_; }

 private:
  std::span<const double> sorted_;
  std::vector<int> cnt_;
  std::vector<double> sum_;
  std::size_t top_ = 1;
  int n_ = 0;
  double total_ = 0.0;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline constexpr double kPoissonFloor = 1e-9;

/// Mean half Poisson deviance given sums over a node.
inline double poisson_impurity(double n, double sum_y, double sum_ylogy) {
  const double mu = std::max(sum_y / n, kPoissonFloor);
  return (sum_ylogy - sum_y * std::log(mu) - sum_y + n * mu) / n;
}

inline double xlogx(double y) { return y > 0.0 ? y * std::log(y) : 0.0; }

}  // namespace detail

/// Impurity of a set of targets under a criterion.
inline double impurity(std::span<const double> y, Criterion criterion) {
  if (y.empty()) return 0.0;
  const auto n = static_cast<double>(y.size());
  switch (criterion) {
    case Criterion::squared: {
      const double m = std::accumulate(y.begin(), y.end(), 0.0) / n;
      double s = 0.0;
      for (double v : y) s += (v - m) * (v - m);
      return s / n;
    }
    case Criterion::absolute: {
      const double med = detail::median_of({y.begin(), y.end()});
      double s = 0.0;
      for (double v : y) s += std::abs(v - med);
      return s / n;
    }
    case Criterion::poisson: {
      double sy = 0.0, syl = 0.0;
      for (double v : y) {
        sy += v;
        syl += detail::xlogx(v);
      }
      return detail::poisson_impurity(n, sy, syl);
    }
  }
  return 0.0;
}

/// Leaf prediction: median for absolute, mean otherwise.
inline double leaf_value(std::span<const double> y, Criterion criterion) {
  if (y.empty()) return 0.0;
  if (criterion == Criterion::absolute) return detail::median_of({y.begin(), y.end()});
  return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

/// Per-dataset orderings shared by every tree of a forest.
struct Presort {
  std::vector<std::vector<std::size_t>> by_feature;  // rows ascending by x(., f)
  std::vector<std::size_t> y_rank;                   // row -> rank in ascending y
  std::vector<double> y_sorted;
  std::vector<double> y_xlogx;

  Presort() = default;
  Presort(const Matrix& x, std::span<const double> y) {
    std::vector<std::size_t> base(x.rows);
    std::iota(base.begin(), base.end(), std::size_t{0});
    by_feature.assign(x.cols, base);
    for (std::size_t f = 0; f < x.cols; ++f)
      std::stable_sort(by_feature[f].begin(), by_feature[f].end(),
                       [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
    auto order = base;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    y_rank.resize(x.rows);
    y_sorted.resize(x.rows);
    for (std::size_t k = 0; k < x.rows; ++k) {
      y_rank[order[k]] = k;
      y_sorted[k] = y[order[k]];
    }
    y_xlogx.resize(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) y_xlogx[r] = detail::xlogx(y[r]);
  }
};

/// CART regression tree with exhaustive midpoint thresholds.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
    std::size_t depth = 0;
    std::size_t samples = 0;
  };

  /// Fits on the rows listed in `sample` (duplicates allowed).
  void fit(const Matrix& x, std::span<const double> y, std::vector<std::size_t> sample,
           const ForestParams& params) {
    const Presort pre(x, y);
    fit(x, y, std::move(sample), params, pre);
  }

  void fit(const Matrix& x, std::span<const double> y, std::vector<std::size_t> sample,
           const ForestParams& params, const Presort& pre) {
    nodes_.clear();
    n_features_ = x.cols;
    total_ = static_cast<double>(sample.size());
    if (sample.empty()) throw std::invalid_argument("fit: empty sample");
    for (auto r : sample)
      if (r >= x.rows) throw std::out_of_range("sample row outside the data");
    Scratch scratch(x.rows, pre);
    build(x, y, std::span<std::size_t>(sample), params, pre, scratch, 0);
  }

  double predict(std::span<const double> row) const {
    if (row.size() != n_features_) throw std::invalid_argument("feature arity mismatch");
    int i = 0;
    while (nodes_[i].feature >= 0) {
      const auto& n = nodes_[i];
      i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[i].value;
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& root() const { return nodes_.front(); }

  std::size_t depth() const noexcept {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double child_impurity = 0.0;  // n_left * imp_left + n_right * imp_right
  };

  struct Scratch {
    Scratch(std::size_t rows, const Presort& pre)
        : count(rows, 0), left_abs(pre.y_sorted), right_abs(pre.y_sorted) {}
    std::vector<int> count;
    std::vector<std::size_t> seq;
    std::vector<double> ys, prefix_y, prefix_y2, prefix_ylog;
    detail::AbsDeviation left_abs, right_abs;
  };

  /// Grows the subtree over `sample`, reordering it in place.
  int build(const Matrix& x, std::span<const double> y, std::span<std::size_t> sample,
            const ForestParams& params, const Presort& pre, Scratch& s, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    s.ys.resize(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) s.ys[i] = y[sample[i]];
    nodes_[id].value = leaf_value(s.ys, params.criterion);
    nodes_[id].depth = depth;
    nodes_[id].samples = sample.size();

    const std::size_t n = sample.size();
    const std::size_t min_leaf = std::max<std::size_t>(params.min_samples_leaf, 1);
    if (depth >= params.max_depth || n < 2 * min_leaf) return id;
    const double node_imp = impurity(s.ys, params.criterion);
    if (node_imp <= 1e-12) return id;

    const auto split = best_split(x, y, sample, params.criterion, min_leaf, pre, s);
    if (split.feature < 0) return id;
    const double nd = static_cast<double>(n);
    const double decrease = nd / total_ * (node_imp - split.child_impurity / nd);
    if (decrease < params.min_impurity_decrease) return id;

    const auto mid = std::partition(sample.begin(), sample.end(), [&](std::size_t r) {
      return x(r, split.feature) <= split.threshold;
    });
    const auto n_lo = static_cast<std::size_t>(mid - sample.begin());
    nodes_[id].feature = split.feature;
    nodes_[id].threshold = split.threshold;
    const int l = build(x, y, sample.first(n_lo), params, pre, s, depth + 1);
    nodes_[id].left = l;
    const int r = build(x, y, sample.subspan(n_lo), params, pre, s, depth + 1);
    nodes_[id].right = r;
    return id;
  }

  static Split best_split(const Matrix& x, std::span<const double> y,
                          std::span<const std::size_t> sample, Criterion criterion,
                          std::size_t min_leaf, const Presort& pre, Scratch& s) {
    const std::size_t n = sample.size();
    Split best;
    double best_score = 0.0;

    for (auto r : sample) ++s.count[r];
    s.seq.resize(n);
    s.prefix_y.assign(n + 1, 0.0);
    s.prefix_y2.assign(n + 1, 0.0);
    s.prefix_ylog.assign(n + 1, 0.0);

    for (std::size_t f = 0; f < x.cols; ++f) {
      // Sample rows in ascending x(., f), duplicates kept.
      std::size_t k = 0;
      for (auto r : pre.by_feature[f])
        for (int c = 0; c < s.count[r]; ++c) s.seq[k++] = r;
      if (x(s.seq.front(), f) == x(s.seq.back(), f)) continue;

      if (criterion == Criterion::absolute) {
        s.left_abs.reset();
        s.right_abs.reset();
        for (std::size_t i = 0; i < n; ++i) s.right_abs.add(pre.y_rank[s.seq[i]], +1);
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          const double v = y[s.seq[i]];
          s.prefix_y[i + 1] = s.prefix_y[i] + v;
          s.prefix_y2[i + 1] = s.prefix_y2[i] + v * v;
          s.prefix_ylog[i + 1] = s.prefix_ylog[i] + pre.y_xlogx[s.seq[i]];
        }
      }

      auto weighted = [&](std::size_t i) {
        // impurity * count for the first i rows and for the rest
        const double nl = static_cast<double>(i), nr = static_cast<double>(n - i);
        switch (criterion) {
          case Criterion::squared: {
            const double sl = s.prefix_y[i], sr = s.prefix_y[n] - sl;
            const double ql = s.prefix_y2[i], qr = s.prefix_y2[n] - ql;
            return std::max(0.0, ql - sl * sl / nl) + std::max(0.0, qr - sr * sr / nr);
          }
          case Criterion::absolute:
            return s.left_abs.deviation() + s.right_abs.deviation();
          case Criterion::poisson: {
            const double sl = s.prefix_y[i], sr = s.prefix_y[n] - sl;
            const double gl = s.prefix_ylog[i], gr = s.prefix_ylog[n] - gl;
            return nl * detail::poisson_impurity(nl, sl, gl) +
                   nr * detail::poisson_impurity(nr, sr, gr);
          }
        }
        return 0.0;
      };

      for (std::size_t i = 1; i + min_leaf <= n; ++i) {
        if (criterion == Criterion::absolute) {
          s.left_abs.add(pre.y_rank[s.seq[i - 1]], +1);
          s.right_abs.add(pre.y_rank[s.seq[i - 1]], -1);
        }
        if (i < min_leaf) continue;
        const double a = x(s.seq[i - 1], f), b = x(s.seq[i], f);
        if (!(a < b)) continue;
        const double score = weighted(i);
        if (best.feature < 0 || score < best_score) {
          best.feature = static_cast<int>(f);
          best.threshold = a + (b - a) / 2.0;
          best_score = score;
        }
      }
    }
    for (auto r : sample) s.count[r] = 0;
    best.child_impurity = best_score;
    return best;
  }

  std::vector<Node> nodes_;
  std::size_t n_features_ = 0;
  double total_ = 1.0;
};

class ForestModel {
 public:
  std::vector<double> predict(const Matrix& x) const {
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_row(x.row(r));
    return out;
  }

  double predict_row(std::span<const double> row) const {
    if (row.size() != n_features_) throw std::invalid_argument("feature arity mismatch");
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(row);
    return s / static_cast<double>(trees_.size());
  }

  std::size_t size() const noexcept { return trees_.size(); }
  const RegressionTree& tree(std::size_t i) const { return trees_.at(i); }
  /// In-bag row indices used to fit tree i.
  const std::vector<std::size_t>& in_bag(std::size_t i) const { return bags_.at(i); }

 private:
  friend ForestModel fit(const ForestParams&, const Matrix&, std::span<const double>,
                         std::uint64_t);
  std::vector<RegressionTree> trees_;
  std::vector<std::vector<std::size_t>> bags_;
  std::size_t n_features_ = 0;
};

/// Bagged ensemble of regression trees. Every split considers all features.
inline ForestModel fit(const ForestParams& params, const Matrix& x, std::span<const double> y,
                       std::uint64_t seed) {
  if (x.rows == 0 || x.cols == 0 || x.rows != y.size())
    throw std::invalid_argument("fit: empty or ragged data");
  if (params.n_estimators < 1) throw std::invalid_argument("fit: n_estimators must be >= 1");
  if (params.min_impurity_decrease < 0.0)
    throw std::invalid_argument("fit: min_impurity_decrease must be >= 0");
  if (params.criterion == Criterion::poisson &&
      std::any_of(y.begin(), y.end(), [](double v) { return v < 0.0; }))
    throw std::invalid_argument("fit: poisson criterion needs non-negative targets");

  ForestModel model;
  model.n_features_ = x.cols;
  const Presort pre(x, y);
  model.trees_.resize(params.n_estimators);
  model.bags_.resize(params.n_estimators);
  for (std::size_t t = 0; t < params.n_estimators; ++t) {
    std::vector<std::size_t> bag(x.rows);
    if (params.bootstrap) {
      Rng rng(mix_seed(seed, t));
      for (auto& b : bag) b = rng.index(x.rows);
    } else {
      std::iota(bag.begin(), bag.end(), std::size_t{0});
    }
    model.bags_[t] = bag;
    model.trees_[t].fit(x, y, std::move(bag), params, pre);
  }
  return model;
}

}  // namespace hpo

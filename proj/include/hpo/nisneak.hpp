#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hpo/config_space.hpp"
#include "hpo/distance_cluster.hpp"
#include "hpo/evaluation.hpp"
#include "hpo/objectives.hpp"
#include "hpo/sway.hpp"

namespace hpo {

// ---------------------------------------------------------------------------
// Entropy of a node's rows

/// Sum over parameter columns of the Shannon entropy (bits) of the grid-index
/// symbols present in `rows`.
inline double rows_entropy(std::span<const Candidate> rows, const ConfigSpace& space) {
  if (rows.empty()) return 0.0;
  const auto n = static_cast<double>(rows.size());
  double total = 0.0;
  std::vector<std::uint32_t> counts;
  for (std::size_t col = 0; col < space.size(); ++col) {
    counts.assign(space[col].grid_size(), 0);
    for (const auto& r : rows) ++counts[r.index[col]];
    for (auto k : counts) {
      if (k == 0) continue;
      const double p = static_cast<double>(k) / n;
      total -= p * std::log2(p);
    }
  }
  return total;
}

inline double node_entropy(const TreeNode& node, const ConfigSpace& space) {
  return rows_entropy(node.rows, space);
}

/// True when some column takes a different set of values in the two row sets.
inline bool columns_differ(std::span<const Candidate> a, std::span<const Candidate> b,
                           const ConfigSpace& space) {
  std::vector<char> in_a, in_b;
  for (std::size_t col = 0; col < space.size(); ++col) {
    in_a.assign(space[col].grid_size(), 0);
    in_b.assign(space[col].grid_size(), 0);
    for (const auto& r : a) in_a[r.index[col]] = 1;
    for (const auto& r : b) in_b[r.index[col]] = 1;
    if (in_a != in_b) return true;
  }
  return false;
}

/// Node i with children j, k scores n_i*H_i - (n_j*H_j + n_k*H_k).
inline double split_gain(const TreeNode& node, const ConfigSpace& space) {
  const auto w = [&](const TreeNode& n) {
    return static_cast<double>(n.rows.size()) * node_entropy(n, space);
  };
  return w(node) - (w(*node.left) + w(*node.right));
}

/// Eligible for probing: internal, not yet queried, both children populated
/// and distinguishable, and positive entropy.
inline bool probe_eligible(const TreeNode& node, const ConfigSpace& space) {
  if (node.is_leaf() || !node.left || !node.right || node.queried) return false;
  if (node.left->rows.empty() || node.right->rows.empty()) return false;
  if (!(node_entropy(node, space) > 0.0)) return false;
  return columns_differ(node.left->rows, node.right->rows, space);
}

namespace detail {

inline constexpr double kGainTolerance = 1e-9;

/// Orders equal-gain candidates: shallower first, then lowest pole ids.
inline bool probe_preferred(const TreeNode& a, const TreeNode& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  if (a.left_pole->id != b.left_pole->id) return a.left_pole->id < b.left_pole->id;
  return a.right_pole->id < b.right_pole->id;
}

}  // namespace detail

/// The eligible sub-tree with the largest entropy gain, or nullptr when none is left.
inline TreeNode* best_subtree(TreeNode& root, const ConfigSpace& space) {
  TreeNode* best = nullptr;
  double best_gain = 0.0;
  root.visit([&](TreeNode& node) {
    if (!probe_eligible(node, space)) return;
    const double gain = split_gain(node, space);
    const double tol = detail::kGainTolerance * std::max(1.0, std::abs(best_gain));
    if (!best || gain > best_gain + tol ||
        (std::abs(gain - best_gain) <= tol && detail::probe_preferred(node, *best))) {
      best = &node;
      best_gain = gain;
    }
  });
  return best;
}

// ---------------------------------------------------------------------------
// xPASS / yPASS / SELECT

struct ProbeStep {
  std::size_t depth = 0;
  std::size_t node_rows = 0;
  bool pruned_left = false;
  std::uint64_t left_pole = 0;
  std::uint64_t right_pole = 0;
};

struct XPassResult {
  std::vector<Candidate> survivors;
  std::vector<ProbeStep> steps;
};

namespace detail {

inline void clear_subtree(TreeNode& node) {
  node.visit([](TreeNode& n) { n.rows.clear(); });
}

inline void remove_rows(TreeNode& root, const std::unordered_set<std::uint64_t>& ids) {
  root.visit([&](TreeNode& n) {
    std::erase_if(n.rows, [&](const Candidate& c) { return ids.contains(c.id); });
  });
}

}  // namespace detail

/// Repeatedly probes the best sub-tree: evaluates its two poles and deletes the
/// rows of the child nearer the worse pole (ties keep the left child). Stops
/// when fewer than sqrt(N) rows survive or nothing is left to probe.
inline XPassResult xpass(TreeNode& root, const ConfigSpace& space, EvalSession& session,
                         const GoalSpec& goals = GoalSpec::search(),
                         std::optional<double> stop = {}) {
  const double limit = stop.value_or(default_stop(root.rows.size()));
  XPassResult out;
  while (static_cast<double>(root.rows.size()) >= limit) {
    TreeNode* node = best_subtree(root, space);
    if (!node) break;
    const auto left = session.evaluate(*node->left_pole);
    const auto right = session.evaluate(*node->right_pole);
    const bool prune_left = better(right.goals(), left.goals(), goals);
    TreeNode& doomed = prune_left ? *node->left : *node->right;
    std::unordered_set<std::uint64_t> ids;
    for (const auto& r : doomed.rows) ids.insert(r.id);
    out.steps.push_back({node->depth, node->rows.size(), prune_left, node->left_pole->id,
                         node->right_pole->id});
    detail::clear_subtree(doomed);
    detail::remove_rows(root, ids);
    node->queried = true;
  }
  out.survivors = root.rows;
  return out;
}

/// Pairs survivors by adjacent projection order, evaluates each pair and keeps
/// the better member (ties keep the first). An odd leftover passes unevaluated.
inline std::vector<Candidate> ypass(std::vector<Candidate> survivors, const ConfigSpace& space,
                                    EvalSession& session, std::uint64_t seed,
                                    const GoalSpec& goals = GoalSpec::search()) {
  if (survivors.empty()) throw std::invalid_argument("ypass: no survivors");
  if (survivors.size() < 2) return survivors;
  auto split = half(survivors, space, seed);
  std::vector<Candidate> order = std::move(split.lefts);
  order.insert(order.end(), std::make_move_iterator(split.rights.begin()),
               std::make_move_iterator(split.rights.end()));
  std::vector<Candidate> kept;
  kept.reserve(order.size() / 2 + 1);
  std::size_t i = 0;
  for (; i + 1 < order.size(); i += 2) {
    const auto a = session.evaluate(order[i]);
    const auto b = session.evaluate(order[i + 1]);
    kept.push_back(better(b.goals(), a.goals(), goals) ? order[i + 1] : order[i]);
  }
  if (i < order.size()) kept.push_back(order[i]);
  return kept;
}

enum class SelectPolicy { any, sany, all, sall };

inline std::string_view to_string(SelectPolicy p) {
  switch (p) {
    case SelectPolicy::any: return "any";
    case SelectPolicy::sany: return "sany";
    case SelectPolicy::all: return "all";
    case SelectPolicy::sall: return "sall";
  }
  return "?";
}

inline SelectPolicy parse_policy(std::string_view s) {
  for (auto p : {SelectPolicy::any, SelectPolicy::sany, SelectPolicy::all, SelectPolicy::sall})
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown select policy: " + std::string(s));
}

struct SelectResult {
  Candidate choice;
  /// Second-round sway halvings (SANY/SALL).
  std::size_t sway_levels = 0;
  /// Items the second round left (SANY/SALL), or the finalists (ANY/ALL).
  std::size_t shortlisted = 0;
};

/// Evaluation requests a select policy makes, given the observed second-round
/// shape. Tests compare this with the session's instrumented phase counter.
inline std::uint64_t select_requests(SelectPolicy p, std::size_t finalists,
                                     const SelectResult& r) {
  switch (p) {
    case SelectPolicy::any: return 1;
    case SelectPolicy::all: return finalists;
    case SelectPolicy::sany: return 2 * r.sway_levels;
    case SelectPolicy::sall: return 2 * r.sway_levels + r.shortlisted;
  }
  return 0;
}

namespace detail {

inline Candidate best_of(std::span<const Candidate> items, EvalSession& session,
                         const GoalSpec& goals) {
  std::vector<std::pair<Candidate, std::vector<double>>> pool;
  pool.reserve(items.size());
  for (const auto& c : items) pool.emplace_back(c, session.evaluate(c).goals());
  return rank_d2h(pool, goals).front().first;
}

}  // namespace detail

/// Reduces the finalists to one candidate. `pool_size` is the N of the original
/// pool; the second sway round stops at N^(1/4).
inline SelectResult select(std::vector<Candidate> finalists, SelectPolicy policy,
                           const ConfigSpace& space, EvalSession& session, std::uint64_t seed,
                           std::size_t pool_size, const GoalSpec& goals = GoalSpec::search()) {
  if (finalists.empty()) throw std::invalid_argument("select: no finalists");
  Rng rng(seed);
  SelectResult out;
  const double stop = std::max(1.0, std::pow(static_cast<double>(pool_size), 0.25));
  auto second_round = [&]() {
    if (finalists.size() < 2 || static_cast<double>(finalists.size()) <= stop) return finalists;
    SwayParams p;
    p.stop = stop;
    p.goals = goals;
    auto r = sway(finalists, space, session, p, rng.next());
    out.sway_levels = r.levels;
    return r.survivors;
  };
  switch (policy) {
    case SelectPolicy::any: {
      out.shortlisted = finalists.size();
      out.choice = finalists[rng.index(finalists.size())];
      session.evaluate(out.choice);
      break;
    }
    case SelectPolicy::all: {
      out.shortlisted = finalists.size();
      out.choice = detail::best_of(finalists, session, goals);
      break;
    }
    case SelectPolicy::sany: {
      auto shortlist = second_round();
      out.shortlisted = shortlist.size();
      out.choice = shortlist[rng.index(shortlist.size())];
      break;
    }
    case SelectPolicy::sall: {
      auto shortlist = second_round();
      out.shortlisted = shortlist.size();
      out.choice = detail::best_of(shortlist, session, goals);
      break;
    }
  }
  return out;
}

struct NisneakResult {
  Candidate choice;
  std::size_t pool_size = 0;
  std::size_t after_xpass = 0;
  std::size_t after_ypass = 0;
  std::vector<ProbeStep> probes;
  SelectResult selection;
};

/// SELECT(yPASS(xPASS(TREE(rows)))). Each stage runs in its own session phase
/// named "tree", "xpass", "ypass" and "select".
inline NisneakResult nisneak(std::vector<Candidate> rows, const ConfigSpace& space,
                             EvalSession& session, SelectPolicy policy, std::uint64_t seed,
                             const GoalSpec& goals = GoalSpec::search()) {
  if (rows.size() < 4) throw std::invalid_argument("nisneak: need at least four rows");
  NisneakResult out;
  out.pool_size = rows.size();

  session.begin_phase("tree");
  auto root = tree(std::move(rows), space, mix_seed(seed, 1));

  session.begin_phase("xpass");
  auto x = xpass(*root, space, session, goals);
  out.after_xpass = x.survivors.size();
  out.probes = std::move(x.steps);

  session.begin_phase("ypass");
  auto finalists = ypass(std::move(x.survivors), space, session, mix_seed(seed, 2), goals);
  out.after_ypass = finalists.size();

  session.begin_phase("select");
  out.selection = select(std::move(finalists), policy, space, session, mix_seed(seed, 3),
                         out.pool_size, goals);
  out.choice = out.selection.choice;
  return out;
}

}  // namespace hpo

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hpo/config_space.hpp"
#include "hpo/distance_cluster.hpp"
#include "hpo/evaluation.hpp"
#include "hpo/objectives.hpp"

namespace hpo {

struct SwayParams {
  /// Pool size at which recursion stops; sqrt(N) when unset.
  std::optional<double> stop;
  double furthest = 0.95;
  GoalSpec goals = GoalSpec::search();
};

struct SwayResult {
  std::vector<Candidate> survivors;
  /// Halvings performed (two pole requests each).
  std::size_t levels = 0;
  /// Ids of the pool entering each level, for auditing the descent.
  std::vector<std::vector<std::uint64_t>> visits;
};

/// Greedy recursive halving: evaluate both poles, keep the half nearer the
/// better pole, stop once the pool is no larger than `stop`. Ties keep the left.
inline SwayResult sway(std::vector<Candidate> rows, const ConfigSpace& space,
                       EvalSession& session, const SwayParams& params, std::uint64_t seed) {
  if (rows.size() < 2) throw std::invalid_argument("sway: need at least two rows");
  const double stop = params.stop.value_or(default_stop(rows.size()));
  if (!(stop >= 1.0)) throw std::invalid_argument("sway: stop must be >= 1");
  Rng rng(seed);
  SwayResult out;
  while (static_cast<double>(rows.size()) > stop && rows.size() >= 2) {
    auto& ids = out.visits.emplace_back();
    for (const auto& r : rows) ids.push_back(r.id);
    auto split = half(rows, space, rng, params.furthest);
    const auto left = session.evaluate(split.left_pole);
    const auto right = session.evaluate(split.right_pole);
    ++out.levels;
    rows = better(right.goals(), left.goals(), params.goals) ? std::move(split.rights)
                                                             : std::move(split.lefts);
  }
  out.survivors = std::move(rows);
  return out;
}

/// Runs sway, certifies the survivors and returns the best-ranked one.
inline Candidate sway_best(std::vector<Candidate> rows, const ConfigSpace& space,
                           EvalSession& session, const SwayParams& params, std::uint64_t seed) {
  auto result = sway(std::move(rows), space, session, params, seed);
  const auto scored = session.certify(result.survivors);
  std::vector<std::pair<Candidate, std::vector<double>>> pool;
  pool.reserve(scored.size());
  for (const auto& [c, o] : scored) pool.emplace_back(c, o.goals());
  return rank_d2h(pool, params.goals).front().first;
}

}  // namespace hpo

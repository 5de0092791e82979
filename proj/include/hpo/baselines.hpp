#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "hpo/config_space.hpp"
#include "hpo/evaluation.hpp"
#include "hpo/forest.hpp"
#include "hpo/objectives.hpp"
#include "hpo/rng.hpp"

namespace hpo {

namespace detail {

inline Candidate d2h_best(std::span<const std::pair<Candidate, Objectives>> scored,
                          const GoalSpec& goals) {
  std::vector<std::pair<Candidate, std::vector<double>>> pool;
  pool.reserve(scored.size());
  for (const auto& [c, o] : scored) pool.emplace_back(c, o.goals());
  return rank_d2h(pool, goals).front().first;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random search

/// Evaluates `budget_evals` pool members drawn without replacement.
inline Candidate random_search(std::vector<Candidate> pool, EvalSession& session,
                               std::size_t budget_evals, std::uint64_t seed,
                               const GoalSpec& goals = GoalSpec::search()) {
  if (pool.empty()) throw std::invalid_argument("random_search: empty pool");
  if (budget_evals < 1) throw std::invalid_argument("random_search: budget must be >= 1");
  Rng rng(seed);
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(std::min(budget_evals, pool.size()));
  std::vector<std::pair<Candidate, Objectives>> scored;
  scored.reserve(pool.size());
  for (const auto& c : pool) scored.emplace_back(c, session.evaluate(c));
  return detail::d2h_best(scored, goals);
}

// ---------------------------------------------------------------------------
// Grid search

/// Strides giving a 20*4*4*4*2 = 2,560-point grid on the default space.
inline std::vector<std::size_t> default_gs_strides() { return {1, 5, 11, 5, 2}; }

inline Candidate grid_search(const ConfigSpace& space, EvalSession& session,
                             std::vector<std::size_t> strides,
                             const GoalSpec& goals = GoalSpec::search()) {
  const auto grid = enumerate(space, std::move(strides));
  if (grid.size() == 0) throw std::invalid_argument("grid_search: empty grid");
  std::vector<std::pair<Candidate, Objectives>> scored;
  scored.reserve(grid.size());
  for (const auto& c : grid) scored.emplace_back(c, session.evaluate(c));
  return detail::d2h_best(scored, goals);
}

// ---------------------------------------------------------------------------
// Differential evolution

struct DeParams {
  /// 0 means 10 per parameter.
  std::size_t population = 0;
  std::size_t generations = 2;
  double f = 0.5;
  double cr = 0.9;

  void validate() const {
    if (population != 0 && population < 4) throw std::invalid_argument("DE population must be >= 4");
    if (!(f >= 0.0 && f < 2.0)) throw std::invalid_argument("DE F must be in [0,2)");
    if (!(cr >= 0.0 && cr <= 1.0)) throw std::invalid_argument("DE CR must be in [0,1]");
  }
};

struct DeResult {
  Candidate best;
  std::vector<Candidate> population;
  std::size_t replacements = 0;
};

namespace detail {

inline Candidate de_trial(const ConfigSpace& space, const Candidate& x, const Candidate& a,
                          const Candidate& b, const Candidate& c, const DeParams& p, Rng& rng) {
  std::vector<std::uint32_t> index = x.index;
  const std::size_t jrand = rng.index(space.size());
  for (std::size_t j = 0; j < space.size(); ++j) {
    if (!(rng.uniform() < p.cr || j == jrand)) continue;
    if (space[j].kind == ParamKind::categorical) {
      index[j] = a.index[j];
    } else {
      index[j] = space.snap(j, a.value[j] + p.f * (b.value[j] - c.value[j]));
    }
  }
  return space.make(index);
}

}  // namespace detail

/// Synchronous DE/rand/1/bin over the grid. Requests P + generations*P evaluations.
inline DeResult differential_evolution(const ConfigSpace& space, EvalSession& session,
                                       DeParams params, std::uint64_t seed,
                                       const GoalSpec& goals = GoalSpec::search()) {
  params.validate();
  const std::size_t np = params.population ? params.population : 10 * space.size();
  Rng rng(seed);

  DeResult out;
  std::vector<std::uint32_t> index(space.size());
  for (std::size_t k = 0; k < np; ++k) {
    for (std::size_t j = 0; j < space.size(); ++j)
      index[j] = static_cast<std::uint32_t>(rng.index(space[j].grid_size()));
    out.population.push_back(space.make(index));
  }
  std::vector<Objectives> scores;
  scores.reserve(np);
  for (const auto& c : out.population) scores.push_back(session.evaluate(c));

  for (std::size_t g = 0; g < params.generations; ++g) {
    auto next = out.population;
    auto next_scores = scores;
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t pick[3];
      for (std::size_t k = 0; k < 3; ++k) {
        std::size_t r;
        do r = rng.index(np);
        while (r == i || std::find(pick, pick + k, r) != pick + k);
        pick[k] = r;
      }
      const auto trial =
          detail::de_trial(space, out.population[i], out.population[pick[0]],
                           out.population[pick[1]], out.population[pick[2]], params, rng);
      const auto t = session.evaluate(trial);
      if (better(t.goals(), scores[i].goals(), goals)) {
        next[i] = trial;
        next_scores[i] = t;
        ++out.replacements;
      }
    }
    out.population = std::move(next);
    scores = std::move(next_scores);
  }

  std::vector<std::pair<Candidate, Objectives>> scored;
  for (std::size_t i = 0; i < np; ++i) scored.emplace_back(out.population[i], scores[i]);
  out.best = detail::d2h_best(scored, goals);
  return out;
}

// ---------------------------------------------------------------------------
// FLASH

struct FlashParams {
  std::size_t initial = 20;
  std::size_t budget = 120;
};

namespace detail {

/// Surrogate features: each parameter's grid index scaled to [0,1].
inline std::vector<double> surrogate_row(const Candidate& c, const ConfigSpace& space) {
  std::vector<double> row(space.size());
  for (std::size_t j = 0; j < space.size(); ++j) {
    const auto g = space[j].grid_size();
    row[j] = g > 1 ? static_cast<double>(c.index[j]) / static_cast<double>(g - 1) : 0.0;
  }
  return row;
}

}  // namespace detail

/// Sequential model-based search: one CART surrogate per goal, acquiring the
/// unevaluated member whose predicted goals beat the most evaluated vectors.
inline Candidate flash(std::vector<Candidate> pool, const ConfigSpace& space,
                       EvalSession& session, FlashParams params, std::uint64_t seed,
                       const GoalSpec& goals = GoalSpec::search()) {
  if (pool.size() <= params.initial) throw std::invalid_argument("flash: pool must exceed initial");
  if (params.initial < 1 || params.budget < params.initial)
    throw std::invalid_argument("flash: need 1 <= initial <= budget");
  Rng rng(seed);
  rng.shuffle(pool.begin(), pool.end());

  std::vector<std::pair<Candidate, Objectives>> scored;
  std::vector<char> done(pool.size(), 0);
  for (std::size_t i = 0; i < params.initial; ++i) {
    scored.emplace_back(pool[i], session.evaluate(pool[i]));
    done[i] = 1;
  }

  std::vector<std::vector<double>> features(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) features[i] = detail::surrogate_row(pool[i], space);

  ForestParams tree_params;
  tree_params.n_estimators = 1;
  tree_params.bootstrap = false;
  tree_params.max_depth = 20;

  const std::size_t limit = std::min(params.budget, pool.size());
  while (scored.size() < limit) {
    const std::size_t n = scored.size();
    Matrix x(n, space.size());
    std::vector<std::size_t> rows;
    for (std::size_t i = 0, r = 0; i < pool.size(); ++i) {
      if (!done[i]) continue;
      rows.push_back(i);
      std::copy(features[i].begin(), features[i].end(), x.data.begin() + r * space.size());
      ++r;
    }
    std::vector<ForestModel> models;
    for (std::size_t g = 0; g < goals.size(); ++g) {
      std::vector<double> y(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& c = pool[rows[r]];
        y[r] = session.lookup(c)->goals()[g];
      }
      models.push_back(fit(tree_params, x, y, seed));
    }

    // Group unevaluated members by predicted vector; first pool position wins ties.
    std::map<std::vector<double>, std::size_t> first_at;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (done[i]) continue;
      std::vector<double> v(goals.size());
      for (std::size_t g = 0; g < goals.size(); ++g) v[g] = models[g].predict_row(features[i]);
      first_at.emplace(std::move(v), i);
    }
    if (first_at.empty()) break;

    std::vector<std::vector<double>> all;
    for (const auto& [c, o] : scored) all.push_back(o.goals());
    for (const auto& [v, i] : first_at) all.push_back(v);
    const auto bounds = GoalBounds::of(all);

    std::size_t pick = pool.size();
    std::size_t pick_wins = 0;
    for (const auto& [v, i] : first_at) {
      std::size_t wins = 0;
      for (std::size_t k = 0; k < n; ++k)
        if (better(v, all[k], goals, bounds)) ++wins;
      if (pick == pool.size() || wins > pick_wins || (wins == pick_wins && i < pick)) {
        pick = i;
        pick_wins = wins;
      }
    }
    scored.emplace_back(pool[pick], session.evaluate(pool[pick]));
    done[pick] = 1;
  }
  return detail::d2h_best(scored, goals);
}

// ---------------------------------------------------------------------------
// Untuned learner

/// The off-the-shelf forest: 100 trees, leaf 1, no impurity floor, depth 20, squared.
inline Candidate default_candidate(const ConfigSpace& space) {
  std::vector<std::uint32_t> index(space.size(), 0);
  auto set = [&](std::string_view name, double v) {
    const auto j = space.find(name);
    index[j] = space.snap(j, v);
  };
  set("n_estimators", 100);
  set("min_sample_leaves", 1);
  set("min_impurity_decrease", 0);
  set("max_depth", 20);
  const auto ci = space.find("criterion");
  const auto& ch = space[ci].choices;
  index[ci] = static_cast<std::uint32_t>(std::find(ch.begin(), ch.end(), "squared") - ch.begin());
  if (index[ci] >= ch.size()) throw std::invalid_argument("space has no squared criterion");
  return space.make(index);
}

/// Certifies and returns the default candidate; e stays 0.
inline Candidate default_config(const ConfigSpace& space, EvalSession& session) {
  const auto c = default_candidate(space);
  session.certify(std::span<const Candidate>(&c, 1));
  return c;
}

}  // namespace hpo

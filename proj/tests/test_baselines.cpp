#include <gtest/gtest.h>

#include <set>

#include "hpo/baselines.hpp"
#include "support/toy_objective.hpp"

using namespace hpo;
using hpo::testing::ToyObjective;

namespace {

struct Harness {
  ConfigSpace space = default_space();
  ToyObjective toy{space};
  EvalBudget budget;
  EvalSession session{toy, budget};
};

}  // namespace

TEST(RandomSearch, BudgetOf120GivesE120) {
  Harness h;
  const auto pool = sample(h.space, 10000, 1);
  const auto best = random_search(pool, h.session, 120, 7);
  EXPECT_EQ(h.budget.e(), 120u);
  for (const auto& [c, o] : h.session.evaluated()) EXPECT_LE(h.toy.loss(best), h.toy.loss(c) + 1e-12);
}

TEST(RandomSearch, SmallPoolAndErrors) {
  Harness h;
  const auto pool = sample(h.space, 30, 1);
  random_search(pool, h.session, 120, 7);
  EXPECT_EQ(h.budget.e(), pool.size());
  EXPECT_THROW(random_search({}, h.session, 10, 1), std::invalid_argument);
  EXPECT_THROW(random_search(pool, h.session, 0, 1), std::invalid_argument);
}

TEST(GridSearch, DefaultGridGivesE2560) {
  Harness h;
  const auto best = grid_search(h.space, h.session, default_gs_strides());
  EXPECT_EQ(h.budget.e(), 2560u);
  for (const auto& [c, o] : h.session.evaluated()) EXPECT_LE(h.toy.loss(best), h.toy.loss(c) + 1e-12);
}

TEST(DifferentialEvolution, FiftyByTwoRequests150) {
  Harness h;
  DeParams p;
  p.population = 50;
  p.generations = 2;
  const auto r = differential_evolution(h.space, h.session, p, 3);
  EXPECT_EQ(h.session.requests(), 150u);
  EXPECT_LE(h.budget.e(), 150u);
  EXPECT_GE(h.budget.e(), 140u);
  EXPECT_EQ(r.population.size(), 50u);
  for (const auto& c : r.population) EXPECT_TRUE(h.space.contains(c));
}

TEST(DifferentialEvolution, DefaultPopulationIsTenPerParameter) {
  Harness h;
  differential_evolution(h.space, h.session, {}, 3);
  EXPECT_EQ(h.session.requests(), 150u);
}

TEST(DifferentialEvolution, PopulationNeverGetsWorse) {
  Harness h;
  DeParams p;
  p.population = 20;
  p.generations = 0;
  const auto start = differential_evolution(h.space, h.session, p, 9);
  Harness h2;
  p.generations = 5;
  const auto end = differential_evolution(h2.space, h2.session, p, 9);
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_FALSE(better(h.toy(start.population[i]), h.toy(end.population[i])));
}

TEST(DifferentialEvolution, TrialKeepsCategoricalFromBase) {
  const auto s = default_space();
  const auto x = s.make(std::vector<std::uint32_t>{0, 0, 0, 0, 0});
  const auto a = s.make(std::vector<std::uint32_t>{10, 10, 20, 10, 2});
  const auto b = s.make(std::vector<std::uint32_t>{12, 4, 30, 19, 1});
  const auto c = s.make(std::vector<std::uint32_t>{2, 4, 10, 9, 0});
  DeParams p;
  p.cr = 1.0;
  Rng rng(1);
  const auto t = detail::de_trial(s, x, a, b, c, p, rng);
  // a + 0.5 (b - c), snapped to the grid
  EXPECT_EQ(t.index[0], 15u);
  EXPECT_EQ(t.index[1], 10u);
  EXPECT_EQ(t.index[2], 30u);
  EXPECT_EQ(t.index[3], 15u);
  EXPECT_EQ(t.index[4], 2u);
}

TEST(DifferentialEvolution, ValidatesParameters) {
  Harness h;
  DeParams p;
  p.f = 2.0;
  EXPECT_THROW(differential_evolution(h.space, h.session, p, 1), std::invalid_argument);
  p = {};
  p.cr = 1.5;
  EXPECT_THROW(differential_evolution(h.space, h.session, p, 1), std::invalid_argument);
  p = {};
  p.population = 3;
  EXPECT_THROW(differential_evolution(h.space, h.session, p, 1), std::invalid_argument);
}

TEST(Flash, BudgetOf120GivesE120) {
  Harness h;
  const auto pool = sample(h.space, 2000, 2);
  flash(pool, h.space, h.session, {}, 5);
  EXPECT_EQ(h.budget.e(), 120u);
  std::set<std::uint64_t> ids;
  for (const auto& [c, o] : h.session.evaluated()) ids.insert(c.id);
  EXPECT_EQ(ids.size(), 120u);
}

TEST(Flash, BeatsRandomOnSmoothObjective) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Harness f, r;
    const auto pool = sample(f.space, 2000, seed);
    const auto a = flash(pool, f.space, f.session, {20, 60}, seed);
    const auto b = random_search(pool, r.session, 60, seed);
    wins += f.toy.loss(a) <= r.toy.loss(b);
  }
  EXPECT_GE(wins, 4);
}

TEST(Flash, Errors) {
  Harness h;
  const auto pool = sample(h.space, 20, 2);
  EXPECT_THROW(flash(pool, h.space, h.session, {}, 1), std::invalid_argument);
  EXPECT_THROW(flash(sample(h.space, 200, 2), h.space, h.session, {30, 10}, 1),
               std::invalid_argument);
}

TEST(Default, OffTheShelfForestCostsNoInference) {
  Harness h;
  const auto c = default_config(h.space, h.session);
  EXPECT_EQ(h.budget.e(), 0u);
  EXPECT_EQ(h.budget.e_plus(), 1u);
  EXPECT_EQ(h.space.describe(c).find("n_estimators=100") != std::string::npos, true);
}

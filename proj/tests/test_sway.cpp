#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hpo/sway.hpp"
#include "support/toy_objective.hpp"

using namespace hpo;
using hpo::testing::ToyObjective;

namespace {

std::size_t pole_bound(std::size_t n) {
  const double ratio = static_cast<double>(n) / std::sqrt(static_cast<double>(n));
  return 2 * static_cast<std::size_t>(std::ceil(std::log2(ratio))) + 2;
}

}  // namespace

TEST(Sway, PoleEvaluationsWithinLogBound) {
  const auto s = default_space();
  const ToyObjective toy(s);
  for (std::size_t n : {256u, 1024u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EvalBudget budget;
      EvalSession session(toy, budget);
      const auto pool = sample(s, n, seed);
      const auto r = sway(pool, s, session, {}, seed);
      EXPECT_LE(budget.e(), pole_bound(pool.size()));
      EXPECT_EQ(session.requests(), 2 * r.levels);
      EXPECT_LE(static_cast<double>(r.survivors.size()), std::sqrt(static_cast<double>(pool.size())));
      EXPECT_GE(r.survivors.size(), 1u);
    }
  }
}

TEST(Sway, EachLevelKeepsHalfOfThePreviousPool) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto r = sway(sample(s, 500, 2), s, session, {}, 3);
  ASSERT_EQ(r.visits.size(), r.levels);
  for (std::size_t k = 1; k < r.visits.size(); ++k) {
    const auto n = r.visits[k - 1].size(), m = r.visits[k].size();
    EXPECT_TRUE(m == n / 2 || m == (n + 1) / 2) << n << " -> " << m;
    const std::set<std::uint64_t> prev(r.visits[k - 1].begin(), r.visits[k - 1].end());
    for (auto id : r.visits[k]) EXPECT_TRUE(prev.contains(id));
  }
}

TEST(Sway, FindsBetterThanAverage) {
  const auto s = default_space();
  const ToyObjective toy(s);
  double won = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EvalBudget budget;
    EvalSession session(toy, budget);
    const auto pool = sample(s, 1000, seed);
    const auto best = sway_best(pool, s, session, {}, seed);
    double mean = 0;
    for (const auto& c : pool) mean += toy.loss(c);
    mean /= static_cast<double>(pool.size());
    won += toy.loss(best) < mean;
  }
  EXPECT_GE(won, 8);
}

TEST(Sway, CustomStopAndErrors) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto r = sway(sample(s, 64, 1), s, session, SwayParams{1.0}, 1);
  EXPECT_EQ(r.survivors.size(), 1u);
  EXPECT_EQ(r.levels, 6u);
  EXPECT_THROW(sway(sample(s, 1, 1), s, session, {}, 1), std::invalid_argument);
  EXPECT_THROW(sway(sample(s, 10, 1), s, session, SwayParams{0.5}, 1), std::invalid_argument);
}

TEST(Sway, Deterministic) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget b1, b2;
  EvalSession s1(toy, b1), s2(toy, b2);
  const auto pool = sample(s, 300, 5);
  EXPECT_EQ(sway(pool, s, s1, {}, 4).survivors, sway(pool, s, s2, {}, 4).survivors);
}

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "hpo/nisneak.hpp"
#include "support/oracles.hpp"
#include "support/toy_objective.hpp"

using namespace hpo;
using hpo::testing::ToyObjective;
using hpo::testing::oracle_best_subtree;
using hpo::testing::oracle_entropy;

namespace {

ConfigSpace tiny_space() {
  return ConfigSpace({ParamSpec::integer("a", 0, 3, 1), ParamSpec::categorical("b", {"x", "y"}),
                      ParamSpec::integer("c", 0, 2, 1)});
}

}  // namespace

TEST(Entropy, HalfQuarterQuarterIsOneAndAHalfBits) {
  const ConfigSpace s({ParamSpec::integer("a", 0, 2, 1)});
  std::vector<Candidate> rows;
  for (std::uint32_t i : {0u, 0u, 1u, 2u}) rows.push_back(s.make(std::vector<std::uint32_t>{i}));
  EXPECT_NEAR(rows_entropy(rows, s), 1.5, 1e-12);
}

TEST(Entropy, MatchesOracleOnRandomRows) {
  const auto s = default_space();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rows = sample(s, 5 + seed * 7, seed);
    EXPECT_NEAR(rows_entropy(rows, s), oracle_entropy(rows, s.size()), 1e-9);
  }
  EXPECT_EQ(rows_entropy({}, s), 0.0);
}

TEST(BestSubtree, AgreesWithExhaustiveScan) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = seed % 2 ? default_space() : tiny_space();
    Rng rng(seed);
    const auto rows = sample(s, 8 + rng.index(121), seed);
    auto root = tree(rows, s, seed, 1.0 + static_cast<double>(rng.index(6)));
    // Mark a few nodes queried to exercise the eligibility filter.
    root->visit([&](TreeNode& n) {
      if (!n.is_leaf() && rng.uniform() < 0.2) n.queried = true;
    });
    for (int round = 0; round < 4; ++round) {
      TreeNode* got = best_subtree(*root, s);
      TreeNode* want = oracle_best_subtree(*root, s.size());
      ASSERT_EQ(got, want) << "seed " << seed << " round " << round;
      if (!got) break;
      got->queried = true;
    }
  }
}

TEST(BestSubtree, NoneOnIdenticalRows) {
  const auto s = tiny_space();
  const auto c = s.make(std::vector<std::uint32_t>{1, 1, 1});
  auto root = tree(std::vector<Candidate>(8, c), s, 1, 1.0);
  EXPECT_EQ(best_subtree(*root, s), nullptr);
}

TEST(XPass, ShrinksBelowRootOfPool) {
  const auto s = default_space();
  const ToyObjective toy(s);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EvalBudget budget;
    EvalSession session(toy, budget);
    const auto pool = sample(s, 1000, seed);
    auto root = tree(pool, s, seed);
    const auto r = xpass(*root, s, session);
    EXPECT_LT(static_cast<double>(r.survivors.size()), std::sqrt(static_cast<double>(pool.size())));
    EXPECT_FALSE(r.survivors.empty());
    EXPECT_EQ(session.requests(), 2 * r.steps.size());
    std::set<std::uint64_t> ids;
    for (const auto& c : pool) ids.insert(c.id);
    for (const auto& c : r.survivors) EXPECT_TRUE(ids.contains(c.id));
  }
}

TEST(XPass, PrunesTheWorsePoleSide) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  auto root = tree(sample(s, 400, 1), s, 1);
  const auto r = xpass(*root, s, session);
  ASSERT_FALSE(r.steps.empty());
  for (const auto& st : r.steps) {
    const auto l = s.decode(st.left_pole), rp = s.decode(st.right_pole);
    EXPECT_EQ(st.pruned_left, better(toy(rp), toy(l)));
  }
}

TEST(YPass, TenSurvivorsBecomeFive) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto rows = sample(s, 10, 3);
  const auto kept = ypass(rows, s, session, 1);
  EXPECT_EQ(kept.size(), 5u);
  EXPECT_EQ(session.requests(), 10u);
  const auto odd = ypass(sample(s, 7, 3), s, session, 1);
  EXPECT_EQ(odd.size(), 4u);
  EXPECT_EQ(ypass(sample(s, 1, 3), s, session, 1).size(), 1u);
  EXPECT_THROW(ypass({}, s, session, 1), std::invalid_argument);
}

TEST(YPass, KeepsTheBetterOfEachPair) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto rows = sample(s, 40, 8);
  const auto kept = ypass(rows, s, session, 2);
  const std::set<std::uint64_t> keep_ids = [&] {
    std::set<std::uint64_t> k;
    for (const auto& c : kept) k.insert(c.id);
    return k;
  }();
  // Each dropped item must have a kept partner that is not worse.
  for (const auto& c : rows) {
    if (keep_ids.contains(c.id)) continue;
    bool beaten = false;
    for (const auto& k : kept) beaten |= !better(toy(c), toy(k));
    EXPECT_TRUE(beaten);
  }
}

class SelectLaw : public ::testing::TestWithParam<SelectPolicy> {};

TEST_P(SelectLaw, RequestsMatchFormula) {
  const auto s = default_space();
  const ToyObjective toy(s);
  for (std::size_t finalists : {16u, 50u, 100u})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EvalBudget budget;
      EvalSession session(toy, budget);
      session.begin_phase("select");
      const auto f = sample(s, finalists, seed);
      const auto r = select(f, GetParam(), s, session, seed, 10000);
      EXPECT_EQ(session.phase("select")->requests, select_requests(GetParam(), f.size(), r));
      bool found = false;
      for (const auto& c : f) found |= c == r.choice;
      EXPECT_TRUE(found);
    }
}

INSTANTIATE_TEST_SUITE_P(Policies, SelectLaw,
                         ::testing::Values(SelectPolicy::any, SelectPolicy::sany, SelectPolicy::all,
                                           SelectPolicy::sall),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Select, SallOverHundredFinalists) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto f = sample(s, 100, 4);
  const auto r = select(f, SelectPolicy::sall, s, session, 4, 10000);
  // Second round stops at 10000^(1/4) = 10 items.
  EXPECT_LE(r.shortlisted, 10u);
  EXPECT_GE(r.shortlisted, 5u);
  // 2 log2(10) poles plus 10 finals is about 17; poles that reach the shortlist are free.
  EXPECT_LE(budget.e(), 17u);
  EXPECT_GE(budget.e(), 2 * r.sway_levels);
  EXPECT_EQ(r.sway_levels, 4u);
}

TEST(Select, AllReturnsTheRankLeader) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto f = sample(s, 30, 6);
  const auto r = select(f, SelectPolicy::all, s, session, 1, 10000);
  for (const auto& c : f) EXPECT_LE(toy.loss(r.choice), toy.loss(c) + 1e-12);
}

TEST(Select, ParsePolicy) {
  EXPECT_EQ(parse_policy("sall"), SelectPolicy::sall);
  EXPECT_THROW(parse_policy("most"), std::invalid_argument);
}

TEST(Nisneak, PhasesAndFrugality) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget budget;
  EvalSession session(toy, budget);
  const auto pool = sample(s, 10000, 1);
  const auto r = nisneak(pool, s, session, SelectPolicy::sall, 1);
  EXPECT_EQ(session.phase("tree")->requests, 0u);
  EXPECT_EQ(session.phase("xpass")->requests, 2 * r.probes.size());
  EXPECT_EQ(session.phase("ypass")->requests, r.after_xpass - r.after_xpass % 2);
  EXPECT_EQ(r.after_ypass, (r.after_xpass + 1) / 2);
  EXPECT_LE(budget.e(), 175u);
  EXPECT_LT(toy.loss(r.choice), 0.25);
}

TEST(Nisneak, DeterministicAndRejectsTinyPools) {
  const auto s = default_space();
  const ToyObjective toy(s);
  EvalBudget b1, b2;
  EvalSession s1(toy, b1), s2(toy, b2);
  const auto pool = sample(s, 500, 2);
  EXPECT_EQ(nisneak(pool, s, s1, SelectPolicy::sall, 3).choice,
            nisneak(pool, s, s2, SelectPolicy::sall, 3).choice);
  EXPECT_EQ(b1.e(), b2.e());
  EXPECT_THROW(nisneak(sample(s, 3, 1), s, s1, SelectPolicy::any, 1), std::invalid_argument);
}

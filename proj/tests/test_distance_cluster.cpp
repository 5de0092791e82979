#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hpo/distance_cluster.hpp"

using namespace hpo;

namespace {

ConfigSpace small_space() {
  return ConfigSpace({ParamSpec::integer("a", 0, 10, 1), ParamSpec::real("b", 0, 1, 0.1),
                      ParamSpec::categorical("c", {"x", "y", "z"})});
}

std::set<std::uint64_t> ids_of(const std::vector<Candidate>& v) {
  std::set<std::uint64_t> s;
  for (const auto& c : v) s.insert(c.id);
  return s;
}

}  // namespace

TEST(Dist, HandComputed) {
  const auto s = small_space();
  const auto a = s.make(std::vector<std::uint32_t>{0, 0, 0});
  const auto b = s.make(std::vector<std::uint32_t>{10, 5, 1});
  // components: 1, 0.5, 1 -> sqrt((1 + 0.25 + 1) / 3)
  EXPECT_NEAR(dist(a, b, s), std::sqrt(2.25 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(dist(a, a, s), 0.0);
}

TEST(Dist, MetricProperties) {
  const auto s = default_space();
  const auto pool = sample(s, 60, 4);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const double d = dist(pool[i], pool[j], s);
      ASSERT_GE(d, 0.0);
      ASSERT_LE(d, 1.0 + 1e-12);
      ASSERT_DOUBLE_EQ(d, dist(pool[j], pool[i], s));
      if (i == j) ASSERT_EQ(d, 0.0);
      for (std::size_t k = 0; k < 10; ++k)
        ASSERT_LE(d, dist(pool[i], pool[k], s) + dist(pool[k], pool[j], s) + 1e-12);
    }
}

TEST(Dist, RejectsForeignCandidate) {
  const auto s = small_space();
  const auto c = default_space().make(std::vector<std::uint32_t>{0, 0, 0, 0, 0});
  EXPECT_THROW(dist(c, c, s), std::invalid_argument);
}

TEST(Project, CosineRule) {
  EXPECT_DOUBLE_EQ(project(0.0, 1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(project(1.0, 0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(project(0.5, 0.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(project(3.0, 4.0, 5.0), 1.8);
}

TEST(Half, PartitionsRowsEvenly) {
  const auto s = default_space();
  for (std::size_t n : {2u, 3u, 10u, 101u, 500u}) {
    const auto rows = sample(s, n, n);
    const auto h = half(rows, s, std::uint64_t{9});
    EXPECT_EQ(h.lefts.size(), (rows.size() + 1) / 2);
    EXPECT_EQ(h.lefts.size() + h.rights.size(), rows.size());
    auto all = ids_of(h.lefts);
    for (const auto& c : h.rights) EXPECT_TRUE(all.insert(c.id).second);
    EXPECT_EQ(all, ids_of(rows));
    EXPECT_NE(h.left_pole.id, h.right_pole.id);
  }
}

TEST(Half, LeftsAreCloserToLeftPoleInProjection) {
  const auto s = default_space();
  const auto rows = sample(s, 300, 2);
  const auto h = half(rows, s, std::uint64_t{5});
  const double c = dist(h.left_pole, h.right_pole, s);
  ASSERT_GT(c, 0.0);
  auto x = [&](const Candidate& r) {
    return std::clamp(project(dist(r, h.left_pole, s), dist(r, h.right_pole, s), c), 0.0, c);
  };
  double max_left = 0.0, min_right = c;
  for (const auto& r : h.lefts) max_left = std::max(max_left, x(r));
  for (const auto& r : h.rights) min_right = std::min(min_right, x(r));
  EXPECT_LE(max_left, min_right);
}

TEST(Half, DeterministicForSeed) {
  const auto s = default_space();
  const auto rows = sample(s, 200, 3);
  const auto a = half(rows, s, std::uint64_t{1});
  const auto b = half(rows, s, std::uint64_t{1});
  EXPECT_EQ(a.left_pole, b.left_pole);
  EXPECT_EQ(a.lefts, b.lefts);
}

TEST(Half, RejectsSingleRow) {
  const auto s = default_space();
  const auto rows = sample(s, 1, 3);
  EXPECT_THROW(half(rows, s, std::uint64_t{1}), std::invalid_argument);
}

TEST(Tree, LeavesRespectStopAndCoverRows) {
  const auto s = default_space();
  const auto rows = sample(s, 1000, 6);
  const auto root = tree(rows, s, 3);
  const double stop = std::sqrt(static_cast<double>(rows.size()));
  std::set<std::uint64_t> leaf_ids;
  std::size_t leaf_rows = 0;
  root->visit([&](const TreeNode& n) {
    if (n.is_leaf()) {
      EXPECT_LE(static_cast<double>(n.rows.size()), stop);
      leaf_rows += n.rows.size();
      for (const auto& c : n.rows) leaf_ids.insert(c.id);
    } else {
      EXPECT_TRUE(n.left && n.right && n.left_pole && n.right_pole);
      EXPECT_EQ(n.left->rows.size() + n.right->rows.size(), n.rows.size());
      EXPECT_GT(static_cast<double>(n.rows.size()), stop);
      EXPECT_EQ(n.left->depth, n.depth + 1);
    }
  });
  EXPECT_EQ(leaf_rows, rows.size());
  EXPECT_EQ(leaf_ids, ids_of(rows));
}

TEST(Tree, CustomStop) {
  const auto s = default_space();
  const auto root = tree(sample(s, 64, 1), s, 1, 1.0);
  root->visit([](const TreeNode& n) {
    if (n.is_leaf()) EXPECT_EQ(n.rows.size(), 1u);
  });
  EXPECT_THROW(tree({}, s, 1), std::invalid_argument);
}

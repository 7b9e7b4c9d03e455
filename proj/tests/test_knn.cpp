#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "knnrobust/balltree.hpp"
#include "knnrobust/error.hpp"
#include "knnrobust/kdforest.hpp"
#include "knnrobust/knn_core.hpp"
#include "knnrobust/topk.hpp"
#include "test_util.hpp"

using namespace knnrobust;

namespace {

double mean_recall(const Index& index, const VectorSet& queries, const GroundTruth& gt, std::size_t k,
                   std::size_t budget, bool kd) {
  double sum = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    QueryResult r = kd ? static_cast<const KdForest&>(index).query(queries.row(i), k, budget)
                       : static_cast<const BallTree&>(index).query(queries.row(i), k, budget);
    sum += label_fp(r, gt.dists_row(i), 0.0).recall;
  }
  return sum / static_cast<double>(queries.size());
}

void expect_matches_truth(const Index& index, const VectorSet& queries, const GroundTruth& gt) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    QueryResult r = index.query(queries.row(i), gt.k);
    ASSERT_EQ(r.ids, std::vector<PointId>(gt.ids_row(i).begin(), gt.ids_row(i).end())) << "query " << i;
    ASSERT_EQ(r.dists, std::vector<float>(gt.dists_row(i).begin(), gt.dists_row(i).end()));
  }
}

}  // namespace

TEST(TopK, KeepsSmallestWithIdTieBreak) {
  TopK top(3);
  EXPECT_TRUE(std::isinf(top.worst()));
  for (auto [d, id] : std::vector<std::pair<float, PointId>>{{5, 0}, {1, 1}, {3, 2}, {1, 3}, {3, 4}, {0.5f, 5}})
    top.push(d, id);
  EXPECT_TRUE(top.full());
  auto best = std::move(top).sorted();
  ASSERT_EQ(best.size(), 3u);
  EXPECT_EQ(best[0].id, 5u);
  EXPECT_EQ(best[1].id, 1u);
  EXPECT_EQ(best[2].id, 3u);
}

TEST(IndexSpec, ParseAndLabel) {
  IndexSpec s = IndexSpec::parse("kdforest:num_trees=4,max_checks=32");
  EXPECT_EQ(s.kind, IndexKind::kdforest);
  EXPECT_EQ(s.get("num_trees", 0), 4u);
  EXPECT_EQ(s.label(), "kdforest:max_checks=32,num_trees=4");
  EXPECT_EQ(IndexSpec::parse(s.label()), s);
  EXPECT_EQ(IndexSpec::parse("brute").kind, IndexKind::brute);
  EXPECT_EQ(IndexSpec::parse("balltree:leaf_size=8").get("max_nodes", 7), 7u);
}

TEST(IndexSpec, Validation) {
  EXPECT_THROW(IndexSpec::parse("hnsw:m=4"), InvalidArgument);
  EXPECT_THROW(IndexSpec::parse("kdforest:num_trees=0,max_checks=8").validate(), InvalidArgument);
  EXPECT_THROW(IndexSpec::parse("kdforest:num_trees=2").validate(), InvalidArgument);
  EXPECT_THROW(IndexSpec::parse("balltree:leaf_size=4,bogus=1").validate(), InvalidArgument);
  EXPECT_THROW(IndexSpec::parse("balltree:leaf_size=x"), InvalidArgument);
  EXPECT_THROW(IndexSpec::parse("balltree:leaf_size=1,leaf_size=2"), InvalidArgument);
  EXPECT_NO_THROW(IndexSpec::parse("kdforest:num_trees=1,max_checks=1,seed=0").validate());
  VectorSet base = testutil::uniform_set(10, 2, 1);
  EXPECT_THROW(build(IndexSpec::parse("kdforest:num_trees=0,max_checks=4"), base), InvalidArgument);
}

TEST(BruteIndex, IdentityAndOracle) {
  VectorSet base = testutil::uniform_set(100, 4, 3);
  auto index = build(IndexSpec::parse("brute"), base);
  QueryResult self = index->query(base.row(42), 1);
  EXPECT_EQ(self.ids[0], 42u);
  EXPECT_EQ(self.dists[0], 0.f);

  VectorSet queries = testutil::uniform_set(20, 4, 4);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    QueryResult r = index->query(queries.row(i), 5);
    auto expect = testutil::naive_topk(base, queries.row(i), 5);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(r.ids[j], expect[j].id);
  }
  EXPECT_THROW(index->query(testutil::uniform_set(1, 3, 1).row(0), 1), InvalidArgument);
  EXPECT_THROW(index->query(base.row(0), 0), InvalidArgument);
  EXPECT_THROW(index->query(base.row(0), 101), InvalidArgument);
}

TEST(BruteIndex, EqualsGroundTruthRows) {
  VectorSet base = testutil::uniform_set(150, 6, 5);
  VectorSet queries = testutil::uniform_set(15, 6, 6);
  expect_matches_truth(*build(IndexSpec::parse("brute"), base), queries, exact_ground_truth(base, queries, 9));
}

TEST(LabelFp, Examples) {
  QueryResult r{{0, 1, 2}, {1, 2, 3}};
  std::vector<float> truth{1, 2, 3};
  FpLabel l = label_fp(r, truth, 0.0, 7);
  EXPECT_EQ(l.query_id, 7u);
  EXPECT_FALSE(l.is_fp);
  EXPECT_EQ(l.recall, 1.0);

  QueryResult ten;
  std::vector<float> tdist;
  for (PointId i = 0; i < 10; ++i) {
    ten.ids.push_back(i);
    ten.dists.push_back(static_cast<float>(i + 1));
    tdist.push_back(static_cast<float>(i + 1));
  }
  ten.dists.back() = 10.5f;
  ten.ids.back() = 99;
  l = label_fp(ten, tdist, 0.0);
  EXPECT_DOUBLE_EQ(l.recall, 0.9);
  EXPECT_TRUE(l.is_fp);
  // Relaxed bound admits it.
  EXPECT_FALSE(label_fp(ten, tdist, 0.06).is_fp);
  EXPECT_TRUE(label_fp(ten, tdist, 0.04).is_fp);

  EXPECT_THROW(label_fp(r, std::vector<float>{1, 2}, 0.0), InvalidArgument);
  EXPECT_THROW(label_fp(r, truth, -0.1), InvalidArgument);
}

TEST(LabelFp, MatchesSetIntersectionOracle) {
  VectorSet base = testutil::uniform_set(200, 5, 7);
  VectorSet queries = testutil::uniform_set(40, 5, 8);
  const std::size_t k = 10;
  GroundTruth gt = exact_ground_truth(base, queries, k);
  std::mt19937_64 rng(9);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    // Random candidate set: a mix of true neighbors and random points.
    std::set<PointId> chosen;
    std::uniform_int_distribution<std::size_t> keep(0, k);
    const std::size_t keep_n = keep(rng);
    for (std::size_t j = 0; j < keep_n; ++j) chosen.insert(gt.ids_row(i)[j]);
    std::uniform_int_distribution<PointId> any(0, 199);
    while (chosen.size() < k) chosen.insert(any(rng));
    QueryResult r;
    for (PointId id : chosen) {
      r.ids.push_back(id);
      r.dists.push_back(l2_distance(queries.row(i), base.row(id)));
    }
    std::set<PointId> truth(gt.ids_row(i).begin(), gt.ids_row(i).end());
    std::size_t inter = 0;
    for (PointId id : chosen) inter += truth.count(id);
    const FpLabel l = label_fp(r, gt.dists_row(i), 0.0);
    EXPECT_DOUBLE_EQ(l.recall, static_cast<double>(inter) / k);
    EXPECT_EQ(l.is_fp, inter < k);

    // Permuting the returned list changes nothing.
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    QueryResult p;
    for (auto j : perm) {
      p.ids.push_back(r.ids[j]);
      p.dists.push_back(r.dists[j]);
    }
    EXPECT_EQ(label_fp(p, gt.dists_row(i), 0.0).recall, l.recall);
  }
}

// ------------------------------------------------------------------ ball tree

TEST(BallTree, Degenerate) {
  BallTree one(VectorSet(1, 3, {1, 2, 3}), 4);
  ASSERT_EQ(one.nodes().size(), 1u);
  EXPECT_TRUE(one.nodes()[0].is_leaf());
  EXPECT_EQ(one.nodes()[0].radius, 0.f);

  BallTree t(testutil::uniform_set(64, 3, 2), 1);
  std::size_t leaves = 0;
  for (const auto& n : t.nodes())
    if (n.is_leaf()) {
      ++leaves;
      EXPECT_EQ(n.end - n.begin, 1u);
      EXPECT_EQ(n.radius, 0.f);
    }
  EXPECT_EQ(leaves, 64u);
  EXPECT_THROW(BallTree(testutil::uniform_set(5, 2, 1), 0), InvalidArgument);
}

TEST(BallTree, IdenticalPointsStillSplit) {
  BallTree t(VectorSet(9, 2, std::vector<float>(18, 1.5f)), 2);
  for (const auto& n : t.nodes())
    if (n.is_leaf()) EXPECT_LE(n.end - n.begin, 2u);
  EXPECT_EQ(t.query(std::vector<float>{0, 0}, 9).ids.size(), 9u);
}

TEST(BallTree, EveryPointInsideEveryAncestorBall) {
  VectorSet base = testutil::uniform_set(500, 8, 10);
  BallTree t(base, 10);
  auto order = t.point_order();
  std::vector<bool> seen(base.size(), false);
  for (const auto& n : t.nodes()) {
    for (auto i = n.begin; i < n.end; ++i)
      EXPECT_LE(l2_distance(t.centroid(n), base.row(order[i])), n.radius);
    if (n.is_leaf()) {
      EXPECT_LE(n.end - n.begin, 10u);
      for (auto i = n.begin; i < n.end; ++i) seen[order[i]] = true;
    } else {
      const auto& l = t.nodes()[static_cast<std::size_t>(n.left)];
      const auto& r = t.nodes()[static_cast<std::size_t>(n.right)];
      EXPECT_EQ(l.begin, n.begin);
      EXPECT_EQ(l.end, r.begin);
      EXPECT_EQ(r.end, n.end);
    }
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST(BallTree, LeafSizeOneIsExact) {
  VectorSet base = testutil::uniform_set(50, 3, 11);
  VectorSet queries = testutil::uniform_set(20, 3, 12);
  expect_matches_truth(BallTree(base, 1), queries, exact_ground_truth(base, queries, 5));
}

TEST(BallTree, UnlimitedBudgetIsExact) {
  VectorSet base = testutil::uniform_set(300, 10, 13);
  VectorSet queries = testutil::uniform_set(30, 10, 14);
  expect_matches_truth(BallTree(base, 8), queries, exact_ground_truth(base, queries, 10));
}

TEST(BallTree, QueryAtLeafCentroid) {
  VectorSet base = testutil::uniform_set(200, 4, 15);
  BallTree t(base, 6);
  for (const auto& n : t.nodes()) {
    if (!n.is_leaf()) continue;
    QueryResult r = t.query(t.centroid(n), 1);
    EXPECT_LE(r.dists[0], n.radius);
  }
}

TEST(BallTree, BudgetOneReturnsFirstLeafOnGreedyPath) {
  VectorSet base = testutil::uniform_set(400, 5, 16);
  BallTree t(base, 8);
  VectorSet queries = testutil::uniform_set(20, 5, 17);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    auto q = queries.row(qi);
    // Walk the nearer-child path to a leaf.
    std::int32_t id = 0;
    auto lower = [&](std::int32_t i) {
      const auto& n = t.nodes()[static_cast<std::size_t>(i)];
      return std::max(0.0f, l2_distance(q, t.centroid(n)) - n.radius);
    };
    while (!t.nodes()[static_cast<std::size_t>(id)].is_leaf()) {
      const auto& n = t.nodes()[static_cast<std::size_t>(id)];
      id = lower(n.right) < lower(n.left) ? n.right : n.left;
    }
    const auto& leaf = t.nodes()[static_cast<std::size_t>(id)];
    std::set<PointId> in_leaf(t.point_order().begin() + leaf.begin, t.point_order().begin() + leaf.end);
    QueryResult r = t.query(q, 1, 1);
    EXPECT_TRUE(in_leaf.count(r.ids[0])) << "query " << qi;
  }
}

TEST(BallTree, RecallMonotoneInBudget) {
  VectorSet all = make_synthetic(1200, 12, 6, 2.0, 18);
  auto [base, queries] = split_queries(all, 100, 19);
  BallTree t(base, 10);
  GroundTruth gt = exact_ground_truth(base, queries, 10);
  double prev = -1;
  for (std::size_t budget : {1, 4, 16, 64, 256, 100000}) {
    const double r = mean_recall(t, queries, gt, 10, budget, false);
    EXPECT_GE(r, prev) << "max_nodes " << budget;
    prev = r;
  }
  EXPECT_EQ(prev, 1.0);
  // Per query the candidate set only grows with the budget.
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto small = t.query(queries.row(i), 10, 8);
    auto large = t.query(queries.row(i), 10, 32);
    for (std::size_t j = 0; j < 10; ++j) EXPECT_LE(large.dists[j], small.dists[j]);
  }
}

// ------------------------------------------------------------------ kd forest

TEST(KdForest, DeterministicForSeed) {
  VectorSet base = testutil::uniform_set(300, 6, 20);
  KdForest a(base, 4, 3, 77, 50), b(base, 4, 3, 77, 50), c(base, 4, 3, 78, 50);
  ASSERT_EQ(a.trees().size(), 4u);
  bool differs = false;
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(a.trees()[t].order, b.trees()[t].order);
    differs |= a.trees()[t].order != c.trees()[t].order;
  }
  EXPECT_TRUE(differs);
  VectorSet q = testutil::uniform_set(10, 6, 21);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(a.query(q.row(i), 5).ids, b.query(q.row(i), 5).ids);
}

TEST(KdForest, TopDimsOneUsesMaxVarianceDimension) {
  // Dimension 2 dominates the variance everywhere.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> data;
  for (int i = 0; i < 64; ++i) {
    data.push_back(u(rng));
    data.push_back(u(rng));
    data.push_back(static_cast<float>(i) * 100.0f);
  }
  KdForest f(VectorSet(64, 3, data), 3, 1, 5, 10);
  for (const auto& tree : f.trees())
    for (const auto& n : tree.nodes)
      if (!n.is_leaf()) EXPECT_EQ(n.split_dim, 2u);
}

TEST(KdForest, LeavesRespectAncestorSplits) {
  VectorSet base = testutil::uniform_set(300, 5, 22);
  KdForest f(base, 3, 5, 9, 20);
  for (const auto& tree : f.trees()) {
    // (node, constraints) stack; each constraint is (dim, value, goes_left).
    struct Bound {
      std::uint32_t dim;
      float value;
      bool left;
    };
    std::vector<std::pair<std::int32_t, std::vector<Bound>>> stack{{0, {}}};
    std::size_t points = 0;
    while (!stack.empty()) {
      auto [id, bounds] = stack.back();
      stack.pop_back();
      const auto& n = tree.nodes[static_cast<std::size_t>(id)];
      if (n.is_leaf()) {
        for (auto i = n.begin; i < n.end; ++i) {
          ++points;
          auto p = base.row(tree.order[i]);
          for (const auto& b : bounds) {
            if (b.left)
              EXPECT_LT(p[b.dim], b.value);
            else
              EXPECT_GE(p[b.dim], b.value);
          }
        }
        continue;
      }
      auto lb = bounds;
      lb.push_back({n.split_dim, n.split_value, true});
      auto rb = bounds;
      rb.push_back({n.split_dim, n.split_value, false});
      stack.emplace_back(n.left, std::move(lb));
      stack.emplace_back(n.right, std::move(rb));
    }
    EXPECT_EQ(points, base.size());
  }
}

TEST(KdForest, ExhaustiveChecksEqualBrute) {
  VectorSet base = testutil::uniform_set(300, 10, 23);
  VectorSet queries = testutil::uniform_set(30, 10, 24);
  expect_matches_truth(KdForest(base, 4, 5, 1, 300), queries, exact_ground_truth(base, queries, 10));
}

TEST(KdForest, DuplicatePointsAreHandled) {
  std::vector<float> data;
  for (int i = 0; i < 20; ++i) {
    data.push_back(static_cast<float>(i % 4));
    data.push_back(0.0f);
  }
  VectorSet base(20, 2, data);
  VectorSet queries = testutil::uniform_set(10, 2, 1, -1, 4);
  expect_matches_truth(KdForest(base, 2, 2, 3, 20), queries, exact_ground_truth(base, queries, 6));
}

TEST(KdForest, ExactPointFoundWithMinimalChecks) {
  VectorSet base = testutil::uniform_set(500, 8, 25);
  KdForest f(base, 4, 5, 2, 1);
  for (std::size_t i = 0; i < base.size(); i += 37) {
    QueryResult r = f.query(base.row(i), 1, 1);
    EXPECT_EQ(r.ids[0], i);
    EXPECT_EQ(r.dists[0], 0.f);
  }
  EXPECT_THROW(f.query(base.row(0), 5, 4), InvalidArgument);
}

TEST(KdForest, RecallMonotoneInMaxChecks) {
  VectorSet all = make_synthetic(2100, 16, 10, 1.0, 26);
  auto [base, queries] = split_queries(all, 100, 27);
  const std::size_t n = base.size(), k = 10;
  KdForest f(base, 4, 5, 3, k);
  GroundTruth gt = exact_ground_truth(base, queries, k);
  const double at_k = mean_recall(f, queries, gt, k, k, true);
  const double at_tenth = mean_recall(f, queries, gt, k, n / 10, true);
  const double at_quarter = mean_recall(f, queries, gt, k, n / 4, true);
  const double at_n = mean_recall(f, queries, gt, k, n, true);
  EXPECT_LE(at_k, at_tenth);
  EXPECT_LE(at_tenth, at_quarter);
  EXPECT_LE(at_quarter, at_n);
  EXPECT_EQ(at_n, 1.0);
  EXPECT_LT(at_k, 1.0);
}

TEST(Property, ExactIndexesAgreeOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(20, 400)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(20, n))(rng);
    VectorSet base = testutil::uniform_set(n, d, rng());
    VectorSet queries = testutil::uniform_set(10, d, rng());
    GroundTruth gt = exact_ground_truth(base, queries, k);
    SCOPED_TRACE("n=" + std::to_string(n) + " d=" + std::to_string(d) + " k=" + std::to_string(k));
    expect_matches_truth(BallTree(base, 1 + trial % 16), queries, gt);
    expect_matches_truth(KdForest(base, 1 + trial % 4, std::min<std::size_t>(5, d), rng(), n), queries, gt);
  }
}

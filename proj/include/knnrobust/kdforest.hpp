#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "knnrobust/knn_core.hpp"

namespace knnrobust {

/// Forest of randomized KD-trees searched jointly through one priority queue,
/// in the style of FLANN's randomized kd-tree index.
///
/// At every node the split dimension is drawn uniformly from the `top_dims`
/// highest-variance dimensions of that node's points (dimensions with zero
/// variance are never chosen) and the split value is the median. Points with
/// coordinate < split go left. When the median would leave the left side empty
/// the midpoint of the coordinate range is used instead. Leaves hold a single
/// point, or several identical points.
class KdForest final : public Index {
 public:
  struct Node {
    std::int32_t left = -1;  // -1 for leaves
    std::int32_t right = -1;
    std::uint32_t split_dim = 0;
    float split_value = 0.0f;
    std::uint32_t begin = 0;  // leaf span into Tree::order
    std::uint32_t end = 0;

    bool is_leaf() const { return left < 0; }
  };

  struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root
    std::vector<PointId> order;
  };

  KdForest(VectorSet base, std::size_t num_trees, std::size_t top_dims, std::uint64_t seed,
           std::size_t max_checks);

  IndexKind kind() const override { return IndexKind::kdforest; }
  std::size_t size() const override { return base_.size(); }
  std::size_t dim() const override { return base_.dim(); }

  QueryResult query(std::span<const float> q, std::size_t k) const override {
    return query(q, k, max_checks_);
  }

  /// Descends every tree once, queueing the far branch at each split keyed by
  /// the accumulated squared distance to the splitting boundaries, then keeps
  /// popping the nearest branch until `max_checks` distinct points have been
  /// scored. Points reached through several trees are scored once. Ties in the
  /// queue are ordered by (key, tree index, node id).
  QueryResult query(std::span<const float> q, std::size_t k, std::size_t max_checks) const;

  std::span<const Tree> trees() const { return trees_; }
  std::size_t top_dims() const { return top_dims_; }
  const VectorSet& base() const { return base_; }

 private:
  VectorSet base_;
  std::size_t top_dims_;
  std::size_t max_checks_;
  std::vector<Tree> trees_;
};

}  // namespace knnrobust

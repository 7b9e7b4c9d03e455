#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "knnrobust/knn_core.hpp"

namespace knnrobust {

inline constexpr std::size_t kUnlimitedNodes = std::numeric_limits<std::size_t>::max();

/// Ball tree over a copy of the base set.
///
/// Internal nodes are split by two farthest-point seeds: seed A is the point
/// farthest from the node centroid, seed B the point farthest from A, and every
/// point joins the nearer seed (ties go to A). A node whose points all coincide
/// is split in index order instead.
class BallTree final : public Index {
 public:
  struct Node {
    std::size_t centroid = 0;     // offset into centroids(), in units of dim()
    float radius = 0.0f;          // max l2_distance from centroid to any point below
    std::int32_t left = -1;       // -1 for leaves
    std::int32_t right = -1;
    std::uint32_t begin = 0;      // leaf span into point_order()
    std::uint32_t end = 0;

    bool is_leaf() const { return left < 0; }
  };

  /// `max_nodes` is the default node-visit budget for query().
  BallTree(VectorSet base, std::size_t leaf_size, std::size_t max_nodes = kUnlimitedNodes);

  IndexKind kind() const override { return IndexKind::balltree; }
  std::size_t size() const override { return base_.size(); }
  std::size_t dim() const override { return base_.dim(); }

  QueryResult query(std::span<const float> q, std::size_t k) const override {
    return query(q, k, max_nodes_);
  }

  /// Depth-first branch and bound, nearer child first. A node is pruned when
  /// dist(q, centroid) - radius exceeds the current k-th best. Traversal stops
  /// once `max_nodes` nodes have been visited and k candidates are held.
  QueryResult query(std::span<const float> q, std::size_t k, std::size_t max_nodes) const;

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const float> centroid(const Node& node) const {
    return {centroids_.data() + node.centroid * base_.dim(), base_.dim()};
  }
  std::span<const PointId> point_order() const { return order_; }
  std::size_t leaf_size() const { return leaf_size_; }
  std::size_t depth() const;

 private:
  std::int32_t build_node(std::uint32_t begin, std::uint32_t end);

  VectorSet base_;
  std::size_t leaf_size_;
  std::size_t max_nodes_;
  std::vector<Node> nodes_;
  std::vector<float> centroids_;
  std::vector<PointId> order_;
};

}  // namespace knnrobust

#include "knnrobust/balltree.hpp"

#include <algorithm>
#include <numeric>

#include "knnrobust/error.hpp"
#include "knnrobust/topk.hpp"

namespace knnrobust {

BallTree::BallTree(VectorSet base, std::size_t leaf_size, std::size_t max_nodes)
    : base_(std::move(base)), leaf_size_(leaf_size), max_nodes_(max_nodes) {
  if (base_.empty()) throw InvalidArgument("ball tree: empty base set");
  if (leaf_size_ == 0) throw InvalidArgument("ball tree: leaf_size must be >= 1");
  if (max_nodes_ == 0) throw InvalidArgument("ball tree: max_nodes must be >= 1");
  order_.resize(base_.size());
  std::iota(order_.begin(), order_.end(), PointId{0});
  nodes_.reserve(2 * base_.size() / leaf_size_ + 1);
  build_node(0, static_cast<std::uint32_t>(base_.size()));
}

std::int32_t BallTree::build_node(std::uint32_t begin, std::uint32_t end) {
  const std::size_t d = base_.dim();
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();

  std::vector<double> mean(d, 0.0);
  for (auto i = begin; i < end; ++i) {
    auto p = base_.row(order_[i]);
    for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
  }
  const std::size_t offset = centroids_.size() / d;
  for (std::size_t j = 0; j < d; ++j)
    centroids_.push_back(static_cast<float>(mean[j] / static_cast<double>(end - begin)));
  const std::span<const float> center(centroids_.data() + offset * d, d);

  float radius = 0.0f;
  std::uint32_t far_a = begin;
  for (auto i = begin; i < end; ++i) {
    const float dist = l2_distance(center, base_.row(order_[i]));
    if (dist > radius) {
      radius = dist;
      far_a = i;
    }
  }
  {
    Node& node = nodes_[static_cast<std::size_t>(index)];
    node.centroid = offset;
    node.radius = radius;
    node.begin = begin;
    node.end = end;
  }
  if (end - begin <= leaf_size_) return index;

  std::uint32_t mid = begin;
  if (radius > 0.0f) {
    const auto seed_a = base_.row(order_[far_a]);
    std::uint32_t far_b = begin;
    float best = -1.0f;
    for (auto i = begin; i < end; ++i) {
      const float dist = l2_distance(seed_a, base_.row(order_[i]));
      if (dist > best) {
        best = dist;
        far_b = i;
      }
    }
    // Copy the seeds: partitioning below permutes order_.
    const std::vector<float> a(seed_a.begin(), seed_a.end());
    const auto rb = base_.row(order_[far_b]);
    const std::vector<float> b(rb.begin(), rb.end());
    auto split = std::stable_partition(
        order_.begin() + begin, order_.begin() + end, [&](PointId id) {
          auto p = base_.row(id);
          return l2_distance(p, a) <= l2_distance(p, b);
        });
    mid = static_cast<std::uint32_t>(split - order_.begin());
  }
  if (mid == begin || mid == end) mid = begin + (end - begin) / 2;

  const auto left = build_node(begin, mid);
  const auto right = build_node(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(index)];
  node.left = left;
  node.right = right;
  return index;
}

std::size_t BallTree::depth() const {
  std::size_t deepest = 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 1}};
  while (!stack.empty()) {
    auto [id, level] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, level);
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, level + 1);
      stack.emplace_back(n.right, level + 1);
    }
  }
  return deepest;
}

QueryResult BallTree::query(std::span<const float> q, std::size_t k, std::size_t max_nodes) const {
  check_query(q, k);
  if (max_nodes == 0) throw InvalidArgument("ball tree: max_nodes must be >= 1");
  TopK top(k);

  struct Pending {
    std::int32_t node;
    float lower;  // dist(q, centroid) - radius, clamped at 0
  };
  auto lower_bound = [&](std::int32_t id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return std::max(0.0f, l2_distance(q, centroid(n)) - n.radius);
  };
  // Slack absorbs float rounding in the triangle-inequality bound.
  auto prunable = [&](float lower) {
    if (!top.full()) return false;
    const float worst = top.worst();
    return lower > worst + 1e-6f * (lower + worst) + 1e-30f;
  };

  std::vector<Pending> stack{{0, lower_bound(0)}};
  std::size_t visited = 0;
  while (!stack.empty()) {
    if (visited >= max_nodes && top.full()) break;
    const Pending cur = stack.back();
    stack.pop_back();
    if (prunable(cur.lower)) continue;
    ++visited;
    const Node& n = nodes_[static_cast<std::size_t>(cur.node)];
    if (n.is_leaf()) {
      for (auto i = n.begin; i < n.end; ++i)
        top.push(l2_distance(q, base_.row(order_[i])), order_[i]);
      continue;
    }
    Pending l{n.left, lower_bound(n.left)};
    Pending r{n.right, lower_bound(n.right)};
    if (r.lower < l.lower) std::swap(l, r);
    stack.push_back(r);  // farther child waits
    stack.push_back(l);
  }

  auto best = std::move(top).sorted();
  QueryResult result;
  for (const auto& nb : best) {
    result.ids.push_back(nb.id);
    result.dists.push_back(nb.dist);
  }
  return result;
}

}  // namespace knnrobust

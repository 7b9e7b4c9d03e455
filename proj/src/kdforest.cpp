#include "knnrobust/kdforest.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <queue>

#include "knnrobust/error.hpp"
#include "knnrobust/random.hpp"
#include "knnrobust/topk.hpp"

namespace knnrobust {

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const VectorSet& base, std::size_t top_dims, std::uint64_t seed,
              KdForest::Tree& tree)
      : base_(base), top_dims_(top_dims), rng_(seed), tree_(tree) {}

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().begin = begin;
    tree_.nodes.back().end = end;
    if (end - begin <= 1) return index;

    const auto dim = choose_dim(begin, end);
    if (!dim) return index;  // all points identical

    auto first = tree_.order.begin() + begin;
    auto last = tree_.order.begin() + end;
    auto coord = [&](PointId id) { return base_.row(id)[*dim]; };

    const std::size_t half = (end - begin) / 2;
    std::vector<float> values;
    values.reserve(end - begin);
    for (auto it = first; it != last; ++it) values.push_back(coord(*it));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(half),
                     values.end());
    float split = values[half];
    const float lo = *std::min_element(values.begin(), values.end());
    if (split <= lo) {
      const float hi = *std::max_element(values.begin(), values.end());
      split = lo + (hi - lo) / 2;
      if (split <= lo) split = hi;  // adjacent floats
    }
    auto mid_it = std::stable_partition(first, last, [&](PointId id) { return coord(id) < split; });
    const auto mid = static_cast<std::uint32_t>(mid_it - tree_.order.begin());

    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.left = left;
    node.right = right;
    node.split_dim = static_cast<std::uint32_t>(*dim);
    node.split_value = split;
    return index;
  }

 private:
  std::optional<std::size_t> choose_dim(std::uint32_t begin, std::uint32_t end) {
    const std::size_t d = base_.dim();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (auto i = begin; i < end; ++i) {
      auto p = base_.row(tree_.order[i]);
      for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    }
    const double count = static_cast<double>(end - begin);
    for (auto& m : mean) m /= count;
    for (auto i = begin; i < end; ++i) {
      auto p = base_.row(tree_.order[i]);
      for (std::size_t j = 0; j < d; ++j) {
        const double x = p[j] - mean[j];
        var[j] += x * x;
      }
    }
    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < d; ++j)
      if (var[j] > 0) dims.push_back(j);
    if (dims.empty()) return std::nullopt;
    std::stable_sort(dims.begin(), dims.end(),
                     [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
    const std::size_t pool = std::min(top_dims_, dims.size());
    std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
    return dims[pick(rng_)];
  }

  const VectorSet& base_;
  std::size_t top_dims_;
  Rng rng_;
  KdForest::Tree& tree_;
};

struct Branch {
  float key;
  std::uint32_t tree;
  std::int32_t node;

  // Inverted so std::priority_queue pops the smallest (key, tree, node).
  friend bool operator<(const Branch& a, const Branch& b) {
    if (a.key != b.key) return a.key > b.key;
    if (a.tree != b.tree) return a.tree > b.tree;
    return a.node > b.node;
  }
};

}  // namespace

KdForest::KdForest(VectorSet base, std::size_t num_trees, std::size_t top_dims, std::uint64_t seed,
                   std::size_t max_checks)
    : base_(std::move(base)), top_dims_(top_dims), max_checks_(max_checks) {
  if (base_.empty()) throw InvalidArgument("kd forest: empty base set");
  if (num_trees == 0) throw InvalidArgument("kd forest: num_trees must be >= 1");
  if (top_dims == 0 || top_dims > base_.dim())
    throw InvalidArgument("kd forest: top_dims must be in [1, d]");
  if (max_checks == 0) throw InvalidArgument("kd forest: max_checks must be >= 1");
  trees_.resize(num_trees);
  for (std::size_t t = 0; t < num_trees; ++t) {
    auto& tree = trees_[t];
    tree.order.resize(base_.size());
    std::iota(tree.order.begin(), tree.order.end(), PointId{0});
    TreeBuilder(base_, top_dims_, derive_seed(seed, t), tree)
        .build(0, static_cast<std::uint32_t>(base_.size()));
  }
}

QueryResult KdForest::query(std::span<const float> q, std::size_t k, std::size_t max_checks) const {
  check_query(q, k);
  if (max_checks < k) throw InvalidArgument("kd forest: max_checks must be >= k");

  TopK top(k);
  std::vector<bool> scored(base_.size(), false);
  std::size_t checks = 0;
  std::priority_queue<Branch> queue;

  auto descend = [&](std::uint32_t t, std::int32_t id, float key) {
    const Tree& tree = trees_[t];
    while (true) {
      const Node& n = tree.nodes[static_cast<std::size_t>(id)];
      if (n.is_leaf()) {
        for (auto i = n.begin; i < n.end && checks < max_checks; ++i) {
          const PointId p = tree.order[i];
          if (scored[p]) continue;
          scored[p] = true;
          ++checks;
          top.push(l2_distance(q, base_.row(p)), p);
        }
        return;
      }
      const float diff = q[n.split_dim] - n.split_value;
      const bool go_left = diff < 0;
      queue.push({key + diff * diff, t, go_left ? n.right : n.left});
      id = go_left ? n.left : n.right;
    }
  };

  for (std::uint32_t t = 0; t < trees_.size() && checks < max_checks; ++t) descend(t, 0, 0.0f);
  while (checks < max_checks && !queue.empty()) {
    const Branch b = queue.top();
    queue.pop();
    descend(b.tree, b.node, b.key);
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

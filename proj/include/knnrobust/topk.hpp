#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "knnrobust/vecdata.hpp"

namespace knnrobust {

struct Neighbor {
  float dist;
  PointId id;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  }
};

/// Bounded max-heap keeping the k smallest neighbors by (distance, id).
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  bool full() const { return heap_.size() >= k_; }
  std::size_t size() const { return heap_.size(); }

  /// Distance of the current k-th best, +inf until k candidates are held.
  float worst() const {
    return full() ? heap_.front().dist : std::numeric_limits<float>::infinity();
  }

  void push(float dist, PointId id) {
    const Neighbor n{dist, id};
    if (!full()) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (n < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  /// Ascending by (distance, id).
  std::vector<Neighbor> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

}  // namespace knnrobust

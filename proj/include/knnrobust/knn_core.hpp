#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knnrobust/vecdata.hpp"

namespace knnrobust {

enum class IndexKind { brute, balltree, kdforest };

std::string_view to_string(IndexKind kind);

/// Which index to build and with what parameters.
///
/// Required keys per kind:
///   brute     (none)
///   balltree  leaf_size            optional: max_nodes (absent = unlimited)
///   kdforest  num_trees, max_checks optional: top_dims (default min(5, d)), seed (default 0)
///
/// Textual form: "kind" or "kind:key=value,key=value", e.g.
/// "kdforest:num_trees=4,max_checks=32".
struct IndexSpec {
  IndexKind kind = IndexKind::brute;
  std::map<std::string, std::uint64_t> params;

  static IndexSpec parse(std::string_view text);
  std::string label() const;

  /// Throws InvalidArgument on missing, unknown or out-of-range keys.
  void validate() const;

  std::uint64_t get(const std::string& key, std::uint64_t fallback) const;

  friend bool operator==(const IndexSpec&, const IndexSpec&) = default;
};

struct QueryResult {
  std::vector<PointId> ids;
  std::vector<float> dists;  // ascending

  std::size_t k() const { return ids.size(); }
};

struct FpLabel {
  std::size_t query_id = 0;
  bool is_fp = false;
  double recall = 1.0;
};

/// Read-only nearest-neighbor index. Implementations are immutable after
/// construction and `query` is safe to call concurrently without locking.
class Index {
 public:
  virtual ~Index() = default;

  virtual IndexKind kind() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t dim() const = 0;

  /// Top-k candidates ascending by (distance, id). Throws InvalidArgument on a
  /// dimension mismatch or k outside [1, size()].
  virtual QueryResult query(std::span<const float> q, std::size_t k) const = 0;

  const IndexSpec& spec() const { return spec_; }
  double build_seconds() const { return build_seconds_; }

 protected:
  void check_query(std::span<const float> q, std::size_t k) const;

 private:
  friend std::unique_ptr<Index> build(const IndexSpec&, const VectorSet&);
  IndexSpec spec_;
  double build_seconds_ = 0.0;
};

/// Exact linear scan. Agrees bit-for-bit with exact_ground_truth.
class BruteIndex final : public Index {
 public:
  explicit BruteIndex(VectorSet base) : base_(std::move(base)) {}

  IndexKind kind() const override { return IndexKind::brute; }
  std::size_t size() const override { return base_.size(); }
  std::size_t dim() const override { return base_.dim(); }
  QueryResult query(std::span<const float> q, std::size_t k) const override;

 private:
  VectorSet base_;
};

/// Builds the index described by `spec` over a copy of `base`, timing the whole
/// construction with a monotonic clock (millisecond resolution).
std::unique_ptr<Index> build(const IndexSpec& spec, const VectorSet& base);

/// Relaxed recall of one answer: the fraction of returned neighbors whose
/// distance is within truth_dists[k-1] * (1 + epsilon). epsilon = 0 is strict
/// matching. The query is a false positive when recall < 1.
FpLabel label_fp(const QueryResult& result, std::span<const float> truth_dists,
                 double epsilon, std::size_t query_id = 0);

}  // namespace knnrobust

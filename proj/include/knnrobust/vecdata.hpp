#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace knnrobust {

using PointId = std::uint32_t;

/// Dense n x d matrix of finite float32 points. Row index is the point id,
/// so ids are always unique and dense in [0, n).
class VectorSet {
 public:
  VectorSet() = default;

  /// Takes ownership of row-major data; throws InvalidArgument when the shape
  /// is empty or inconsistent, FormatError when a value is not finite.
  VectorSet(std::size_t n, std::size_t d, std::vector<float> data);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  bool empty() const { return n_ == 0; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * d_, d_};
  }
  std::span<const float> data() const { return data_; }

  /// Copies the listed rows, in order, into a new set.
  VectorSet select(std::span<const std::size_t> rows) const;

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> data_;
};

/// Exact top-k neighbors per query: ids and Euclidean distances, row-major.
struct GroundTruth {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<PointId> ids;
  std::vector<float> dists;

  std::span<const PointId> ids_row(std::size_t i) const {
    return {ids.data() + i * k, k};
  }
  std::span<const float> dists_row(std::size_t i) const {
    return {dists.data() + i * k, k};
  }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

enum class VectorFormat { binary, csv };

VectorSet load_vectors(const std::filesystem::path& path, VectorFormat format);
void save_vectors(const VectorSet& set, const std::filesystem::path& path,
                  VectorFormat format);

/// Picks the format from the file extension: ".csv" is CSV, anything else binary.
VectorFormat format_for_path(const std::filesystem::path& path);

GroundTruth load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);

/// Gaussian mixture with `clusters` isotropic components of standard deviation
/// `spread`. Cluster centers are uniform in [-10, 10]^d and points are assigned
/// to clusters round-robin. Deterministic for a fixed seed.
VectorSet make_synthetic(std::size_t n, std::size_t d, std::size_t clusters,
                         double spread, std::uint64_t seed);

/// Randomly moves `query_count` rows into a query set; the remaining rows keep
/// their relative order and form the base set.
std::pair<VectorSet, VectorSet> split_queries(const VectorSet& all,
                                              std::size_t query_count,
                                              std::uint64_t seed);

/// Euclidean distance, accumulated in double and rounded once to float. Every
/// index and the ground truth use this same function, so equal neighbor sets
/// produce bit-identical distances.
float l2_distance(std::span<const float> a, std::span<const float> b);

/// Brute-force top-k for every query, ascending by (distance, id). Work is split
/// over queries; the output does not depend on `threads` (0 = all cores).
GroundTruth exact_ground_truth(const VectorSet& base, const VectorSet& queries,
                               std::size_t k, std::size_t threads = 0);

}  // namespace knnrobust

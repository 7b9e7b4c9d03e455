#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "knnrobust/knn_core.hpp"
#include "knnrobust/vecdata.hpp"

namespace knnrobust::analysis {

/// Principal axes of a point set. components is c x d, row-major, rows
/// orthonormal; explained_variance is non-increasing and uses the n - 1
/// sample normalization.
struct PcaModel {
  std::size_t dim = 0;
  std::size_t count = 0;  // c
  std::vector<double> mean;
  std::vector<double> components;
  std::vector<double> explained_variance;

  std::span<const double> component(std::size_t i) const {
    return {components.data() + i * dim, dim};
  }
};

struct SymmetricEigen {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // row i is the eigenvector for values[i]
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations on a symmetric n x n matrix (row-major) until the
/// off-diagonal Frobenius norm drops below tolerance * ||A||_F. Eigenvectors
/// are sign-normalized so their largest-magnitude entry is positive; equal
/// eigenvalues keep their original diagonal order.
SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tolerance = 1e-10,
                            std::size_t max_sweeps = 100);

/// Sample covariance (n - 1 normalization), d x d row-major.
std::vector<double> covariance(const VectorSet& points, std::span<const double> mean);

/// Requires n >= 2 and 1 <= c <= min(n, d). Identical points yield zero
/// variance and the identity basis.
PcaModel fit_pca(const VectorSet& points, std::size_t c);

/// (x - mean) * components^T for every row, n x c row-major in double.
std::vector<double> project_values(const PcaModel& model, const VectorSet& points);

/// project_values rounded into a c-column VectorSet.
VectorSet project(const PcaModel& model, const VectorSet& points);

struct ScatterRow {
  double pc1 = 0;
  double pc2 = 0;  // 0 when the model has a single component
  bool is_fp = false;
};

struct ScatterTable {
  std::vector<ScatterRow> rows;
  /// Best accuracy of a single-threshold split between TP and FP along pc1 or
  /// pc2 (either orientation).
  double separability = 1.0;
  std::size_t best_component = 0;
  bool single_class = false;  // only one label present; score is trivially 1
};

/// Best single-threshold accuracy for labels along one coordinate.
double best_threshold_accuracy(std::span<const double> values, const std::vector<bool>& labels);

/// Throws InvalidArgument when labels and queries differ in length.
ScatterTable tp_fp_scatter(const VectorSet& queries, std::span<const FpLabel> labels,
                           const PcaModel& model);

/// CSV with header "pc1,pc2,is_fp".
void write_scatter_csv(const ScatterTable& table, const std::filesystem::path& path);

/// gnuplot script plotting a scatter CSV, TPs green and FPs red.
void write_scatter_gnuplot(const std::filesystem::path& csv, const std::filesystem::path& script);

}  // namespace knnrobust::analysis

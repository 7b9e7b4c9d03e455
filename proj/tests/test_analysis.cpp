#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <fstream>
#include <random>

#include "knnrobust/analysis.hpp"
#include "knnrobust/error.hpp"
#include "test_util.hpp"

using namespace knnrobust;
using namespace knnrobust::analysis;

namespace {

// Correlated Gaussian data: x = A z with a random mixing matrix.
VectorSet correlated(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> mix(d * d);
  for (auto& m : mix) m = g(rng);
  std::vector<float> data(n * d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : z) v = g(rng);
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += mix[r * d + c] * z[c] * (1.0 + static_cast<double>(c));
      data[i * d + r] = static_cast<float>(s);
    }
  }
  return VectorSet(n, d, std::move(data));
}

double sample_variance(const std::vector<double>& proj, std::size_t n, std::size_t c, std::size_t col) {
  double m = 0, v = 0;
  for (std::size_t i = 0; i < n; ++i) m += proj[i * c + col];
  m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) v += (proj[i * c + col] - m) * (proj[i * c + col] - m);
  return v / static_cast<double>(n - 1);
}

}  // namespace

TEST(Jacobi, DiagonalAndKnownMatrix) {
  SymmetricEigen e = jacobi_eigen({3, 0, 0, 5}, 2);
  EXPECT_EQ(e.values, (std::vector<double>{5, 3}));
  EXPECT_EQ(e.vectors, (std::vector<double>{0, 1, 1, 0}));

  e = jacobi_eigen({2, 1, 1, 2}, 2);
  EXPECT_NEAR(e.values[0], 3, 1e-12);
  EXPECT_NEAR(e.values[1], 1, 1e-12);
  EXPECT_NEAR(std::abs(e.vectors[0]), 1 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(jacobi_eigen({1, 2, 3}, 2), InvalidArgument);
}

TEST(Jacobi, MatchesEigenSolverOnRandomSymmetric) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t n : {3u, 8u, 20u, 32u}) {
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c <= r; ++c) m(r, c) = m(c, r) = g(rng);
    std::vector<double> flat(m.data(), m.data() + n * n);
    SymmetricEigen mine = jacobi_eigen(flat, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(m);
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_NEAR(mine.values[i], oracle.eigenvalues()(static_cast<Eigen::Index>(n - 1 - i)), 1e-8);
  }
}

TEST(Pca, LineYEqualsX) {
  std::vector<float> data;
  for (int i = -10; i <= 10; ++i) {
    data.push_back(static_cast<float>(i));
    data.push_back(static_cast<float>(i));
  }
  PcaModel m = fit_pca(VectorSet(21, 2, data), 2);
  EXPECT_NEAR(m.component(0)[0], 1 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(m.component(0)[1], 1 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(m.explained_variance[1], 0.0, 1e-9);
}

TEST(Pca, AxisAlignedData) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> wide(0, 5), narrow(0, 1);
  std::vector<float> data;
  for (int i = 0; i < 500; ++i) {
    data.push_back(wide(rng));
    data.push_back(narrow(rng));
  }
  PcaModel m = fit_pca(VectorSet(500, 2, data), 2);
  EXPECT_NEAR(std::abs(m.component(0)[0]), 1.0, 1e-2);
  EXPECT_NEAR(std::abs(m.component(1)[1]), 1.0, 1e-2);
}

TEST(Pca, OrthonormalOrderedAndMatchesOracle) {
  const std::size_t n = 200, d = 6;
  VectorSet x = correlated(n, d, 5);
  PcaModel m = fit_pca(x, d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += m.component(a)[j] * m.component(b)[j];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-8);
    }
    if (a > 0) EXPECT_LE(m.explained_variance[a], m.explained_variance[a - 1]);
  }
  // Independent oracle: naive covariance + Eigen's solver.
  Eigen::MatrixXd xm(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xm(i, j) = x.row(i)[j];
  Eigen::MatrixXd centered = xm.rowwise() - xm.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(cov);
  const auto proj = project_values(m, x);
  for (std::size_t c = 0; c < d; ++c) {
    const double expect = oracle.eigenvalues()(static_cast<Eigen::Index>(d - 1 - c));
    EXPECT_NEAR(m.explained_variance[c], expect, 1e-8 * std::max(1.0, expect));
    EXPECT_NEAR(sample_variance(proj, n, d, c), m.explained_variance[c], 1e-8 * std::max(1.0, expect));
  }
}

TEST(Pca, ProjectionProperties) {
  VectorSet x = correlated(80, 5, 6);
  PcaModel m = fit_pca(x, 5);
  std::vector<float> mean(m.mean.begin(), m.mean.end());
  auto mp = project_values(m, VectorSet(1, 5, mean));
  for (double v : mp) EXPECT_NEAR(v, 0.0, 1e-5);

  // Full basis: pairwise distances preserved.
  auto p = project_values(m, x);
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      double orig = 0, proj = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double dx = double(x.row(a)[j]) - double(x.row(b)[j]);
        const double dp = p[a * 5 + j] - p[b * 5 + j];
        orig += dx * dx;
        proj += dp * dp;
      }
      EXPECT_NEAR(std::sqrt(orig), std::sqrt(proj), 1e-8 * std::max(1.0, std::sqrt(orig)));
    }
  EXPECT_EQ(project(m, x).dim(), 5u);
  EXPECT_THROW(project(m, testutil::uniform_set(3, 4, 1)), InvalidArgument);
}

TEST(Pca, DegenerateInputs) {
  PcaModel m = fit_pca(VectorSet(4, 3, std::vector<float>(12, 2.0f)), 2);
  EXPECT_EQ(m.explained_variance, (std::vector<double>{0, 0}));
  EXPECT_THROW(fit_pca(VectorSet(1, 3, {1, 2, 3}), 1), InvalidArgument);
  EXPECT_THROW(fit_pca(testutil::uniform_set(5, 3, 1), 4), InvalidArgument);
  EXPECT_THROW(fit_pca(testutil::uniform_set(5, 3, 1), 0), InvalidArgument);
}

TEST(Separability, ThresholdScores) {
  std::vector<double> v{1, 2, 3, 4};
  EXPECT_EQ(best_threshold_accuracy(v, {false, false, true, true}), 1.0);
  EXPECT_EQ(best_threshold_accuracy(v, {true, true, false, false}), 1.0);
  EXPECT_EQ(best_threshold_accuracy(v, {true, false, true, false}), 0.75);
  // Equal values cannot be split apart.
  std::vector<double> same{1, 1};
  EXPECT_EQ(best_threshold_accuracy(same, {true, false}), 0.5);
}

TEST(Scatter, SingleClassFlagged) {
  VectorSet q = testutil::uniform_set(30, 4, 1);
  std::vector<FpLabel> labels(30);
  ScatterTable t = tp_fp_scatter(q, labels, fit_pca(q, 2));
  EXPECT_TRUE(t.single_class);
  EXPECT_EQ(t.separability, 1.0);
  EXPECT_EQ(t.rows.size(), 30u);
  labels.pop_back();
  EXPECT_THROW(tp_fp_scatter(q, labels, fit_pca(q, 2)), InvalidArgument);
}

TEST(Scatter, PerfectSplitAlongFirstComponent) {
  std::vector<float> data;
  std::vector<FpLabel> labels;
  for (int i = 0; i < 40; ++i) {
    data.push_back(static_cast<float>(i) * 10.0f);
    data.push_back(static_cast<float>(i % 3));
    FpLabel l;
    l.is_fp = i >= 25;
    labels.push_back(l);
  }
  VectorSet q(40, 2, data);
  ScatterTable t = tp_fp_scatter(q, labels, fit_pca(q, 2));
  EXPECT_FALSE(t.single_class);
  EXPECT_EQ(t.separability, 1.0);
  EXPECT_EQ(t.best_component, 0u);
}

TEST(Scatter, RandomLabelsScoreNearHalf) {
  VectorSet q = testutil::uniform_set(1000, 6, 7);
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  std::vector<FpLabel> labels(1000);
  for (auto& l : labels) l.is_fp = coin(rng);
  ScatterTable t = tp_fp_scatter(q, labels, fit_pca(q, 2));
  EXPECT_NEAR(t.separability, 0.5, 0.05);
}

TEST(Scatter, CsvAndGnuplotOutput) {
  testutil::TempDir dir;
  VectorSet q = testutil::uniform_set(10, 3, 9);
  std::vector<FpLabel> labels(10);
  labels[3].is_fp = true;
  ScatterTable t = tp_fp_scatter(q, labels, fit_pca(q, 2));
  write_scatter_csv(t, dir / "s.csv");
  write_scatter_gnuplot(dir / "s.csv", dir / "s.gp");
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "pc1,pc2,is_fp");
  std::size_t rows = 0, fps = 0;
  while (std::getline(in, line)) {
    ++rows;
    fps += line.back() == '1';
  }
  EXPECT_EQ(rows, 10u);
  EXPECT_EQ(fps, 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "s.gp"));
}

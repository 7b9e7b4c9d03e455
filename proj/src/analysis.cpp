#include "knnrobust/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "knnrobust/error.hpp"

namespace knnrobust::analysis {

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tolerance,
                            std::size_t max_sweeps) {
  if (a.size() != n * n || n == 0) throw InvalidArgument("jacobi_eigen: matrix is not n x n");
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double norm = 0;
  for (double x : a) norm += x * x;
  norm = std::sqrt(norm);
  const double threshold = norm > 0 ? tolerance * norm : 0.0;
  auto off_norm = [&] {
    double s = 0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (r != c) s += at(r, c) * at(r, c);
    return std::sqrt(s);
  };

  SymmetricEigen out;
  while (off_norm() > threshold && out.sweeps < max_sweeps) {
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        // Columns of v accumulate the rotations.
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return at(x, x) > at(y, y); });
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t col = order[i];
    out.values[i] = at(col, col);
    std::size_t big = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(v[k * n + col]) > std::abs(v[big * n + col])) big = k;
    const double sign = v[big * n + col] < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors[i * n + k] = sign * v[k * n + col];
  }
  return out;
}

std::vector<double> covariance(const VectorSet& points, std::span<const double> mean) {
  const std::size_t n = points.size(), d = points.dim();
  if (n < 2) throw InvalidArgument("covariance needs at least two points");
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = points.row(i);
    for (std::size_t j = 0; j < d; ++j) x[j] = row[j] - mean[j];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r; c < d; ++c) cov[r * d + c] += x[r] * x[c];
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      cov[r * d + c] /= static_cast<double>(n - 1);
      cov[c * d + r] = cov[r * d + c];
    }
  return cov;
}

PcaModel fit_pca(const VectorSet& points, std::size_t c) {
  const std::size_t n = points.size(), d = points.dim();
  if (n < 2) throw InvalidArgument("fit_pca needs at least two points");
  if (c == 0 || c > std::min(n, d)) throw InvalidArgument("fit_pca needs 1 <= c <= min(n, d)");
  PcaModel model;
  model.dim = d;
  model.count = c;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = points.row(i);
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += row[j];
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);

  const SymmetricEigen eig = jacobi_eigen(covariance(points, model.mean), d);
  model.components.assign(eig.vectors.begin(), eig.vectors.begin() + static_cast<std::ptrdiff_t>(c * d));
  model.explained_variance.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(c));
  // Rounding can leave tiny negatives on a singular covariance.
  for (auto& ev : model.explained_variance) ev = std::max(ev, 0.0);
  return model;
}

std::vector<double> project_values(const PcaModel& model, const VectorSet& points) {
  if (points.dim() != model.dim) throw InvalidArgument("project: dimension mismatch");
  std::vector<double> out(points.size() * model.count);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto row = points.row(i);
    for (std::size_t c = 0; c < model.count; ++c) {
      auto comp = model.component(c);
      double s = 0;
      for (std::size_t j = 0; j < model.dim; ++j) s += (row[j] - model.mean[j]) * comp[j];
      out[i * model.count + c] = s;
    }
  }
  return out;
}

VectorSet project(const PcaModel& model, const VectorSet& points) {
  const std::vector<double> values = project_values(model, points);
  return VectorSet(points.size(), model.count, std::vector<float>(values.begin(), values.end()));
}

double best_threshold_accuracy(std::span<const double> values, const std::vector<bool>& labels) {
  const std::size_t n = values.size();
  if (n == 0 || labels.size() != n) throw InvalidArgument("threshold accuracy: bad input sizes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const auto total_fp = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  // Split "left = TP, right = FP" after position i; the mirrored rule scores
  // n - correct.
  std::size_t left_tp = 0, left_fp = 0;
  std::size_t best = std::max(total_fp, n - total_fp);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[order[i]])
      ++left_fp;
    else
      ++left_tp;
    // Only split between distinct values.
    if (i + 1 < n && values[order[i]] == values[order[i + 1]]) continue;
    const std::size_t correct = left_tp + (total_fp - left_fp);
    best = std::max({best, correct, n - correct});
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

ScatterTable tp_fp_scatter(const VectorSet& queries, std::span<const FpLabel> labels,
                           const PcaModel& model) {
  if (labels.size() != queries.size())
    throw InvalidArgument("tp_fp_scatter: labels do not align with queries");
  const std::vector<double> proj = project_values(model, queries);
  ScatterTable table;
  std::vector<double> pc1(queries.size()), pc2(queries.size());
  std::vector<bool> is_fp(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    ScatterRow row;
    row.pc1 = proj[i * model.count];
    row.pc2 = model.count > 1 ? proj[i * model.count + 1] : 0.0;
    row.is_fp = labels[i].is_fp;
    pc1[i] = row.pc1;
    pc2[i] = row.pc2;
    is_fp[i] = row.is_fp;
    table.rows.push_back(row);
  }
  const auto fps = std::count(is_fp.begin(), is_fp.end(), true);
  if (fps == 0 || static_cast<std::size_t>(fps) == is_fp.size()) {
    table.single_class = true;
    table.separability = 1.0;
    return table;
  }
  table.separability = best_threshold_accuracy(pc1, is_fp);
  if (model.count > 1) {
    const double s2 = best_threshold_accuracy(pc2, is_fp);
    if (s2 > table.separability) {
      table.separability = s2;
      table.best_component = 1;
    }
  }
  return table;
}

void write_scatter_csv(const ScatterTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(9);
  out << "pc1,pc2,is_fp\n";
  for (const auto& r : table.rows) out << r.pc1 << ',' << r.pc2 << ',' << (r.is_fp ? 1 : 0) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_scatter_gnuplot(const std::filesystem::path& csv, const std::filesystem::path& script) {
  std::ofstream out(script, std::ios::trunc);
  if (!out) throw IoError("cannot open " + script.string() + " for writing");
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set xlabel 'pc1'\nset ylabel 'pc2'\n"
      << "plot '" << csv.string() << "' using 1:($3==0?$2:1/0) with points pt 7 lc rgb 'green' title 'TP', \\\n"
      << "     '' using 1:($3==1?$2:1/0) with points pt 7 lc rgb 'red' title 'FP'\n";
}

}  // namespace knnrobust::analysis

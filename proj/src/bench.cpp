#include "knnrobust/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "knnrobust/error.hpp"

namespace knnrobust::bench {

std::vector<BenchRun> run_bench(const VectorSet& base, const VectorSet& queries,
                                const GroundTruth& truth, std::span<const IndexSpec> specs,
                                std::size_t k, double epsilon) {
  if (truth.n != queries.size() || truth.k != k)
    throw InvalidArgument("run_bench: ground truth does not match queries and k");
  using clock = std::chrono::steady_clock;
  std::vector<BenchRun> runs;
  for (const auto& spec : specs) {
    BenchRun run;
    run.spec = spec;
    try {
      const auto index = build(spec, base);
      run.build_seconds = index->build_seconds();
      double total = 0;
      double recall_sum = 0;
      run.per_query.reserve(queries.size());
      for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto start = clock::now();
        const QueryResult result = index->query(queries.row(i), k);
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        const FpLabel label = label_fp(result, truth.dists_row(i), epsilon, i);
        run.per_query.push_back({label.recall, secs});
        total += secs;
        recall_sum += label.recall;
      }
      run.mean_recall = recall_sum / static_cast<double>(queries.size());
      run.qps = total > 0 ? static_cast<double>(queries.size()) / total : 0.0;
    } catch (const std::exception& e) {
      run.error = e.what();
      run.per_query.clear();
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<ParetoRow> pareto_table(std::span<const BenchRun> runs) {
  std::vector<ParetoRow> rows;
  for (const auto& r : runs)
    if (r.ok()) rows.push_back({r.spec.label(), r.mean_recall, r.qps, r.build_seconds, true});
  for (auto& a : rows)
    for (const auto& b : rows)
      if (b.mean_recall >= a.mean_recall && b.qps >= a.qps &&
          (b.mean_recall > a.mean_recall || b.qps > a.qps))
        a.pareto = false;
  std::stable_sort(rows.begin(), rows.end(), [](const ParetoRow& a, const ParetoRow& b) {
    if (a.mean_recall != b.mean_recall) return a.mean_recall > b.mean_recall;
    return a.qps > b.qps;
  });
  return rows;
}

void write_pareto_csv(std::span<const ParetoRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(10);
  out << "spec_label,mean_recall,qps,build_seconds,pareto_flag\n";
  for (const auto& r : rows)
    out << '"' << r.label << "\"," << r.mean_recall << ',' << r.qps << ',' << r.build_seconds << ','
        << (r.pareto ? 1 : 0) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace knnrobust::bench

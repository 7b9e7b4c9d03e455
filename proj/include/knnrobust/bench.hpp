#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knnrobust/knn_core.hpp"
#include "knnrobust/vecdata.hpp"

namespace knnrobust::bench {

struct QueryTiming {
  double recall = 0;
  double latency_seconds = 0;
};

struct BenchRun {
  IndexSpec spec;
  double build_seconds = 0;
  std::vector<QueryTiming> per_query;
  double qps = 0;  // query count / total query seconds
  double mean_recall = 0;
  std::optional<std::string> error;  // set when build or query failed

  bool ok() const { return !error.has_value(); }
};

/// Builds each spec once and answers every query single-threaded, scoring
/// recall with label_fp. A spec that throws is recorded with its error and
/// the remaining specs still run.
std::vector<BenchRun> run_bench(const VectorSet& base, const VectorSet& queries,
                                const GroundTruth& truth, std::span<const IndexSpec> specs,
                                std::size_t k, double epsilon);

struct ParetoRow {
  std::string label;
  double mean_recall = 0;
  double qps = 0;
  double build_seconds = 0;
  bool pareto = false;  // no other run is at least as good on both axes and better on one
};

/// Successful runs sorted by descending recall (ties: descending qps), with
/// Pareto-dominance flags on (recall, qps).
std::vector<ParetoRow> pareto_table(std::span<const BenchRun> runs);

/// CSV: spec_label,mean_recall,qps,build_seconds,pareto_flag
void write_pareto_csv(std::span<const ParetoRow> rows, const std::filesystem::path& path);

}  // namespace knnrobust::bench

#include "knnrobust/knn_core.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "knnrobust/balltree.hpp"
#include "knnrobust/error.hpp"
#include "knnrobust/kdforest.hpp"
#include "knnrobust/topk.hpp"

namespace knnrobust {

namespace {

struct KindKeys {
  std::set<std::string> required;
  std::set<std::string> optional;
};

KindKeys keys_for(IndexKind kind) {
  switch (kind) {
    case IndexKind::brute:
      return {};
    case IndexKind::balltree:
      return {{"leaf_size"}, {"max_nodes"}};
    case IndexKind::kdforest:
      return {{"num_trees", "max_checks"}, {"top_dims", "seed"}};
  }
  return {};
}

IndexKind parse_kind(std::string_view name) {
  if (name == "brute") return IndexKind::brute;
  if (name == "balltree") return IndexKind::balltree;
  if (name == "kdforest") return IndexKind::kdforest;
  throw InvalidArgument("unknown index kind '" + std::string(name) + "'");
}

QueryResult to_result(std::vector<Neighbor> best) {
  QueryResult r;
  r.ids.reserve(best.size());
  r.dists.reserve(best.size());
  for (const auto& n : best) {
    r.ids.push_back(n.id);
    r.dists.push_back(n.dist);
  }
  return r;
}

}  // namespace

std::string_view to_string(IndexKind kind) {
  switch (kind) {
    case IndexKind::brute:
      return "brute";
    case IndexKind::balltree:
      return "balltree";
    case IndexKind::kdforest:
      return "kdforest";
  }
  return "?";
}

IndexSpec IndexSpec::parse(std::string_view text) {
  IndexSpec spec;
  const auto colon = text.find(':');
  spec.kind = parse_kind(text.substr(0, colon));
  if (colon == std::string_view::npos) return spec;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw InvalidArgument("index parameter '" + std::string(item) + "' is not key=value");
    const std::string key(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("index parameter " + key + " must be a non-negative integer");
    if (!spec.params.emplace(key, std::stoull(value)).second)
      throw InvalidArgument("duplicate index parameter " + key);
  }
  return spec;
}

std::string IndexSpec::label() const {
  std::string out(to_string(kind));
  char sep = ':';
  for (const auto& [key, value] : params) {
    out += sep;
    out += key + "=" + std::to_string(value);
    sep = ',';
  }
  return out;
}

void IndexSpec::validate() const {
  const auto keys = keys_for(kind);
  for (const auto& key : keys.required)
    if (!params.contains(key))
      throw InvalidArgument(std::string(to_string(kind)) + " requires parameter " + key);
  for (const auto& [key, value] : params) {
    if (!keys.required.contains(key) && !keys.optional.contains(key))
      throw InvalidArgument(std::string(to_string(kind)) + " does not take parameter " + key);
    if (key != "seed" && value == 0)
      throw InvalidArgument("index parameter " + key + " must be positive");
  }
}

std::uint64_t IndexSpec::get(const std::string& key, std::uint64_t fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void Index::check_query(std::span<const float> q, std::size_t k) const {
  if (q.size() != dim())
    throw InvalidArgument("query dimension " + std::to_string(q.size()) + " != index dimension " +
                          std::to_string(dim()));
  if (k == 0 || k > size())
    throw InvalidArgument("k must be in [1, " + std::to_string(size()) + "]");
}

QueryResult BruteIndex::query(std::span<const float> q, std::size_t k) const {
  check_query(q, k);
  TopK top(k);
  for (std::size_t i = 0; i < base_.size(); ++i)
    top.push(l2_distance(q, base_.row(i)), static_cast<PointId>(i));
  return to_result(std::move(top).sorted());
}

std::unique_ptr<Index> build(const IndexSpec& spec, const VectorSet& base) {
  spec.validate();
  if (base.empty()) throw InvalidArgument("cannot build an index over an empty set");
  const auto start = std::chrono::steady_clock::now();
  std::unique_ptr<Index> index;
  switch (spec.kind) {
    case IndexKind::brute:
      index = std::make_unique<BruteIndex>(base);
      break;
    case IndexKind::balltree:
      index = std::make_unique<BallTree>(base, spec.get("leaf_size", 1),
                                         spec.get("max_nodes", kUnlimitedNodes));
      break;
    case IndexKind::kdforest:
      index = std::make_unique<KdForest>(
          base, spec.get("num_trees", 1),
          spec.get("top_dims", std::min<std::uint64_t>(5, base.dim())), spec.get("seed", 0),
          spec.get("max_checks", 1));
      break;
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  index->spec_ = spec;
  index->build_seconds_ = static_cast<double>(ms) / 1000.0;
  return index;
}

FpLabel label_fp(const QueryResult& result, std::span<const float> truth_dists, double epsilon,
                 std::size_t query_id) {
  const std::size_t k = truth_dists.size();
  if (k == 0 || result.ids.size() != k || result.dists.size() != k)
    throw InvalidArgument("label_fp: result has " + std::to_string(result.ids.size()) +
                          " neighbors, truth row has " + std::to_string(k));
  if (!(epsilon >= 0)) throw InvalidArgument("label_fp: epsilon must be >= 0");
  const double bound = static_cast<double>(truth_dists[k - 1]) * (1.0 + epsilon);
  std::size_t hits = 0;
  for (float d : result.dists)
    if (static_cast<double>(d) <= bound) ++hits;
  FpLabel label;
  label.query_id = query_id;
  label.recall = static_cast<double>(hits) / static_cast<double>(k);
  label.is_fp = hits < k;
  return label;
}

}  // namespace knnrobust

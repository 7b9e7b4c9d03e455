#include "knnrobust/vecdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "knnrobust/error.hpp"
#include "knnrobust/parallel.hpp"
#include "knnrobust/random.hpp"
#include "knnrobust/topk.hpp"

namespace knnrobust {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kVectorMagic[4] = {'V', 'D', 'S', '1'};
constexpr char kTruthMagic[4] = {'G', 'T', 'K', '1'};

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

template <typename T>
void read_exact(std::istream& in, T* dst, std::size_t count, const std::string& what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
    throw FormatError("truncated file while reading " + what);
}

template <typename T>
void write_raw(std::ostream& out, const T* src, std::size_t count) {
  out.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * sizeof(T)));
}

void check_magic(std::istream& in, const char (&magic)[4], const std::filesystem::path& path) {
  char got[4];
  read_exact(in, got, 4, "header");
  if (std::memcmp(got, magic, 4) != 0)
    throw FormatError(path.string() + ": bad magic, expected " + std::string(magic, 4));
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string() + ": trailing bytes after payload");
}

VectorSet load_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  check_magic(in, kVectorMagic, path);
  std::uint32_t header[2];
  read_exact(in, header, 2, "header");
  const std::size_t n = header[0], d = header[1];
  if (n == 0 || d == 0)
    throw FormatError(path.string() + ": header declares an empty set");
  std::vector<float> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    read_exact(in, data.data() + i * d, d, "row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j)
      if (!std::isfinite(data[i * d + j]))
        throw FormatError(path.string() + ": non-finite value at row " + std::to_string(i));
  }
  expect_eof(in, path);
  return VectorSet(n, d, std::move(data));
}

VectorSet load_csv(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in);
  std::vector<float> data;
  std::size_t d = 0, n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t cols = 0;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      std::size_t used = 0;
      double value = 0;
      try {
        value = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || field.find_first_not_of(" \t", used) != std::string::npos)
        throw FormatError(path.string() + ": unparsable value '" + field + "' at row " +
                          std::to_string(n));
      const auto f = static_cast<float>(value);
      if (!std::isfinite(f))
        throw FormatError(path.string() + ": non-finite value at row " + std::to_string(n));
      data.push_back(f);
      ++cols;
    }
    if (d == 0) d = cols;
    if (cols != d)
      throw FormatError(path.string() + ": row " + std::to_string(n) + " has " +
                        std::to_string(cols) + " columns, expected " + std::to_string(d));
    ++n;
  }
  if (n == 0) throw FormatError(path.string() + ": no rows");
  return VectorSet(n, d, std::move(data));
}

}  // namespace

VectorSet::VectorSet(std::size_t n, std::size_t d, std::vector<float> data)
    : n_(n), d_(d), data_(std::move(data)) {
  if (n_ == 0 || d_ == 0) throw InvalidArgument("VectorSet needs n >= 1 and d >= 1");
  if (data_.size() != n_ * d_)
    throw InvalidArgument("VectorSet data size " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(n_) + "x" + std::to_string(d_));
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw FormatError("non-finite value at row " + std::to_string(i / d_));
}

VectorSet VectorSet::select(std::span<const std::size_t> rows) const {
  std::vector<float> out;
  out.reserve(rows.size() * d_);
  for (auto r : rows) {
    if (r >= n_) throw InvalidArgument("row index out of range");
    auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return VectorSet(rows.size(), d_, std::move(out));
}

VectorFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? VectorFormat::csv : VectorFormat::binary;
}

VectorSet load_vectors(const std::filesystem::path& path, VectorFormat format) {
  return format == VectorFormat::binary ? load_binary(path) : load_csv(path);
}

void save_vectors(const VectorSet& set, const std::filesystem::path& path, VectorFormat format) {
  if (format == VectorFormat::binary) {
    auto out = open_out(path, std::ios::binary);
    out.write(kVectorMagic, 4);
    const std::uint32_t header[2] = {static_cast<std::uint32_t>(set.size()),
                                     static_cast<std::uint32_t>(set.dim())};
    write_raw(out, header, 2);
    write_raw(out, set.data().data(), set.data().size());
    if (!out) throw IoError("write failed for " + path.string());
    return;
  }
  auto out = open_out(path, std::ios::out);
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto r = set.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      // %.9g round-trips float32.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r[j]));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  check_magic(in, kTruthMagic, path);
  std::uint32_t header[2];
  read_exact(in, header, 2, "header");
  GroundTruth gt;
  gt.n = header[0];
  gt.k = header[1];
  if (gt.n == 0 || gt.k == 0) throw FormatError(path.string() + ": empty ground truth");
  gt.ids.resize(gt.n * gt.k);
  gt.dists.resize(gt.n * gt.k);
  read_exact(in, gt.ids.data(), gt.ids.size(), "ids");
  read_exact(in, gt.dists.data(), gt.dists.size(), "distances");
  expect_eof(in, path);
  for (std::size_t i = 0; i < gt.n; ++i) {
    auto dr = gt.dists_row(i);
    for (std::size_t j = 0; j < gt.k; ++j) {
      if (!std::isfinite(dr[j]) || dr[j] < 0)
        throw FormatError(path.string() + ": invalid distance at row " + std::to_string(i));
      if (j > 0 && dr[j] < dr[j - 1])
        throw FormatError(path.string() + ": distances not sorted at row " + std::to_string(i));
    }
  }
  return gt;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::binary);
  out.write(kTruthMagic, 4);
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(truth.n),
                                   static_cast<std::uint32_t>(truth.k)};
  write_raw(out, header, 2);
  write_raw(out, truth.ids.data(), truth.ids.size());
  write_raw(out, truth.dists.data(), truth.dists.size());
  if (!out) throw IoError("write failed for " + path.string());
}

VectorSet make_synthetic(std::size_t n, std::size_t d, std::size_t clusters, double spread,
                         std::uint64_t seed) {
  if (clusters == 0 || n < clusters || d == 0)
    throw InvalidArgument("make_synthetic needs n >= clusters >= 1 and d >= 1");
  if (!(spread > 0) || !std::isfinite(spread))
    throw InvalidArgument("make_synthetic needs spread > 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> center_dist(-10.0, 10.0);
  std::vector<double> centers(clusters * d);
  for (auto& c : centers) c = center_dist(rng);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<float> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* c = centers.data() + (i % clusters) * d;
    for (std::size_t j = 0; j < d; ++j) data[i * d + j] = static_cast<float>(c[j] + noise(rng));
  }
  return VectorSet(n, d, std::move(data));
}

std::pair<VectorSet, VectorSet> split_queries(const VectorSet& all, std::size_t query_count,
                                              std::uint64_t seed) {
  if (query_count == 0 || query_count >= all.size())
    throw InvalidArgument("split_queries needs 1 <= query_count < n");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> queries(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(query_count));
  std::vector<std::size_t> base(order.begin() + static_cast<std::ptrdiff_t>(query_count), order.end());
  std::sort(base.begin(), base.end());
  return {all.select(base), all.select(queries)};
}

float l2_distance(std::span<const float> a, std::span<const float> b) {
  // Four fixed partial sums: vectorizes without reassociation flags and keeps a
  // deterministic summation order.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  const std::size_t d = a.size();
  std::size_t j = 0;
  for (; j + 4 <= d; j += 4) {
    const double x0 = double(a[j]) - double(b[j]);
    const double x1 = double(a[j + 1]) - double(b[j + 1]);
    const double x2 = double(a[j + 2]) - double(b[j + 2]);
    const double x3 = double(a[j + 3]) - double(b[j + 3]);
    s0 += x0 * x0;
    s1 += x1 * x1;
    s2 += x2 * x2;
    s3 += x3 * x3;
  }
  for (; j < d; ++j) {
    const double x = double(a[j]) - double(b[j]);
    s0 += x * x;
  }
  return static_cast<float>(std::sqrt((s0 + s1) + (s2 + s3)));
}

GroundTruth exact_ground_truth(const VectorSet& base, const VectorSet& queries, std::size_t k,
                               std::size_t threads) {
  if (base.dim() != queries.dim())
    throw InvalidArgument("ground truth: base and query dimensions differ");
  if (k == 0 || k > base.size()) throw InvalidArgument("ground truth: need 1 <= k <= base size");
  GroundTruth gt;
  gt.n = queries.size();
  gt.k = k;
  gt.ids.resize(gt.n * k);
  gt.dists.resize(gt.n * k);
  parallel_for(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      TopK top(k);
      auto query = queries.row(q);
      for (std::size_t i = 0; i < base.size(); ++i)
        top.push(l2_distance(query, base.row(i)), static_cast<PointId>(i));
      auto best = std::move(top).sorted();
      for (std::size_t j = 0; j < k; ++j) {
        gt.ids[q * k + j] = best[j].id;
        gt.dists[q * k + j] = best[j].dist;
      }
    }
  });
  return gt;
}

}  // namespace knnrobust

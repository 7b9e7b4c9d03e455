#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knnrobust/attack.hpp"

namespace knnrobust::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kMalformed = 4,
  kInvalid = 5,
  kDiverged = 6,
};

struct SyntheticData {
  std::size_t n = 5000;
  std::size_t d = 16;
  std::size_t clusters = 10;
  double spread = 1.0;
  std::size_t queries = 100;
};

/// Experiment file for `attack` (JSON). Flags given on the command line
/// override the matching fields.
struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> base;
  std::optional<std::filesystem::path> queries;
  std::optional<SyntheticData> synthetic;
  std::string subject = "kdforest:num_trees=4,max_checks=10";
  std::vector<std::size_t> k_values{10};
  std::size_t attack_points = 20;
  bool fp_only = false;  // attack only queries the subject already gets wrong
  attack::AgentConfig agent;
  std::filesystem::path out = "attack_out";

  /// Throws InvalidArgument when the seed is missing, data sources are
  /// ambiguous, or the subject/agent settings are invalid; IoError when a
  /// referenced file does not exist.
  void validate() const;
};

/// Parses an experiment file; throws IoError / FormatError / InvalidArgument.
ExperimentConfig load_experiment(const std::filesystem::path& path);
ExperimentConfig parse_experiment(const std::string& json_text);

/// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace knnrobust::cli

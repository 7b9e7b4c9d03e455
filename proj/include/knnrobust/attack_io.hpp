#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "knnrobust/attack.hpp"

// One JSON object per line. Records carry no timing fields, so repeated runs
// with the same seed produce byte-identical files.

namespace knnrobust::attack {

/// {"type":"step","k":..,"point":..,"episode":..,"step":..,"fp_fraction":..,
///  "reward":..,"value":..,"next_value":..,"advantage":..,"utility":..,
///  "actor_loss":..,"critic_loss":..,"total_loss":..,"mu_distance":..,
///  "mean_variance":..,"terminal":..}
std::string step_record(std::size_t k, std::size_t point, std::size_t episode,
                        const EpisodeStep& step);

/// "point" lines per outcome, "summary" lines per k, "min_k" lines per point.
void write_report(const RobustnessReport& report, std::ostream& out);

/// Inverse of write_report; throws FormatError on malformed lines.
RobustnessReport read_report(std::istream& in);

}  // namespace knnrobust::attack

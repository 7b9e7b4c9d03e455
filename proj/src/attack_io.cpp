#include "knnrobust/attack_io.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "knnrobust/error.hpp"

namespace knnrobust::attack {

using nlohmann::json;

std::string step_record(std::size_t k, std::size_t point, std::size_t episode,
                        const EpisodeStep& step) {
  // ordered_json keeps the documented field order on disk.
  nlohmann::ordered_json j;
  j["type"] = "step";
  j["k"] = k;
  j["point"] = point;
  j["episode"] = episode;
  j["step"] = step.index;
  j["fp_fraction"] = step.fp_fraction;
  j["reward"] = step.reward;
  j["value"] = step.value;
  j["next_value"] = step.next_value;
  j["advantage"] = step.advantage;
  j["utility"] = step.utility;
  j["actor_loss"] = step.losses.actor;
  j["critic_loss"] = step.losses.critic;
  j["total_loss"] = step.losses.total;
  j["mu_distance"] = step.mu_distance;
  j["mean_variance"] = step.mean_variance;
  j["terminal"] = step.terminal;
  return j.dump();
}

void write_report(const RobustnessReport& report, std::ostream& out) {
  for (const auto& o : report.outcomes) {
    nlohmann::ordered_json j;
    j["type"] = "point";
    j["subject"] = report.subject;
    j["k"] = o.k;
    j["point"] = o.point;
    j["final_fp_fraction"] = o.final_fp_fraction;
    j["final_fp_count"] = o.final_fp_count;
    j["mu_distance"] = o.mu_distance;
    j["mean_variance"] = o.mean_variance;
    j["steps"] = o.steps;
    j["fully_adversarial"] = o.fully_adversarial;
    out << j.dump() << '\n';
  }
  for (const auto& s : report.summaries) {
    nlohmann::ordered_json j;
    j["type"] = "summary";
    j["subject"] = report.subject;
    j["k"] = s.k;
    j["mean_fp_count"] = s.mean_fp_count;
    j["mean_fp_fraction"] = s.mean_fp_fraction;
    j["mean_mu_distance"] = s.mean_mu_distance;
    j["mean_variance"] = s.mean_variance;
    j["adversarial_fraction"] = s.adversarial_fraction;
    out << j.dump() << '\n';
  }
  for (std::size_t p = 0; p < report.min_k_full.size(); ++p) {
    nlohmann::ordered_json j;
    j["type"] = "min_k";
    j["subject"] = report.subject;
    j["point"] = p;
    j["min_k"] = report.min_k_full[p] ? json(*report.min_k_full[p]) : json(nullptr);
    out << j.dump() << '\n';
  }
}

RobustnessReport read_report(std::istream& in) {
  RobustnessReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      report.subject = j.at("subject").get<std::string>();
      if (type == "point") {
        PointOutcome o;
        o.k = j.at("k").get<std::size_t>();
        o.point = j.at("point").get<std::size_t>();
        o.final_fp_fraction = j.at("final_fp_fraction").get<double>();
        o.final_fp_count = j.at("final_fp_count").get<double>();
        o.mu_distance = j.at("mu_distance").get<double>();
        o.mean_variance = j.at("mean_variance").get<double>();
        o.steps = j.at("steps").get<std::size_t>();
        o.fully_adversarial = j.at("fully_adversarial").get<bool>();
        report.outcomes.push_back(o);
      } else if (type == "summary") {
        KSummary s;
        s.k = j.at("k").get<std::size_t>();
        s.mean_fp_count = j.at("mean_fp_count").get<double>();
        s.mean_fp_fraction = j.at("mean_fp_fraction").get<double>();
        s.mean_mu_distance = j.at("mean_mu_distance").get<double>();
        s.mean_variance = j.at("mean_variance").get<double>();
        s.adversarial_fraction = j.at("adversarial_fraction").get<double>();
        report.summaries.push_back(s);
      } else if (type == "min_k") {
        const auto p = j.at("point").get<std::size_t>();
        if (report.min_k_full.size() <= p) report.min_k_full.resize(p + 1);
        const auto& v = j.at("min_k");
        if (!v.is_null()) report.min_k_full[p] = v.get<std::size_t>();
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("report line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("report line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (report.summaries.empty()) throw FormatError("report has no summary records");
  return report;
}

}  // namespace knnrobust::attack

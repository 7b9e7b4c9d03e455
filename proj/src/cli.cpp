#include "knnrobust/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "knnrobust/analysis.hpp"
#include "knnrobust/attack_io.hpp"
#include "knnrobust/bench.hpp"
#include "knnrobust/error.hpp"
#include "knnrobust/knn_core.hpp"
#include "knnrobust/random.hpp"
#include "knnrobust/vecdata.hpp"

namespace knnrobust::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams split off the root seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kAgentStream = 3;

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (unknown or missing flags)\n"
    "  3  missing, unreadable or unwritable file\n"
    "  4  malformed input file or config\n"
    "  5  invalid argument or failed invariant\n"
    "  6  training diverged (non-finite loss)\n";

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("--k expects a comma-separated list of positive integers");
    ks.push_back(std::stoull(item));
    if (ks.back() == 0) throw InvalidArgument("k must be positive");
  }
  if (ks.empty()) throw InvalidArgument("--k expects at least one value");
  return ks;
}

VectorSet load_any(const fs::path& path) { return load_vectors(path, format_for_path(path)); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

attack::AgentConfig parse_agent(const json& j) {
  attack::AgentConfig a;
  read_opt(j, "gamma", a.gamma);
  read_opt(j, "reward_constant", a.reward_constant);
  read_opt(j, "jitter_size", a.jitter_size);
  read_opt(j, "max_steps", a.max_steps);
  read_opt(j, "episodes", a.episodes);
  read_opt(j, "sigma_init", a.sigma_init);
  read_opt(j, "epsilon", a.epsilon);
  read_opt(j, "explore_start", a.explore_start);
  read_opt(j, "explore_end", a.explore_end);
  read_opt(j, "logvar_limit", a.logvar_limit);
  read_opt(j, "hidden", a.hidden);
  read_opt(j, "lr", a.adam.lr);
  read_opt(j, "beta1", a.adam.beta1);
  read_opt(j, "beta2", a.adam.beta2);
  read_opt(j, "adam_epsilon", a.adam.epsilon);
  read_opt(j, "zero_init_actor_output", a.zero_init_actor_output);
  read_opt(j, "per_point_agents", a.per_point_agents);
  if (j.contains("loss_mode")) a.loss_mode = attack::parse_loss_mode(j.at("loss_mode").get<std::string>());
  return a;
}

// ---------------------------------------------------------------- commands

int cmd_synth(std::size_t n, std::size_t d, std::size_t clusters, double spread, std::uint64_t seed,
              std::size_t queries, const fs::path& out, const std::string& queries_out,
              std::ostream& log) {
  if (queries > 0 && queries_out.empty())
    throw InvalidArgument("--queries needs --queries-out");
  const VectorSet all = make_synthetic(n + queries, d, clusters, spread, derive_seed(seed, kDataStream));
  ensure_parent(out);
  if (queries == 0) {
    save_vectors(all, out, format_for_path(out));
    log << "wrote " << all.size() << " x " << all.dim() << " to " << out.string() << '\n';
    return kOk;
  }
  auto [base, qs] = split_queries(all, queries, derive_seed(seed, kSplitStream));
  save_vectors(base, out, format_for_path(out));
  ensure_parent(queries_out);
  save_vectors(qs, queries_out, format_for_path(queries_out));
  log << "wrote " << base.size() << " base and " << qs.size() << " query points\n";
  return kOk;
}

int cmd_truth(const fs::path& base_path, const fs::path& queries_path, std::size_t k,
              const fs::path& out, std::size_t threads, std::ostream& log) {
  const VectorSet base = load_any(base_path);
  const VectorSet queries = load_any(queries_path);
  const GroundTruth gt = exact_ground_truth(base, queries, k, threads);
  ensure_parent(out);
  save_ground_truth(gt, out);
  log << "wrote top-" << k << " ground truth for " << gt.n << " queries to " << out.string() << '\n';
  return kOk;
}

int cmd_bench(const fs::path& base_path, const fs::path& queries_path, const std::string& truth_path,
              std::vector<std::string> spec_texts, const std::string& config_path, std::size_t k,
              double epsilon, const fs::path& out, std::ostream& log) {
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open " + config_path);
    try {
      const json j = json::parse(in);
      for (const auto& s : j.at("specs")) spec_texts.push_back(s.get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError(config_path + ": " + e.what());
    }
  }
  if (spec_texts.empty()) throw InvalidArgument("bench needs at least one --spec or a --config");
  std::vector<IndexSpec> specs;
  for (const auto& t : spec_texts) specs.push_back(IndexSpec::parse(t));

  const VectorSet base = load_any(base_path);
  const VectorSet queries = load_any(queries_path);
  GroundTruth truth;
  if (truth_path.empty()) {
    truth = exact_ground_truth(base, queries, k);
  } else {
    truth = load_ground_truth(truth_path);
    if (truth.n != queries.size() || truth.k < k)
      throw InvalidArgument("ground truth does not match the queries or k");
    if (truth.k > k) {
      // Keep the first k columns.
      GroundTruth cut{truth.n, k, {}, {}};
      for (std::size_t i = 0; i < truth.n; ++i) {
        auto ids = truth.ids_row(i);
        auto ds = truth.dists_row(i);
        cut.ids.insert(cut.ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
        cut.dists.insert(cut.dists.end(), ds.begin(), ds.begin() + static_cast<std::ptrdiff_t>(k));
      }
      truth = std::move(cut);
    }
  }
  const auto runs = bench::run_bench(base, queries, truth, specs, k, epsilon);
  for (const auto& r : runs)
    if (!r.ok()) log << "spec " << r.spec.label() << " failed: " << *r.error << '\n';
  const auto rows = bench::pareto_table(runs);
  ensure_parent(out);
  bench::write_pareto_csv(rows, out);
  for (const auto& r : rows)
    log << r.label << "  recall=" << r.mean_recall << "  qps=" << r.qps
        << "  build_s=" << r.build_seconds << (r.pareto ? "  [pareto]" : "") << '\n';
  return kOk;
}

int cmd_attack(ExperimentConfig cfg, std::size_t threads, bool verbose, std::ostream& log) {
  cfg.agent.threads = threads;
  cfg.validate();
  const std::uint64_t seed = *cfg.seed;

  VectorSet base, queries;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    const VectorSet all =
        make_synthetic(s.n + s.queries, s.d, s.clusters, s.spread, derive_seed(seed, kDataStream));
    std::tie(base, queries) = split_queries(all, s.queries, derive_seed(seed, kSplitStream));
  } else {
    base = load_any(*cfg.base);
    queries = load_any(*cfg.queries);
  }
  if (base.dim() != queries.dim()) throw InvalidArgument("base and query dimensions differ");

  const auto subject = build(IndexSpec::parse(cfg.subject), base);
  std::vector<std::size_t> rows;
  if (cfg.fp_only) {
    const std::size_t k0 = cfg.k_values.front();
    const GroundTruth gt = exact_ground_truth(base, queries, k0, threads);
    for (std::size_t i = 0; i < queries.size() && rows.size() < cfg.attack_points; ++i)
      if (label_fp(subject->query(queries.row(i), k0), gt.dists_row(i), cfg.agent.epsilon).is_fp)
        rows.push_back(i);
    if (rows.empty()) throw InvalidArgument("fp_only: the subject has no false-positive queries");
  } else {
    for (std::size_t i = 0; i < std::min(cfg.attack_points, queries.size()); ++i) rows.push_back(i);
  }
  const VectorSet points = queries.select(rows);
  // Report and trace index attacked points by position; log the query rows.
  if (cfg.fp_only) {
    log << "attacking query rows:";
    for (auto r : rows) log << ' ' << r;
    log << '\n';
  }

  fs::create_directories(cfg.out);
  const fs::path trace_path = cfg.out / "trace.jsonl";
  const fs::path report_path = cfg.out / "report.jsonl";
  std::ofstream trace(trace_path, std::ios::trunc);
  if (!trace) throw IoError("cannot open " + trace_path.string() + " for writing");

  attack::AgentConfig agent = cfg.agent;
  agent.seed = derive_seed(seed, kAgentStream);
  std::size_t episode = 0;
  std::size_t last_key = SIZE_MAX;
  auto observer = [&](std::size_t k, std::size_t p, const attack::EpisodeTrace& tr) {
    const std::size_t key = k * 1000003 + p;
    episode = key == last_key ? episode + 1 : 0;
    last_key = key;
    for (const auto& step : tr.steps) {
      trace << attack::step_record(k, p, episode, step) << '\n';
      if (verbose)
        log << "k=" << k << " point=" << rows[p] << " step=" << step.index
            << " fp=" << step.fp_fraction << " reward=" << step.reward << '\n';
    }
    log << "k=" << k << " point=" << rows[p] << " steps=" << tr.steps.size()
        << " final_fp=" << tr.steps.back().fp_fraction
        << (tr.fully_adversarial ? " (fully adversarial)" : "") << '\n';
  };
  attack::RobustnessReport report =
      attack::robustness_report(points, base, *subject, agent, cfg.k_values, observer);
  if (!trace) throw IoError("write failed for " + trace_path.string());

  std::ofstream rep(report_path, std::ios::trunc);
  if (!rep) throw IoError("cannot open " + report_path.string() + " for writing");
  attack::write_report(report, rep);
  if (!rep) throw IoError("write failed for " + report_path.string());
  log << "wrote " << trace_path.string() << " and " << report_path.string() << '\n';
  return kOk;
}

int cmd_pca(const fs::path& base_path, const fs::path& queries_path, const std::string& subject_text,
            std::size_t k, std::size_t components, double epsilon, const fs::path& out,
            const std::string& gnuplot, std::size_t threads, std::ostream& log) {
  const VectorSet base = load_any(base_path);
  const VectorSet queries = load_any(queries_path);
  const auto subject = build(IndexSpec::parse(subject_text), base);
  const GroundTruth gt = exact_ground_truth(base, queries, k, threads);
  std::vector<FpLabel> labels;
  for (std::size_t i = 0; i < queries.size(); ++i)
    labels.push_back(label_fp(subject->query(queries.row(i), k), gt.dists_row(i), epsilon, i));
  const auto model = analysis::fit_pca(queries, components);
  const auto table = analysis::tp_fp_scatter(queries, labels, model);
  ensure_parent(out);
  analysis::write_scatter_csv(table, out);
  if (!gnuplot.empty()) analysis::write_scatter_gnuplot(out, gnuplot);
  const auto fps = std::count_if(labels.begin(), labels.end(), [](const FpLabel& l) { return l.is_fp; });
  log << "queries=" << queries.size() << " fp=" << fps << " separability=" << table.separability
      << " component=pc" << table.best_component + 1 << (table.single_class ? " (single class)" : "")
      << '\n';
  log << "explained_variance=";
  for (std::size_t c = 0; c < model.count; ++c) log << (c ? "," : "") << model.explained_variance[c];
  log << '\n';
  return kOk;
}

int cmd_report(const fs::path& in_path, const std::string& out, std::ostream& log) {
  const fs::path path = fs::is_directory(in_path) ? in_path / "report.jsonl" : in_path;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const auto report = attack::read_report(in);
  std::ostringstream csv;
  csv.precision(10);
  csv << "subject,k,mean_fp_count,mean_fp_fraction,mean_mu_distance,mean_variance,adversarial_fraction\n";
  for (const auto& s : report.summaries)
    csv << '"' << report.subject << "\"," << s.k << ',' << s.mean_fp_count << ',' << s.mean_fp_fraction
        << ',' << s.mean_mu_distance << ',' << s.mean_variance << ',' << s.adversarial_fraction << '\n';
  std::size_t never = 0;
  for (const auto& m : report.min_k_full) never += m ? 0 : 1;
  if (out.empty()) {
    log << csv.str();
  } else {
    ensure_parent(out);
    std::ofstream o(out, std::ios::trunc);
    if (!o) throw IoError("cannot open " + out + " for writing");
    o << csv.str();
    log << csv.str();
  }
  log << "points never fully adversarial: " << never << " of " << report.min_k_full.size() << '\n';
  return kOk;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!seed) throw InvalidArgument("experiment: a seed is required (config \"seed\" or --seed)");
  if (synthetic && (base || queries))
    throw InvalidArgument("experiment: give either synthetic data or base/queries files, not both");
  if (!synthetic && (!base || !queries))
    throw InvalidArgument("experiment: base and queries files (or a synthetic block) are required");
  if (base) require_file(*base);
  if (queries) require_file(*queries);
  IndexSpec::parse(subject).validate();
  if (k_values.empty()) throw InvalidArgument("experiment: k_values is empty");
  for (auto k : k_values)
    if (k == 0) throw InvalidArgument("experiment: k values must be positive");
  if (attack_points == 0) throw InvalidArgument("experiment: attack_points must be >= 1");
  agent.validate();
}

ExperimentConfig parse_experiment(const std::string& json_text) {
  ExperimentConfig cfg;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("base")) cfg.base = j.at("base").get<std::string>();
    if (j.contains("queries")) cfg.queries = j.at("queries").get<std::string>();
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      SyntheticData d;
      read_opt(s, "n", d.n);
      read_opt(s, "d", d.d);
      read_opt(s, "clusters", d.clusters);
      read_opt(s, "spread", d.spread);
      read_opt(s, "queries", d.queries);
      cfg.synthetic = d;
    }
    read_opt(j, "subject", cfg.subject);
    read_opt(j, "k_values", cfg.k_values);
    read_opt(j, "attack_points", cfg.attack_points);
    read_opt(j, "fp_only", cfg.fp_only);
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("agent")) cfg.agent = parse_agent(j.at("agent"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_experiment(ss.str());
  // Relative data paths resolve against the config file's directory.
  const fs::path dir = path.parent_path();
  if (cfg.base && cfg.base->is_relative() && !fs::exists(*cfg.base)) cfg.base = dir / *cfg.base;
  if (cfg.queries && cfg.queries->is_relative() && !fs::exists(*cfg.queries))
    cfg.queries = dir / *cfg.queries;
  return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"knnrobust: robustness evaluation for k-nearest-neighbor search"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out_path, config_path;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a Gaussian-mixture dataset");
  std::size_t n = 0, d = 0, clusters = 1, queries_count = 0;
  double spread = 1.0;
  std::string queries_out;
  synth->add_option("--n", n, "Number of base points")->required();
  synth->add_option("--d", d, "Dimensionality")->required();
  synth->add_option("--clusters", clusters, "Mixture components")->capture_default_str();
  synth->add_option("--spread", spread, "Per-cluster standard deviation")->capture_default_str();
  synth->add_option("--seed", seed, "Root seed")->required();
  synth->add_option("--queries", queries_count, "Extra points split off as queries");
  synth->add_option("--queries-out", queries_out, "Query file (with --queries)");
  synth->add_option("--out", out_path, "Output vector file (.vds binary or .csv)")->required();
  synth->add_option("--threads", threads, "Worker threads (unused)");

  // truth
  auto* truth = app.add_subcommand("truth", "Exact top-k ground truth");
  std::string base_path, queries_path, truth_path;
  std::size_t k = 10;
  truth->add_option("--base", base_path, "Base vectors")->required();
  truth->add_option("--queries", queries_path, "Query vectors")->required();
  truth->add_option("--k", k, "Neighbors per query")->capture_default_str();
  truth->add_option("--out", out_path, "Output ground-truth file (.gtk)")->required();
  truth->add_option("--threads", threads, "Worker threads (0 = all cores)");
  truth->add_option("--seed", seed, "Root seed (unused)");

  // bench
  auto* benchc = app.add_subcommand("bench", "Recall / QPS / build-time benchmark");
  std::vector<std::string> specs;
  double epsilon = 0.0;
  benchc->add_option("--base", base_path, "Base vectors")->required();
  benchc->add_option("--queries", queries_path, "Query vectors")->required();
  benchc->add_option("--truth", truth_path, "Ground-truth file (computed when absent)");
  benchc->add_option("--spec", specs, "Index spec, repeatable, e.g. kdforest:num_trees=4,max_checks=32");
  benchc->add_option("--config", config_path, "JSON file with a \"specs\" array");
  benchc->add_option("--k", k, "Neighbors per query")->capture_default_str();
  benchc->add_option("--epsilon", epsilon, "Relaxed-recall slack")->capture_default_str();
  benchc->add_option("--out", out_path, "Output CSV")->required();
  benchc->add_option("--threads", threads, "Ignored: queries are timed single-threaded");
  benchc->add_option("--seed", seed, "Root seed (unused)");

  // attack
  auto* attackc = app.add_subcommand("attack", "Train the actor-critic attacker and report robustness");
  std::string subject, k_list, loss_mode;
  std::size_t jitter_size = 0, max_steps = 0, attack_points = 0;
  bool verbose = false;
  attackc->add_option("--config", config_path, "Experiment JSON")->required();
  attackc->add_option("--seed", seed, "Root seed (overrides config)");
  attackc->add_option("--subject", subject, "Index spec under attack");
  attackc->add_option("--k", k_list, "Comma-separated k values");
  attackc->add_option("--jitter-size", jitter_size, "Jitter points per step (default 1000)");
  attackc->add_option("--max-steps", max_steps, "Steps per episode (default 50)");
  attackc->add_option("--loss-mode", loss_mode, "paper | standard");
  attackc->add_option("--attack-points", attack_points, "Number of attacked queries");
  attackc->add_option("--out", out_path, "Output directory (overrides config)");
  attackc->add_option("--threads", threads, "Worker threads for jitter evaluation (0 = all cores)");
  attackc->add_flag("--verbose", verbose, "Log every step");

  // pca
  auto* pca = app.add_subcommand("pca", "PCA scatter of TP/FP queries with a separability score");
  std::size_t components = 2;
  std::string gnuplot;
  pca->add_option("--base", base_path, "Base vectors")->required();
  pca->add_option("--queries", queries_path, "Query vectors")->required();
  pca->add_option("--subject", subject, "Index spec whose answers are labeled")->required();
  pca->add_option("--k", k, "Neighbors per query")->capture_default_str();
  pca->add_option("--components", components, "Principal components")->capture_default_str();
  pca->add_option("--epsilon", epsilon, "Relaxed-recall slack")->capture_default_str();
  pca->add_option("--out", out_path, "Output scatter CSV")->required();
  pca->add_option("--gnuplot", gnuplot, "Also write a gnuplot script here");
  pca->add_option("--threads", threads, "Worker threads (0 = all cores)");
  pca->add_option("--seed", seed, "Root seed (unused)");

  // report
  auto* reportc = app.add_subcommand("report", "Summarize an attack report");
  std::string in_path;
  reportc->add_option("--in", in_path, "Attack output directory or report.jsonl")->required();
  reportc->add_option("--out", out_path, "Output CSV (stdout only when absent)");
  reportc->add_option("--seed", seed, "Root seed (unused)");
  reportc->add_option("--threads", threads, "Unused");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    // Top-level help lists every subcommand's flags.
    if (app.get_subcommands().empty()) {
      out << app.help("", CLI::AppFormatMode::All);
      return kOk;
    }
    const int code = app.exit(CLI::CallForHelp(), out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(n, d, clusters, spread, seed, queries_count, out_path, queries_out, out);
    if (truth->parsed()) return cmd_truth(base_path, queries_path, k, out_path, threads, out);
    if (benchc->parsed())
      return cmd_bench(base_path, queries_path, truth_path, specs, config_path, k, epsilon, out_path, out);
    if (attackc->parsed()) {
      ExperimentConfig cfg = load_experiment(config_path);
      if (attackc->count("--seed")) cfg.seed = seed;
      if (!subject.empty()) cfg.subject = subject;
      if (!k_list.empty()) cfg.k_values = parse_k_list(k_list);
      if (jitter_size) cfg.agent.jitter_size = jitter_size;
      if (max_steps) cfg.agent.max_steps = max_steps;
      if (!loss_mode.empty()) cfg.agent.loss_mode = attack::parse_loss_mode(loss_mode);
      if (attack_points) cfg.attack_points = attack_points;
      if (!out_path.empty()) cfg.out = out_path;
      return cmd_attack(std::move(cfg), threads, verbose, err);
    }
    if (pca->parsed())
      return cmd_pca(base_path, queries_path, subject, k, components, epsilon, out_path, gnuplot, threads,
                     out);
    if (reportc->parsed()) return cmd_report(in_path, out_path, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kMalformed;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace knnrobust::cli

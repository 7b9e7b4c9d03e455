#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knnrobust/knn_core.hpp"
#include "knnrobust/nn.hpp"
#include "knnrobust/random.hpp"
#include "knnrobust/vecdata.hpp"

// Advantage actor-critic search for "jitter spaces": diagonal Gaussians around
// an attack point whose samples an approximate index answers incorrectly.

namespace knnrobust::attack {

/// N(mu, diag(sigma_diag)); sigma_diag holds variances.
struct JitterSpace {
  std::vector<double> mu;
  std::vector<double> sigma_diag;

  std::size_t dim() const { return mu.size(); }
  /// Throws InvalidArgument unless sizes agree, mu is finite and every
  /// variance is finite and > 0.
  void validate() const;
};

struct AttackState {
  std::vector<double> query;
  JitterSpace space;
};

/// Offsets added to mu and to log(sigma_diag).
struct Action {
  std::vector<double> offset_mu;
  std::vector<double> offset_logvar;
};

enum class LossMode { paper, standard };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

struct AgentConfig {
  double gamma = 0.99;
  double reward_constant = 100.0;
  std::size_t jitter_size = 1000;
  std::size_t max_steps = 50;
  std::size_t episodes = 1;
  std::size_t k = 10;
  double sigma_init = 1.0;  // initial variance on every coordinate
  LossMode loss_mode = LossMode::paper;
  std::uint64_t seed = 0;

  double epsilon = 0.0;          // relaxed-recall slack used for FP labels
  double explore_start = 0.1;    // action noise std at the first step
  double explore_end = 0.01;     // ... and at the last step (linear anneal)
  double logvar_limit = 30.0;    // |log variance| is clamped to this
  std::vector<std::size_t> hidden{128, 128};
  nn::AdamConfig adam{};
  bool zero_init_actor_output = true;
  bool per_point_agents = false;  // default: one agent shared across attack points
  std::size_t threads = 0;        // jitter evaluation workers, 0 = all cores

  void validate() const;
};

/// Lower clamp for the FP fraction inside logarithms: 1 / (10 * jitter_size).
double fp_floor(const AgentConfig& config);

struct Losses {
  double delta = 0;
  double actor = 0;
  double critic = 0;
  double total = 0;
};

struct EpisodeStep {
  std::size_t index = 0;
  AttackState state;   // before the action
  Action policy_mean;  // actor output
  Action action;       // policy_mean plus exploration noise; what was applied
  double explore_std = 0;
  double fp_fraction = 0;
  double reward = 0;
  double value = 0;       // V(s)
  double next_value = 0;  // V(s')
  double advantage = 0;   // reward + gamma * next_value - value
  double utility = 0;     // value + advantage
  Losses losses;
  double mu_distance = 0;    // |mu' - attack point| after the action
  double mean_variance = 0;  // mean of sigma_diag after the action
  bool terminal = false;     // every jitter was a false positive
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  JitterSpace final_space;
  bool fully_adversarial = false;
};

/// Actor (3d -> 2d) and critic (3d -> 1) with their optimizer state.
struct PolicyNets {
  nn::Mlp actor;
  nn::Mlp critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

  static PolicyNets create(std::size_t d, const AgentConfig& config, std::uint64_t seed);
};

/// `count` i.i.d. draws from the space, per-coordinate normal draws.
VectorSet sample_jitters(const JitterSpace& space, std::size_t count, std::uint64_t seed);

/// 100 * ln(max(fp_fraction, floor)) + reward_constant.
double compute_reward(double fp_fraction, const AgentConfig& config);

/// Actor input: concat(query, mu, log sigma_diag).
nn::Vector encode_state(const AttackState& state);

/// Policy mean plus N(0, explore_std^2) noise on every output. With
/// explore_std == 0 (or no rng) the mean is returned unchanged.
Action act(const nn::Mlp& actor, const AttackState& state, double explore_std = 0.0,
           Rng* rng = nullptr);

/// mu + offset_mu and exp(clamp(log sigma + offset_logvar, +-logvar_limit)).
JitterSpace apply_action(const JitterSpace& space, const Action& action, double logvar_limit);

/// Fraction of jitters whose subject answer is a false positive against the
/// exact top-k over `base`.
double evaluate_jitters(const VectorSet& jitters, const VectorSet& base, const Index& subject,
                        std::size_t k, double epsilon, std::size_t threads = 0);

/// delta = r + gamma V(s') - V(s); critic = delta^2; actor = 1 - ln(max(fp,
/// floor)) * delta in paper mode or -log pi(action | state) * delta in standard
/// mode; total = actor + critic.
Losses a2c_losses(const EpisodeStep& step, const AgentConfig& config);

/// Gaussian log-density of the applied action under the exploration policy.
double policy_log_prob(const EpisodeStep& step);

/// One training episode against `subject`. Starts from N(attack_point,
/// sigma_init * I) and stops after max_steps or the first step in which every
/// jitter is a false positive. Both networks are updated after every step.
/// Throws DivergenceError naming the step when a loss or gradient goes
/// non-finite.
EpisodeTrace run_episode(std::span<const float> attack_point, const VectorSet& base,
                         const Index& subject, PolicyNets& nets, const AgentConfig& config,
                         std::uint64_t episode_seed);

struct PointOutcome {
  std::size_t point = 0;
  std::size_t k = 0;
  double final_fp_fraction = 0;
  double final_fp_count = 0;
  double mu_distance = 0;
  double mean_variance = 0;
  std::size_t steps = 0;
  bool fully_adversarial = false;
};

struct KSummary {
  std::size_t k = 0;
  double mean_fp_count = 0;     // per jitter cloud, final step
  double mean_fp_fraction = 0;
  double mean_mu_distance = 0;
  double mean_variance = 0;
  double adversarial_fraction = 0;  // points driven to fp_fraction == 1
};

struct RobustnessReport {
  std::string subject;
  std::vector<KSummary> summaries;      // one per k, in k_values order
  std::vector<PointOutcome> outcomes;   // k-major, then point order
  /// Smallest k (from k_values) at which each point became fully
  /// adversarial; nullopt if it never did.
  std::vector<std::optional<std::size_t>> min_k_full;
};

/// Called after every episode with (k, point index, trace).
using EpisodeObserver = std::function<void(std::size_t, std::size_t, const EpisodeTrace&)>;

/// Trains and evaluates per k in `k_values`: a fresh agent for each k, shared
/// across attack points in order unless config.per_point_agents is set.
RobustnessReport robustness_report(const VectorSet& attack_points, const VectorSet& base,
                                   const Index& subject, const AgentConfig& config,
                                   std::span<const std::size_t> k_values,
                                   const EpisodeObserver& observer = {});

}  // namespace knnrobust::attack

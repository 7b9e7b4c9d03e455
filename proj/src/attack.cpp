#include "knnrobust/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "knnrobust/error.hpp"
#include "knnrobust/parallel.hpp"

namespace knnrobust::attack {

namespace {

// Seed streams split off an episode seed.
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kJitterStream = 2;

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

double mean_of(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double distance(std::span<const double> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - static_cast<double>(b[i]);
    s += x * x;
  }
  return std::sqrt(s);
}

Action split_output(const nn::Vector& out, std::size_t d) {
  Action a;
  a.offset_mu.assign(out.data(), out.data() + d);
  a.offset_logvar.assign(out.data() + d, out.data() + 2 * d);
  return a;
}

double explore_std_at(const AgentConfig& c, std::size_t step) {
  if (c.max_steps <= 1) return c.explore_start;
  const double frac = static_cast<double>(step) / static_cast<double>(c.max_steps - 1);
  return c.explore_start + (c.explore_end - c.explore_start) * frac;
}

}  // namespace

void JitterSpace::validate() const {
  if (mu.empty() || mu.size() != sigma_diag.size())
    throw InvalidArgument("jitter space: mu and sigma_diag sizes differ");
  if (!all_finite(mu)) throw InvalidArgument("jitter space: non-finite mean");
  for (double s : sigma_diag)
    if (!(s > 0) || !std::isfinite(s))
      throw InvalidArgument("jitter space: variances must be finite and positive");
}

std::string_view to_string(LossMode mode) {
  return mode == LossMode::paper ? "paper" : "standard";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "paper") return LossMode::paper;
  if (text == "standard") return LossMode::standard;
  throw InvalidArgument("unknown loss mode '" + std::string(text) + "'");
}

void AgentConfig::validate() const {
  if (!(gamma >= 0 && gamma < 1)) throw InvalidArgument("agent: gamma must be in [0, 1)");
  if (!std::isfinite(reward_constant)) throw InvalidArgument("agent: reward_constant not finite");
  if (jitter_size == 0) throw InvalidArgument("agent: jitter_size must be >= 1");
  if (max_steps == 0) throw InvalidArgument("agent: max_steps must be >= 1");
  if (episodes == 0) throw InvalidArgument("agent: episodes must be >= 1");
  if (k == 0) throw InvalidArgument("agent: k must be >= 1");
  if (!(sigma_init > 0) || !std::isfinite(sigma_init))
    throw InvalidArgument("agent: sigma_init must be positive");
  if (!(epsilon >= 0)) throw InvalidArgument("agent: epsilon must be >= 0");
  if (!(explore_start >= 0) || !(explore_end >= 0))
    throw InvalidArgument("agent: exploration noise must be >= 0");
  if (loss_mode == LossMode::standard && (explore_start <= 0 || explore_end <= 0))
    throw InvalidArgument("agent: standard loss mode needs positive exploration noise");
  if (!(logvar_limit > 0)) throw InvalidArgument("agent: logvar_limit must be positive");
  if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
      !(adam.epsilon > 0))
    throw InvalidArgument("agent: invalid Adam hyperparameters");
}

double fp_floor(const AgentConfig& config) {
  return 1.0 / (10.0 * static_cast<double>(config.jitter_size));
}

PolicyNets PolicyNets::create(std::size_t d, const AgentConfig& config, std::uint64_t seed) {
  PolicyNets nets;
  nets.actor = nn::Mlp::glorot(3 * d, config.hidden, 2 * d, nn::Activation::relu,
                               nn::Activation::linear, derive_seed(seed, 0));
  if (config.zero_init_actor_output) {
    auto& last = nets.actor.mutable_layers().back();
    last.weights.setZero();
    last.biases.setZero();
  }
  nets.critic = nn::Mlp::glorot(3 * d, config.hidden, 1, nn::Activation::relu,
                                nn::Activation::linear, derive_seed(seed, 1));
  nets.actor_opt = nn::AdamState(nets.actor, config.adam);
  nets.critic_opt = nn::AdamState(nets.critic, config.adam);
  return nets;
}

VectorSet sample_jitters(const JitterSpace& space, std::size_t count, std::uint64_t seed) {
  space.validate();
  if (count == 0) throw InvalidArgument("sample_jitters: count must be >= 1");
  const std::size_t d = space.dim();
  std::vector<double> stddev(d);
  for (std::size_t j = 0; j < d; ++j) stddev[j] = std::sqrt(space.sigma_diag[j]);
  Rng rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<float> data(count * d);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < d; ++j)
      data[i * d + j] = static_cast<float>(space.mu[j] + stddev[j] * unit(rng));
  try {
    return VectorSet(count, d, std::move(data));
  } catch (const FormatError&) {
    throw DivergenceError("sample_jitters: jitter space overflows float32");
  }
}

double compute_reward(double fp_fraction, const AgentConfig& config) {
  return 100.0 * std::log(std::max(fp_fraction, fp_floor(config))) + config.reward_constant;
}

nn::Vector encode_state(const AttackState& state) {
  const std::size_t d = state.query.size();
  if (state.space.dim() != d || state.space.sigma_diag.size() != d)
    throw InvalidArgument("attack state: dimensions disagree");
  nn::Vector x(static_cast<Eigen::Index>(3 * d));
  for (std::size_t j = 0; j < d; ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    const auto n = static_cast<Eigen::Index>(d);
    x(i) = state.query[j];
    x(n + i) = state.space.mu[j];
    x(2 * n + i) = std::log(state.space.sigma_diag[j]);
  }
  return x;
}

Action act(const nn::Mlp& actor, const AttackState& state, double explore_std, Rng* rng) {
  const std::size_t d = state.query.size();
  if (actor.in_dim() != 3 * d || actor.out_dim() != 2 * d)
    throw InvalidArgument("act: actor is not dimensioned for d = " + std::to_string(d));
  nn::Vector out = actor.forward(encode_state(state));
  if (explore_std > 0 && rng != nullptr) {
    std::normal_distribution<double> noise(0.0, explore_std);
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += noise(*rng);
  }
  return split_output(out, d);
}

JitterSpace apply_action(const JitterSpace& space, const Action& action, double logvar_limit) {
  const std::size_t d = space.dim();
  if (action.offset_mu.size() != d || action.offset_logvar.size() != d)
    throw InvalidArgument("apply_action: action dimension mismatch");
  JitterSpace next = space;
  for (std::size_t j = 0; j < d; ++j) {
    next.mu[j] += action.offset_mu[j];
    const double logvar =
        std::clamp(std::log(space.sigma_diag[j]) + action.offset_logvar[j], -logvar_limit, logvar_limit);
    next.sigma_diag[j] = std::exp(logvar);
  }
  if (!all_finite(next.mu) || !all_finite(next.sigma_diag))
    throw DivergenceError("apply_action: jitter space became non-finite");
  return next;
}

double evaluate_jitters(const VectorSet& jitters, const VectorSet& base, const Index& subject,
                        std::size_t k, double epsilon, std::size_t threads) {
  if (jitters.dim() != base.dim() || subject.dim() != base.dim())
    throw InvalidArgument("evaluate_jitters: dimensions disagree");
  const GroundTruth truth = exact_ground_truth(base, jitters, k, threads);
  std::vector<unsigned char> fp(jitters.size(), 0);
  parallel_for(jitters.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      fp[i] = label_fp(subject.query(jitters.row(i), k), truth.dists_row(i), epsilon, i).is_fp;
  });
  std::size_t count = 0;
  for (auto f : fp) count += f;
  return static_cast<double>(count) / static_cast<double>(jitters.size());
}

double policy_log_prob(const EpisodeStep& step) {
  const double sigma = step.explore_std;
  if (!(sigma > 0)) throw InvalidArgument("policy_log_prob: exploration std must be positive");
  double lp = 0;
  auto add = [&](std::span<const double> a, std::span<const double> m) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double z = (a[i] - m[i]) / sigma;
      lp += -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
  };
  add(step.action.offset_mu, step.policy_mean.offset_mu);
  add(step.action.offset_logvar, step.policy_mean.offset_logvar);
  return lp;
}

Losses a2c_losses(const EpisodeStep& step, const AgentConfig& config) {
  if (!std::isfinite(step.reward) || !std::isfinite(step.value) || !std::isfinite(step.next_value) ||
      !(step.fp_fraction >= 0 && step.fp_fraction <= 1))
    throw DivergenceError("a2c_losses: non-finite or out-of-range inputs");
  Losses l;
  l.delta = step.reward + config.gamma * step.next_value - step.value;
  l.critic = l.delta * l.delta;
  if (config.loss_mode == LossMode::paper)
    l.actor = 1.0 - std::log(std::max(step.fp_fraction, fp_floor(config))) * l.delta;
  else
    l.actor = -policy_log_prob(step) * l.delta;
  l.total = l.actor + l.critic;
  if (!std::isfinite(l.total)) throw DivergenceError("a2c_losses: non-finite loss");
  return l;
}

EpisodeTrace run_episode(std::span<const float> attack_point, const VectorSet& base,
                         const Index& subject, PolicyNets& nets, const AgentConfig& config,
                         std::uint64_t episode_seed) {
  config.validate();
  const std::size_t d = attack_point.size();
  if (d != base.dim() || subject.dim() != d)
    throw InvalidArgument("run_episode: attack point dimension mismatch");
  if (nets.actor.in_dim() != 3 * d || nets.actor.out_dim() != 2 * d ||
      nets.critic.in_dim() != 3 * d || nets.critic.out_dim() != 1)
    throw InvalidArgument("run_episode: networks are not dimensioned for d = " + std::to_string(d));
  if (config.k > base.size()) throw InvalidArgument("run_episode: k exceeds base size");

  Rng noise_rng(derive_seed(episode_seed, kNoiseStream));
  AttackState state;
  state.query.assign(attack_point.begin(), attack_point.end());
  state.space.mu = state.query;
  state.space.sigma_diag.assign(d, config.sigma_init);

  const auto nd = static_cast<Eigen::Index>(d);
  EpisodeTrace trace;
  for (std::size_t t = 0; t < config.max_steps; ++t) {
    try {
      EpisodeStep step;
      step.index = t;
      step.state = state;
      step.explore_std = explore_std_at(config, t);

      const nn::Vector s = encode_state(state);
      const nn::ForwardTrace actor_fw = nets.actor.forward_trace(s);
      const nn::Vector& mean = actor_fw.output();
      nn::Vector applied = mean;
      if (step.explore_std > 0) {
        std::normal_distribution<double> noise(0.0, step.explore_std);
        for (Eigen::Index i = 0; i < applied.size(); ++i) applied(i) += noise(noise_rng);
      }
      step.policy_mean = split_output(mean, d);
      step.action = split_output(applied, d);

      AttackState next{state.query, apply_action(state.space, step.action, config.logvar_limit)};
      const VectorSet jitters = sample_jitters(
          next.space, config.jitter_size, derive_seed(derive_seed(episode_seed, kJitterStream), t));
      step.fp_fraction =
          evaluate_jitters(jitters, base, subject, config.k, config.epsilon, config.threads);
      step.reward = compute_reward(step.fp_fraction, config);

      const nn::Vector s_next = encode_state(next);
      const nn::ForwardTrace critic_s = nets.critic.forward_trace(s);
      const nn::ForwardTrace critic_next = nets.critic.forward_trace(s_next);
      step.value = critic_s.output()(0);
      step.next_value = critic_next.output()(0);
      step.losses = a2c_losses(step, config);
      step.advantage = step.losses.delta;
      step.utility = step.value + step.advantage;

      nn::Gradients critic_grads;
      nn::Vector actor_upstream(2 * nd);
      if (config.loss_mode == LossMode::paper) {
        // Full derivative of total = 1 - L * delta + delta^2, with L the
        // clamped log FP fraction. delta depends on the critic at s and s',
        // and s' depends on the actor output.
        const double log_fp = std::log(std::max(step.fp_fraction, fp_floor(config)));
        const double dtotal_ddelta = -log_fp + 2.0 * step.losses.delta;
        critic_grads = nets.critic.backward(
            critic_next, nn::Vector::Constant(1, config.gamma * dtotal_ddelta));
        const nn::Vector ds_next = critic_grads.input;
        critic_grads += nets.critic.backward(critic_s, nn::Vector::Constant(1, -dtotal_ddelta));
        actor_upstream.head(nd) = ds_next.segment(nd, nd);
        for (std::size_t j = 0; j < d; ++j) {
          // Clamped coordinates do not move with the actor output.
          const double logvar = std::log(state.space.sigma_diag[j]) + step.action.offset_logvar[j];
          const bool clamped = std::abs(logvar) >= config.logvar_limit;
          const auto i = static_cast<Eigen::Index>(j);
          actor_upstream(nd + i) = clamped ? 0.0 : ds_next(2 * nd + i);
        }
      } else {
        // Semi-gradient critic on delta^2; score-function actor with delta
        // held constant.
        critic_grads = nets.critic.backward(critic_s, nn::Vector::Constant(1, -2.0 * step.losses.delta));
        const double inv_var = 1.0 / (step.explore_std * step.explore_std);
        actor_upstream = -step.losses.delta * inv_var * (applied - mean);
      }
      const nn::Gradients actor_grads = nets.actor.backward(actor_fw, actor_upstream);
      nn::adam_step(nets.critic, critic_grads, nets.critic_opt);
      nn::adam_step(nets.actor, actor_grads, nets.actor_opt);

      step.mu_distance = distance(next.space.mu, attack_point);
      step.mean_variance = mean_of(next.space.sigma_diag);
      step.terminal = step.fp_fraction >= 1.0;
      state = std::move(next);
      const bool done = step.terminal;
      trace.steps.push_back(std::move(step));
      if (done) {
        trace.fully_adversarial = true;
        break;
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(t) + ": " + e.what());
    }
  }
  trace.final_space = state.space;
  return trace;
}

RobustnessReport robustness_report(const VectorSet& attack_points, const VectorSet& base,
                                   const Index& subject, const AgentConfig& config,
                                   std::span<const std::size_t> k_values,
                                   const EpisodeObserver& observer) {
  config.validate();
  if (attack_points.empty()) throw InvalidArgument("robustness_report: no attack points");
  if (k_values.empty()) throw InvalidArgument("robustness_report: no k values");
  const std::size_t d = base.dim();
  const std::size_t points = attack_points.size();

  RobustnessReport report;
  report.subject = subject.spec().label();
  report.min_k_full.assign(points, std::nullopt);
  for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
    AgentConfig cfg = config;
    cfg.k = k_values[ki];
    const std::uint64_t k_seed = derive_seed(config.seed, cfg.k);
    std::optional<PolicyNets> shared;
    if (!cfg.per_point_agents) shared = PolicyNets::create(d, cfg, k_seed);

    KSummary summary;
    summary.k = cfg.k;
    for (std::size_t p = 0; p < points; ++p) {
      const std::uint64_t point_seed = derive_seed(k_seed, p + 1);
      std::optional<PolicyNets> own;
      if (cfg.per_point_agents) own = PolicyNets::create(d, cfg, point_seed);
      PolicyNets& nets = cfg.per_point_agents ? *own : *shared;

      EpisodeTrace trace;
      for (std::size_t e = 0; e < cfg.episodes; ++e) {
        trace = run_episode(attack_points.row(p), base, subject, nets, cfg,
                            derive_seed(point_seed, 1000 + e));
        if (observer) observer(cfg.k, p, trace);
      }
      const EpisodeStep& last = trace.steps.back();
      PointOutcome out;
      out.point = p;
      out.k = cfg.k;
      out.final_fp_fraction = last.fp_fraction;
      out.final_fp_count = std::round(last.fp_fraction * static_cast<double>(cfg.jitter_size));
      out.mu_distance = last.mu_distance;
      out.mean_variance = last.mean_variance;
      out.steps = trace.steps.size();
      out.fully_adversarial = trace.fully_adversarial;
      report.outcomes.push_back(out);

      summary.mean_fp_count += out.final_fp_count;
      summary.mean_fp_fraction += out.final_fp_fraction;
      summary.mean_mu_distance += out.mu_distance;
      summary.mean_variance += out.mean_variance;
      summary.adversarial_fraction += out.fully_adversarial ? 1.0 : 0.0;
      if (out.fully_adversarial &&
          (!report.min_k_full[p] || cfg.k < *report.min_k_full[p]))
        report.min_k_full[p] = cfg.k;
    }
    const double n = static_cast<double>(points);
    summary.mean_fp_count /= n;
    summary.mean_fp_fraction /= n;
    summary.mean_mu_distance /= n;
    summary.mean_variance /= n;
    summary.adversarial_fraction /= n;
    report.summaries.push_back(summary);
  }
  return report;
}

}  // namespace knnrobust::attack

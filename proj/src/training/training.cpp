#include "nerd/training/training.hpp"

#include <cmath>
#include <sstream>

#include "nerd/errors.hpp"
#include "nerd/util/text.hpp"

namespace nerd::training {

std::string to_string(Family family) { return family == Family::nerd ? "nerd" : "control"; }

Family parse_family(const std::string& name) {
  if (name == "nerd") return Family::nerd;
  if (name == "control") return Family::control;
  throw InvalidArgument("unknown model family '" + name + "'");
}

diffusion::NoiseSchedule TrainConfig::schedule() const {
  return diffusion::make_schedule(schedule_kind, num_steps, beta_min, beta_max);
}

void validate(const TrainConfig& c) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(c.lambda) || c.lambda < 0.0) throw InvalidArgument("train config: lambda must be >= 0");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw InvalidArgument("train config: gamma must lie in (0, 1)");
  if (!finite(c.alpha) || !(c.alpha > 0.0)) throw InvalidArgument("train config: alpha must be > 0");
  if (!finite(c.clip_norm) || !(c.clip_norm > 0.0)) throw InvalidArgument("train config: clip_norm must be > 0");
  if (c.batch_episodes < 1) throw InvalidArgument("train config: batch_episodes must be >= 1");
  if (c.diffusion_batch < 0) throw InvalidArgument("train config: diffusion_batch must be >= 0");
  if (c.n_epochs < 0) throw InvalidArgument("train config: n_epochs must be >= 0");
  if (c.hidden < 1) throw InvalidArgument("train config: hidden must be >= 1");
  if (!(c.sigma_min > 0.0 && c.sigma_min < 1.0)) throw InvalidArgument("train config: sigma_min must lie in (0, 1)");
  if (c.checkpoint_stride < 1) throw InvalidArgument("train config: checkpoint_stride must be >= 1");
  (void)c.schedule();
}

std::string describe(const TrainConfig& c) {
  std::ostringstream out;
  out << "lambda=" << text::format_double(c.lambda) << '\n'
      << "gamma=" << text::format_double(c.gamma) << '\n'
      << "alpha=" << text::format_double(c.alpha) << '\n'
      << "clip_norm=" << text::format_double(c.clip_norm) << '\n'
      << "batch_episodes=" << c.batch_episodes << '\n'
      << "diffusion_batch=" << c.diffusion_batch << '\n'
      << "n_epochs=" << c.n_epochs << '\n'
      << "hidden=" << c.hidden << '\n'
      << "sigma_min=" << text::format_double(c.sigma_min) << '\n'
      << "schedule_kind=" << (c.schedule_kind == diffusion::ScheduleKind::linear ? "linear" : "constant") << '\n'
      << "num_steps=" << c.num_steps << '\n'
      << "beta_min=" << text::format_double(c.beta_min) << '\n'
      << "beta_max=" << text::format_double(c.beta_max) << '\n'
      << "start_mode=" << static_cast<int>(c.start_mode) << '\n'
      << "seed=" << c.seed << '\n';
  return out.str();
}

std::string config_hash(const TrainConfig& c) { return text::hex64(text::fnv1a(describe(c))); }

Vector compute_returns(const Vector& rewards, double gamma) {
  Vector g(rewards.size());
  double acc = 0.0;
  for (Eigen::Index k = rewards.size() - 1; k >= 0; --k) {
    acc = rewards[k] + gamma * acc;
    g[k] = acc;
  }
  return g;
}

Vector terminal_rewards(const diffusion::DenoisingEpisode& episode) {
  Vector r = Vector::Zero(episode.num_steps());
  if (r.size() > 0) r[r.size() - 1] = episode.final_reward;
  return r;
}

HybridLoss hybrid_loss(const policy::PolicyParams& params, const std::vector<diffusion::ForwardPair>& pairs,
                       const std::vector<diffusion::DenoisingEpisode>& episodes, double lambda, int num_steps) {
  HybridLoss res;
  res.diffusion_gradient = params.zeros_like();
  if (!pairs.empty()) {
    const double denom = static_cast<double>(pairs.size()) * static_cast<double>(params.state_dim());
    const Vector no_sigma = Vector::Zero(params.state_dim());
    double sse = 0.0;
    for (const auto& p : pairs) {
      const auto out = policy::forward(params, p.x_t, p.t, num_steps);
      const Vector err = out.mu - p.x_prev;
      sse += err.squaredNorm();
      policy::backprop(params, out, (2.0 / denom) * err, no_sigma, res.diffusion_gradient);
    }
    res.diffusion_mse = sse / denom;
  }
  if (!episodes.empty()) {
    double total = 0.0;
    for (const auto& ep : episodes) total += ep.final_reward;
    res.mean_reward = total / static_cast<double>(episodes.size());
  }
  res.loss = res.diffusion_mse - lambda * res.mean_reward;
  return res;
}

UpdateResult reinforce_update(const policy::PolicyParams& params,
                              const std::vector<diffusion::DenoisingEpisode>& episodes, const TrainConfig& config,
                              const HybridLoss* hybrid) {
  if (episodes.empty()) throw InvalidArgument("reinforce_update: empty batch");
  const int steps = episodes.front().num_steps();
  for (const auto& ep : episodes) {
    if (ep.num_steps() != steps || ep.states.front().size() != params.state_dim())
      throw InvalidArgument("reinforce_update: episodes disagree on shape");
  }
  const double n = static_cast<double>(episodes.size());

  std::vector<Vector> returns;
  returns.reserve(episodes.size());
  Vector baseline = Vector::Zero(steps);
  for (const auto& ep : episodes) {
    returns.push_back(compute_returns(terminal_rewards(ep), config.gamma));
    baseline += returns.back();
  }
  baseline /= n;

  policy::Gradients direction = params.zeros_like();
  double mean_reward = 0.0;
  double mean_return = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    mean_reward += ep.final_reward / n;
    mean_return += returns[e][0] / n;
    for (int k = 0; k < steps; ++k) {
      const double advantage = returns[e][k] - baseline[k];
      if (advantage == 0.0) continue;
      const auto out = policy::forward(params, ep.states[static_cast<std::size_t>(k)], steps - k, steps);
      policy::accumulate_logprob_gradient(params, out, ep.states[static_cast<std::size_t>(k + 1)], advantage / n,
                                          direction);
    }
  }
  if (hybrid != nullptr && config.lambda != 0.0) direction.add_scaled(hybrid->diffusion_gradient, -config.lambda);

  UpdateResult res;
  const double norm = direction.norm();
  if (!std::isfinite(norm)) throw NumericFailure("non-finite policy gradient", 0);
  if (norm > config.clip_norm) direction *= config.clip_norm / norm;
  res.grad_norm_post_clip = std::min(norm, config.clip_norm);
  res.params = params;
  res.params.add_scaled(direction, config.alpha);
  if (!res.params.all_finite()) throw NumericFailure("non-finite parameters after update", 0);

  res.log.mean_reward = mean_reward;
  res.log.mean_return = mean_return;
  res.log.grad_norm_pre_clip = norm;
  res.log.mean_loss = hybrid != nullptr ? hybrid->loss : -config.lambda * mean_reward;
  return res;
}

policy::PolicyParams initial_params(const envsim::SyntheticSubject& subject, const TrainConfig& config) {
  auto rng = numerics::RngStream(config.seed).substream(subject.subject_id, "init");
  return policy::init_params(rng, subject.voxels, config.hidden, config.sigma_min);
}

namespace {

struct EpochOutcome {
  policy::PolicyParams params;
  EpochLog log;
};

const envsim::TrialRecord& pick_trial(const envsim::SyntheticSubject& subject, numerics::RngStream& rng) {
  return subject.trials[static_cast<std::size_t>(rng.below(subject.trials.size()))];
}

EpochOutcome nerd_epoch(const policy::PolicyParams& params, const envsim::SyntheticSubject& subject,
                        const TrainConfig& config, const diffusion::NoiseSchedule& schedule,
                        const envsim::RewardModel& reward, numerics::RngStream& rng) {
  const diffusion::RewardFn reward_fn = [&reward](const VoxelState& x) { return reward.squashed(x); };
  std::vector<diffusion::DenoisingEpisode> episodes;
  episodes.reserve(static_cast<std::size_t>(config.batch_episodes));
  for (int i = 0; i < config.batch_episodes; ++i) {
    const auto& trial = pick_trial(subject, rng);
    const VoxelState start = diffusion::episode_start(trial.baseline_state, schedule, config.start_mode, rng);
    episodes.push_back(diffusion::run_episode(params, start, schedule, reward_fn, rng, true));
  }
  std::vector<diffusion::ForwardPair> pairs;
  for (int i = 0; i < config.diffusion_batch; ++i) {
    auto traj = diffusion::forward_pairs(pick_trial(subject, rng).achieved_state, schedule, rng);
    pairs.insert(pairs.end(), std::make_move_iterator(traj.begin()), std::make_move_iterator(traj.end()));
  }
  const HybridLoss hybrid = hybrid_loss(params, pairs, episodes, config.lambda, schedule.num_steps());
  auto update = reinforce_update(params, episodes, config, &hybrid);
  return {std::move(update.params), update.log};
}

EpochOutcome control_epoch(const policy::PolicyParams& params, const envsim::SyntheticSubject& subject,
                           const TrainConfig& config, const diffusion::NoiseSchedule& schedule,
                           const envsim::RewardModel& reward, numerics::RngStream& rng) {
  policy::Gradients grad = params.zeros_like();
  const double n = static_cast<double>(config.batch_episodes);
  double mean_reward = 0.0;
  for (int i = 0; i < config.batch_episodes; ++i) {
    const auto& trial = pick_trial(subject, rng);
    const VoxelState start = diffusion::episode_start(trial.baseline_state, schedule, config.start_mode, rng);
    const auto chain = policy::backward_reward_deterministic(params, start, schedule.num_steps(), reward,
                                                             policy::RewardScale::squashed);
    grad.add_scaled(chain.gradients, 1.0 / n);
    mean_reward += chain.reward / n;
  }
  // grad holds d(-R)/dtheta; ascend R.
  grad *= -1.0;
  const double norm = grad.norm();
  if (!std::isfinite(norm)) throw NumericFailure("non-finite control gradient", 0);
  if (norm > config.clip_norm) grad *= config.clip_norm / norm;
  EpochOutcome out{params, {}};
  out.params.add_scaled(grad, config.alpha);
  if (!out.params.all_finite()) throw NumericFailure("non-finite parameters after update", 0);
  out.log.mean_loss = -mean_reward;
  out.log.mean_reward = mean_reward;
  out.log.mean_return = mean_reward;
  out.log.grad_norm_pre_clip = norm;
  return out;
}

}  // namespace

TrainResult train(Family family, const envsim::SyntheticSubject& subject, const TrainConfig& config,
                  const Checkpoint* resume, const TrainObserver& observer) {
  validate(config);
  if (subject.trials.empty()) throw InvalidArgument("train: subject has no trials");
  const auto schedule = config.schedule();
  const auto reward = envsim::reward_model(subject);
  const std::string hash = config_hash(config);
  const numerics::RngStream root(config.seed);
  const std::string tag = to_string(family) + "-epoch";

  TrainResult result;
  auto emit = [&](int epoch, const policy::PolicyParams& params) {
    Checkpoint cp{subject.subject_id, family, epoch, params, hash, config.seed, static_cast<std::uint64_t>(epoch)};
    if (observer.on_checkpoint) observer.on_checkpoint(cp);
    result.checkpoints.push_back(std::move(cp));
  };

  policy::PolicyParams params;
  int first_epoch = 1;
  if (resume != nullptr) {
    if (resume->config_hash != hash) throw InvalidArgument("train: checkpoint was produced by a different config");
    if (resume->params.state_dim() != subject.voxels) throw InvalidArgument("train: checkpoint dimension mismatch");
    params = resume->params;
    first_epoch = static_cast<int>(resume->rng_cursor) + 1;
  } else {
    params = initial_params(subject, config);
    emit(0, params);
  }

  for (int epoch = first_epoch; epoch <= config.n_epochs; ++epoch) {
    auto rng = root.substream(subject.subject_id, tag, static_cast<std::uint64_t>(epoch));
    EpochOutcome outcome;
    try {
      outcome = family == Family::nerd ? nerd_epoch(params, subject, config, schedule, reward, rng)
                                       : control_epoch(params, subject, config, schedule, reward, rng);
    } catch (const NumericFailure& e) {
      throw NumericFailure(std::string(e.what()) + " during epoch " + std::to_string(epoch), epoch);
    }
    params = std::move(outcome.params);
    outcome.log.epoch = epoch;
    if (observer.on_epoch) observer.on_epoch(outcome.log);
    result.logs.push_back(outcome.log);
    if (epoch % config.checkpoint_stride == 0 || epoch == config.n_epochs) emit(epoch, params);
  }
  return result;
}

TrainResult train_nerd(const envsim::SyntheticSubject& subject, const TrainConfig& config, const Checkpoint* resume,
                       const TrainObserver& observer) {
  return train(Family::nerd, subject, config, resume, observer);
}

TrainResult train_control(const envsim::SyntheticSubject& subject, const TrainConfig& config,
                          const Checkpoint* resume, const TrainObserver& observer) {
  return train(Family::control, subject, config, resume, observer);
}

}  // namespace nerd::training

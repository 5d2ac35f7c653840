#include "nerd/diffusion/diffusion.hpp"

#include <cmath>

#include "nerd/errors.hpp"

namespace nerd::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw InvalidArgument("NoiseSchedule: need at least one step");
  double prod = 1.0;
  alpha_bars_.reserve(betas_.size());
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("NoiseSchedule: every beta must lie in (0, 1)");
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
}

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps, double beta_min, double beta_max) {
  if (num_steps < 1) throw InvalidArgument("make_schedule: num_steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw InvalidArgument("make_schedule: need 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  for (int i = 0; i < num_steps; ++i) {
    if (kind == ScheduleKind::constant || num_steps == 1) {
      betas[static_cast<std::size_t>(i)] = beta_min;
    } else {
      const double f = static_cast<double>(i) / static_cast<double>(num_steps - 1);
      betas[static_cast<std::size_t>(i)] = beta_min + f * (beta_max - beta_min);
    }
  }
  return NoiseSchedule(std::move(betas));
}

VoxelState forward_noise(const VoxelState& x_prev, double beta, numerics::RngStream& rng) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("forward_noise: beta must lie in (0, 1)");
  return std::sqrt(1.0 - beta) * x_prev + std::sqrt(beta) * rng.normal_vector(x_prev.size());
}

VoxelState noise_to_step(const VoxelState& x0, const NoiseSchedule& schedule, int t, numerics::RngStream& rng) {
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * rng.normal_vector(x0.size());
}

std::vector<ForwardPair> forward_pairs(const VoxelState& x0, const NoiseSchedule& schedule,
                                       numerics::RngStream& rng) {
  std::vector<ForwardPair> pairs;
  pairs.reserve(static_cast<std::size_t>(schedule.num_steps()));
  VoxelState x = x0;
  for (int t = 1; t <= schedule.num_steps(); ++t) {
    const double beta = schedule.beta(t);
    ForwardPair p;
    p.t = t;
    p.x_prev = x;
    p.epsilon = rng.normal_vector(x.size());
    p.x_t = std::sqrt(1.0 - beta) * x + std::sqrt(beta) * p.epsilon;
    x = p.x_t;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

DenoisingEpisode run_episode(const policy::PolicyParams& params, const VoxelState& x_start,
                             const NoiseSchedule& schedule, const RewardFn& reward_fn, numerics::RngStream& rng,
                             bool stochastic) {
  const int steps = schedule.num_steps();
  const Eigen::Index v = params.state_dim();
  if (x_start.size() != v) throw InvalidArgument("run_episode: start state dimension mismatch");
  if (!x_start.allFinite()) throw InvalidArgument("run_episode: start state is not finite");

  DenoisingEpisode ep;
  ep.states.reserve(static_cast<std::size_t>(steps + 1));
  ep.states.push_back(x_start);
  ep.step_mus.resize(steps, v);
  ep.step_sigmas.resize(steps, v);
  ep.logprobs.resize(steps);
  ep.per_step_rewards = Vector::Zero(steps);
  if (reward_fn) ep.start_reward = reward_fn(x_start);

  for (int k = 0; k < steps; ++k) {
    const int t = steps - k;
    const auto out = policy::forward(params, ep.states.back(), t, steps);
    if (!out.mu.allFinite() || !out.sigma.allFinite()) throw NumericFailure("non-finite policy output", t);
    VoxelState action = out.mu;
    if (stochastic) {
      for (Eigen::Index i = 0; i < v; ++i) action[i] += out.sigma[i] * rng.normal();
    }
    ep.step_mus.row(k) = out.mu.transpose();
    ep.step_sigmas.row(k) = out.sigma.transpose();
    ep.logprobs[k] = policy::logprob(out, action);
    if (reward_fn) ep.per_step_rewards[k] = reward_fn(action);
    ep.states.push_back(std::move(action));
  }
  ep.final_reward = reward_fn ? ep.per_step_rewards[steps - 1] : 0.0;
  return ep;
}

VoxelState episode_start(const VoxelState& trial_state, const NoiseSchedule& schedule, StartMode mode,
                         numerics::RngStream& rng) {
  switch (mode) {
    case StartMode::trial:
      return trial_state;
    case StartMode::forward_noised:
      return noise_to_step(trial_state, schedule, schedule.num_steps(), rng);
    case StartMode::pure_noise:
      return rng.normal_vector(trial_state.size());
  }
  throw InvalidArgument("episode_start: unknown start mode");
}

}  // namespace nerd::diffusion

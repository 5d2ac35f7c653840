#pragma once

#include <functional>
#include <vector>

#include "nerd/numerics/rng.hpp"
#include "nerd/policy/policy.hpp"
#include "nerd/types.hpp"

namespace nerd::diffusion {

enum class ScheduleKind { linear, constant };

/// Forward-process variances beta_1..beta_T and their cumulative products
/// alpha_bar_t = prod_{s <= t} (1 - beta_s). Index 0 holds t = 1.
class NoiseSchedule {
public:
  explicit NoiseSchedule(std::vector<double> betas);

  int num_steps() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t - 1)); }
  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps, double beta_min, double beta_max);

/// One forward step: sqrt(1 - beta) x + sqrt(beta) eps.
VoxelState forward_noise(const VoxelState& x_prev, double beta, numerics::RngStream& rng);

/// Closed-form marginal draw of x_t given x_0.
VoxelState noise_to_step(const VoxelState& x0, const NoiseSchedule& schedule, int t, numerics::RngStream& rng);

struct ForwardPair {
  int t = 0;
  VoxelState x_t;
  VoxelState x_prev;  ///< x_{t-1}
  VoxelState epsilon;
};

/// A full forward trajectory x_0 -> x_T with the injected noise recorded.
std::vector<ForwardPair> forward_pairs(const VoxelState& x0, const NoiseSchedule& schedule,
                                       numerics::RngStream& rng);

/// Reward evaluated on each visited state; empty means "do not score".
using RewardFn = std::function<double(const VoxelState&)>;

/// One reverse chain x_T -> x_0. Row k of the step matrices belongs to the
/// transition at timestep t = T - k; states[k] is the input to that step and
/// states[T] is x_0.
struct DenoisingEpisode {
  std::vector<VoxelState> states;
  Matrix step_mus;     ///< T x V
  Matrix step_sigmas;  ///< T x V
  Vector logprobs;     ///< T
  Vector per_step_rewards;  ///< T; reward of the state produced by step k
  double start_reward = 0.0;
  double final_reward = 0.0;

  int num_steps() const { return static_cast<int>(logprobs.size()); }
  double total_logprob() const { return logprobs.sum(); }
};

/// Rolls the policy from `x_start`. Stochastic episodes sample each action
/// from N(mu, diag(sigma^2)); deterministic ones take mu. Throws
/// NumericFailure (with the timestep) if the policy emits a non-finite value.
DenoisingEpisode run_episode(const policy::PolicyParams& params, const VoxelState& x_start,
                             const NoiseSchedule& schedule, const RewardFn& reward_fn, numerics::RngStream& rng,
                             bool stochastic);

/// Where episodes start.
enum class StartMode {
  trial,           ///< the trial pattern itself
  forward_noised,  ///< trial pattern pushed through the full forward process
  pure_noise,      ///< N(0, I)
};

VoxelState episode_start(const VoxelState& trial_state, const NoiseSchedule& schedule, StartMode mode,
                         numerics::RngStream& rng);

}  // namespace nerd::diffusion

#pragma once

#include <cstdint>

#include "nerd/envsim/envsim.hpp"
#include "nerd/numerics/rng.hpp"
#include "nerd/types.hpp"

namespace nerd::policy {

/// Weights of the two-layer Gaussian policy:
///   hidden = tanh(w1 [x; t/T] + b1)
///   raw    = w2 hidden + b2,  mu = raw[0, V),  sigma = softplus(raw[V, 2V)) + sigma_min
struct Weights {
  Matrix w1;  ///< H x (V + 1)
  Vector b1;  ///< H
  Matrix w2;  ///< 2V x H
  Vector b2;  ///< 2V

  static Weights zeros(Eigen::Index voxels, Eigen::Index hidden);
  Weights zeros_like() const { return zeros(state_dim(), hidden_size()); }

  Eigen::Index state_dim() const { return w1.cols() - 1; }
  Eigen::Index hidden_size() const { return w1.rows(); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  double squared_norm() const;
  double norm() const;
  bool all_finite() const;
  /// this += scale * other
  void add_scaled(const Weights& other, double scale);
  Weights& operator*=(double scale);

  /// Order: w1 (column-major), b1, w2 (column-major), b2.
  Vector flatten() const;
  void assign_flat(const Vector& flat);
};

using Gradients = Weights;

struct PolicyParams : Weights {
  double sigma_min = 1e-3;
};

struct PolicyOutput {
  Vector input;   ///< [x; t/T]
  Vector hidden;  ///< tanh activations
  Vector raw;     ///< 2V pre-positivity outputs
  Vector mu;
  Vector sigma;
};

/// Glorot-uniform weights, zero biases except the sigma half of b2, which
/// starts where softplus(.) + sigma_min == 1.
PolicyParams init_params(numerics::RngStream& rng, Eigen::Index voxels, Eigen::Index hidden,
                         double sigma_min = 1e-3);

PolicyOutput forward(const PolicyParams& params, const VoxelState& x, int t, int num_steps);

/// Sum over voxels of the Gaussian log density of `action`.
double logprob(const PolicyOutput& out, const VoxelState& action);

/// Reverse-mode pass for arbitrary upstream gradients on (mu, sigma).
/// Adds scale * dL/dtheta into `acc` and returns dL/dx (length V).
Vector backprop(const PolicyParams& params, const PolicyOutput& out, const Vector& d_mu, const Vector& d_sigma,
                Gradients& acc, double scale = 1.0);

/// Gradient of logprob(forward(x, t), action) with respect to every weight.
Gradients backward_logprob(const PolicyParams& params, const VoxelState& x, int t, int num_steps,
                           const VoxelState& action);

/// Accumulating variant used by the trainers.
void accumulate_logprob_gradient(const PolicyParams& params, const PolicyOutput& out, const VoxelState& action,
                                 double scale, Gradients& acc);

enum class RewardScale { raw, squashed };

struct ChainGradient {
  Gradients gradients;  ///< d(-R(x_0)) / dtheta
  double reward = 0.0;  ///< R(x_0)
  VoxelState final_state;
};

/// Runs the deterministic chain x_{t-1} = mu(x_t, t) for t = T..1 and
/// backpropagates -R(x_0) through all T steps.
ChainGradient backward_reward_deterministic(const PolicyParams& params, const VoxelState& x_start, int num_steps,
                                            const envsim::RewardModel& reward,
                                            RewardScale scale = RewardScale::raw);

struct ProbeConfig {
  int n_probes = 5;
  int num_steps = 3;
  double step = 1e-5;
  std::uint64_t seed = 1;
};

/// Worst relative error between analytic and central-difference gradients
/// over both backward passes. Entries below 1e-4 in magnitude are compared
/// against that floor instead of their own size.
double grad_check(const PolicyParams& params, const ProbeConfig& probe = {});

}  // namespace nerd::policy

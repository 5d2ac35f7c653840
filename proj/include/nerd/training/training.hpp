#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nerd/diffusion/diffusion.hpp"
#include "nerd/envsim/envsim.hpp"
#include "nerd/policy/policy.hpp"

namespace nerd::training {

enum class Family { nerd, control };

std::string to_string(Family family);
Family parse_family(const std::string& name);

struct TrainConfig {
  double lambda = 1.0;       ///< weight of the diffusion term in the hybrid objective
  double gamma = 0.99;       ///< discount
  double alpha = 0.01;       ///< learning rate
  double clip_norm = 5.0;    ///< global gradient-norm clip
  int batch_episodes = 32;   ///< episodes per epoch (one parameter update)
  int diffusion_batch = 8;   ///< forward trajectories per epoch for the diffusion term
  int n_epochs = 300;
  int hidden = 128;
  double sigma_min = 1e-3;
  diffusion::ScheduleKind schedule_kind = diffusion::ScheduleKind::linear;
  int num_steps = 40;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  diffusion::StartMode start_mode = diffusion::StartMode::forward_noised;
  int checkpoint_stride = 1;
  std::uint64_t seed = 0;

  diffusion::NoiseSchedule schedule() const;
};

void validate(const TrainConfig& config);

/// Canonical key=value text of every field; the config hash is over this.
std::string describe(const TrainConfig& config);
std::string config_hash(const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_reward = 0.0;
  double mean_return = 0.0;
  double grad_norm_pre_clip = 0.0;
};

struct Checkpoint {
  std::string subject_id;
  Family family = Family::nerd;
  int epoch = 0;
  policy::PolicyParams params;
  std::string config_hash;
  std::uint64_t rng_seed = 0;
  /// Index of the last epoch substream consumed; training resumes at cursor + 1.
  std::uint64_t rng_cursor = 0;
};

/// G_k = sum_{j >= k} gamma^{j - k} r_j for a per-step reward vector.
Vector compute_returns(const Vector& rewards, double gamma);

/// Reward layout of the MDP: zero everywhere except the terminal step.
Vector terminal_rewards(const diffusion::DenoisingEpisode& episode);

struct HybridLoss {
  double loss = 0.0;           ///< diffusion_mse - lambda * mean_reward
  double diffusion_mse = 0.0;  ///< mean over pairs and voxels of (mu - x_{t-1})^2
  double mean_reward = 0.0;
  policy::Gradients diffusion_gradient;  ///< d diffusion_mse / d theta
};

/// x-prediction form of the diffusion term: the policy mean at (x_t, t) is
/// regressed onto x_{t-1}. With no pairs the diffusion term is zero.
HybridLoss hybrid_loss(const policy::PolicyParams& params, const std::vector<diffusion::ForwardPair>& pairs,
                       const std::vector<diffusion::DenoisingEpisode>& episodes, double lambda, int num_steps);

struct UpdateResult {
  policy::PolicyParams params;
  EpochLog log;
  double grad_norm_post_clip = 0.0;
};

/// One REINFORCE step with a per-timestep batch-mean baseline:
///   d = mean_e sum_t (G_t - b_t) grad log pi(a_t | s_t) - lambda * grad(diffusion_mse)
/// clipped to `clip_norm` and applied as theta += alpha * d.
UpdateResult reinforce_update(const policy::PolicyParams& params,
                              const std::vector<diffusion::DenoisingEpisode>& episodes, const TrainConfig& config,
                              const HybridLoss* hybrid = nullptr);

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<EpochLog> logs;
};

/// Called for every checkpoint as soon as it is taken, and for every epoch log.
struct TrainObserver {
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Initial weights shared by both families for a subject.
policy::PolicyParams initial_params(const envsim::SyntheticSubject& subject, const TrainConfig& config);

/// REINFORCE trainer. When `resume` is given, training continues from its
/// epoch and the result holds only the checkpoints taken afterwards.
TrainResult train_nerd(const envsim::SyntheticSubject& subject, const TrainConfig& config,
                       const Checkpoint* resume = nullptr, const TrainObserver& observer = {});

/// Deterministic reward-backprop trainer.
TrainResult train_control(const envsim::SyntheticSubject& subject, const TrainConfig& config,
                          const Checkpoint* resume = nullptr, const TrainObserver& observer = {});

TrainResult train(Family family, const envsim::SyntheticSubject& subject, const TrainConfig& config,
                  const Checkpoint* resume = nullptr, const TrainObserver& observer = {});

inline constexpr int kCheckpointFormatVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& contents);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string epoch_log_csv(const std::vector<EpochLog>& logs);
std::vector<EpochLog> parse_epoch_log_csv(const std::string& contents);

}  // namespace nerd::training

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nerd/diffusion/diffusion.hpp"
#include "nerd/envsim/envsim.hpp"
#include "nerd/training/training.hpp"

namespace nerd::fitting {

struct FitConfig {
  int n_samples = 30;            ///< generated final states per trial
  double variance_floor = 1e-4;  ///< v_min for the per-voxel sample variance
  /// Use only the first `max_trials` trials (0 = all).
  int max_trials = 0;
  diffusion::StartMode start_mode = diffusion::StartMode::forward_noised;
  std::uint64_t seed = 0;
};

void validate(const FitConfig& config);

/// Per-voxel mean NLL of `target` under a diagonal Gaussian fitted to the
/// rows of `samples` (sample mean, n-1 variance floored at `variance_floor`).
double diagonal_gaussian_nll(const Matrix& samples, const VoxelState& target, double variance_floor);

/// Final states of `n_samples` stochastic episodes from one start state,
/// one per row.
Matrix sample_final_states(const policy::PolicyParams& params, const VoxelState& start,
                           const diffusion::NoiseSchedule& schedule, int n_samples, numerics::RngStream& rng);

/// NLL of the trial's achieved pattern under the model's generated
/// distribution for that trial. The start state is the trial baseline run
/// through `start_mode`.
double trial_nll(const policy::PolicyParams& params, const envsim::SyntheticSubject& subject,
                 std::size_t trial_index, const diffusion::NoiseSchedule& schedule, const FitConfig& config,
                 numerics::RngStream& rng);

/// argmin with ties resolved to the earliest index. Returns (index, value).
std::pair<int, double> select_best_epoch(const Vector& per_epoch_mean_nll);

struct FitResult {
  std::string subject_id;
  training::Family family = training::Family::nerd;
  std::vector<int> epochs;  ///< checkpoint epoch of each entry below
  Vector per_epoch_mean_nll;
  int e_star_index = 0;
  int e_star = 0;  ///< epoch number of the frozen checkpoint
  double min_nll = 0.0;
};

/// Mean trial NLL for every checkpoint, then best-epoch selection. Each
/// trial draws from its own substream so every checkpoint sees the same
/// start states and sampling noise.
FitResult fit_subject(const envsim::SyntheticSubject& subject, const std::vector<training::Checkpoint>& checkpoints,
                      const diffusion::NoiseSchedule& schedule, const FitConfig& config);

/// Checks min_nll == per_epoch_mean_nll[e_star_index] == the vector minimum.
bool is_consistent(const FitResult& result);

inline constexpr int kFitFormatVersion = 1;

std::string serialize_fit(const FitResult& fit);
FitResult parse_fit(const std::string& contents);
std::string nll_csv(const FitResult& fit);
void save_fit(const FitResult& fit, const std::filesystem::path& dir);
FitResult load_fit(const std::filesystem::path& file);

}  // namespace nerd::fitting

#pragma once

#include <string>
#include <vector>

#include "nerd/diffusion/diffusion.hpp"
#include "nerd/envsim/envsim.hpp"
#include "nerd/numerics/linalg.hpp"
#include "nerd/numerics/stats.hpp"
#include "nerd/training/training.hpp"

namespace nerd::analysis {

/// Dissimilarity matrix with row/column labels. Construction checks
/// symmetry (1e-12) and the zero diagonal.
struct Rdm {
  std::vector<std::string> labels;
  Matrix dist;
};

Rdm make_rdm(std::vector<std::string> labels, Matrix dist);

/// 1 - pearson(a, b). Identical vectors give 0; a constant vector paired
/// with anything else gives 1.
double correlation_distance(const VoxelState& a, const VoxelState& b);

Matrix correlation_distance_matrix(const std::vector<VoxelState>& states);

/// Mean and sample sd of the reward at every denoising step. Index 0 is
/// the start state x_T and index T is x_0, so both vectors have T + 1
/// entries.
struct RewardTrajectory {
  Vector mean;
  Vector std;
};

RewardTrajectory reward_trajectory(const policy::PolicyParams& params, const std::vector<VoxelState>& starts,
                                   const diffusion::NoiseSchedule& schedule, const diffusion::RewardFn& reward,
                                   bool stochastic, numerics::RngStream& rng);

/// Start states for `n` episodes: trial baselines (cycling through the
/// subject's trials) pushed through `mode`.
std::vector<VoxelState> trial_starts(const envsim::SyntheticSubject& subject, const diffusion::NoiseSchedule& schedule,
                                     diffusion::StartMode mode, int n, numerics::RngStream& rng);

/// First index s with trajectory[s] - trajectory[0] >= fraction * (trajectory.back() - trajectory[0]).
/// Returns 0 when the trajectory never rises above its start.
int steps_to_fraction(const Vector& trajectory, double fraction = 0.9);

Rdm stepwise_rdm(const diffusion::DenoisingEpisode& episode);
Rdm trialpair_rdm(const std::vector<VoxelState>& states_at_step, std::vector<std::string> labels = {});

/// 2-D classical scaling of the correlation-distance matrix.
Matrix mds_embed(const std::vector<VoxelState>& states);

/// Learned noise read-out of one frozen model. Matrices are V x T with
/// column k holding timestep t = T - k (denoising order).
struct NoiseTrajectorySet {
  std::string subject_id;
  training::Family family = training::Family::nerd;
  Matrix mu;      ///< mean state change mu_theta(x_t, t) - x_t
  Matrix sigma;
  Matrix raw_mu;  ///< mu_theta(x_t, t) itself
  Matrix mu_star;
  Matrix sigma_star;
};

/// Per-row min-max scaling to [0, 1]; constant rows map to 0.
Matrix normalize_rows(const Matrix& m);

NoiseTrajectorySet make_noise_trajectories(std::string subject_id, training::Family family, Matrix mu, Matrix sigma,
                                           Matrix raw_mu);

/// Averages the policy's (mu - x_t, sigma) over `n_episodes` rollouts from
/// trial starts.
NoiseTrajectorySet extract_noise_trajectories(const policy::PolicyParams& params,
                                              const envsim::SyntheticSubject& subject,
                                              const diffusion::NoiseSchedule& schedule, training::Family family,
                                              int n_episodes, diffusion::StartMode mode, bool stochastic,
                                              numerics::RngStream& rng);

/// K-means over per-voxel features [mu*_v, sigma*_v] (length 2T).
IntVector cluster_voxels(const NoiseTrajectorySet& set, Eigen::Index k, numerics::RngStream& rng);

struct SubjectTrajectory {
  std::string subject_id;
  training::Family family = training::Family::nerd;
  Matrix pc_path;                  ///< T x 3
  Vector explained_variance_ratio;  ///< 3
  Matrix loadings;                 ///< 3 x V stage-2 components
  Matrix stage1_scores;            ///< T x V
  Vector stage1_ratio;             ///< V, PC1 share of each voxel's (mu, sigma) pair
};

/// Stage 1: per voxel, PCA of its T x 2 (mu, sigma) series down to one
/// score series. Stage 2: PCA of the T x V score matrix down to three
/// components. Missing components (V or T below 3) are zero-padded.
SubjectTrajectory two_stage_pca(const NoiseTrajectorySet& set);

/// Flips each component so its loading vector has a non-negative dot
/// product with the cohort mean loading (first subject breaks the symmetry).
void align_trajectory_signs(std::vector<SubjectTrajectory>& trajectories);

/// Frobenius distance between pc_paths.
Rdm subject_trajectory_rdm(const std::vector<SubjectTrajectory>& trajectories);

numerics::Dendrogram cluster_subjects(const Rdm& rdm, Eigen::Index k = 4,
                                      numerics::Linkage linkage = numerics::Linkage::average);

/// y ~ x: human mean reward on the model's mean predicted reward.
numerics::LinearFit fit_reward_model(const Vector& human, const Vector& model);

struct ClusterFit {
  numerics::LinearFit fit;
  IntVector clusters;  ///< labels actually used, 0 = reference cluster
  std::vector<std::string> warnings;
};

/// Intercept, Cluster2..K, ModelPredictedReward, ClusterJ:ModelPredictedReward.
/// `clusters` must already be compact 0..K-1.
Matrix cluster_design(const Vector& model, const IntVector& clusters, std::vector<std::string>* names = nullptr);

/// y ~ x1 * x2. Singleton clusters are merged into the cluster with the
/// nearest (model, human) centroid and reported in `warnings`.
ClusterFit fit_reward_model_with_clusters(const Vector& human, const Vector& model, const IntVector& clusters);

}  // namespace nerd::analysis

#include "nerd/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "nerd/errors.hpp"

namespace nerd::analysis {

Rdm make_rdm(std::vector<std::string> labels, Matrix dist) {
  numerics::require_distance_matrix(dist, 1e-12, "make_rdm");
  if (labels.size() != static_cast<std::size_t>(dist.rows())) throw InvalidArgument("make_rdm: label count mismatch");
  return {std::move(labels), std::move(dist)};
}

double correlation_distance(const VoxelState& a, const VoxelState& b) {
  if (a.size() != b.size()) throw InvalidArgument("correlation_distance: dimension mismatch");
  if (a == b) return 0.0;
  try {
    return 1.0 - numerics::pearson(a, b);
  } catch (const DegenerateInput&) {
    return 1.0;
  }
}

Matrix correlation_distance_matrix(const std::vector<VoxelState>& states) {
  const auto n = static_cast<Eigen::Index>(states.size());
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = correlation_distance(states[static_cast<std::size_t>(i)], states[static_cast<std::size_t>(j)]);
  return d;
}

std::vector<VoxelState> trial_starts(const envsim::SyntheticSubject& subject, const diffusion::NoiseSchedule& schedule,
                                     diffusion::StartMode mode, int n, numerics::RngStream& rng) {
  if (subject.trials.empty()) throw InvalidArgument("trial_starts: subject has no trials");
  std::vector<VoxelState> starts;
  starts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& trial = subject.trials[static_cast<std::size_t>(i) % subject.trials.size()];
    starts.push_back(diffusion::episode_start(trial.baseline_state, schedule, mode, rng));
  }
  return starts;
}

RewardTrajectory reward_trajectory(const policy::PolicyParams& params, const std::vector<VoxelState>& starts,
                                   const diffusion::NoiseSchedule& schedule, const diffusion::RewardFn& reward,
                                   bool stochastic, numerics::RngStream& rng) {
  if (starts.size() < 2) throw InvalidArgument("reward_trajectory: need at least two episodes");
  if (!reward) throw InvalidArgument("reward_trajectory: missing reward function");
  const int steps = schedule.num_steps();
  const auto n = static_cast<Eigen::Index>(starts.size());
  Matrix rewards(n, steps + 1);
  for (Eigen::Index e = 0; e < n; ++e) {
    const auto ep = diffusion::run_episode(params, starts[static_cast<std::size_t>(e)], schedule, reward, rng, stochastic);
    rewards(e, 0) = ep.start_reward;
    rewards.row(e).tail(steps) = ep.per_step_rewards.transpose();
  }
  RewardTrajectory out;
  out.mean = rewards.colwise().mean();
  const Matrix centered = rewards.rowwise() - out.mean.transpose();
  out.std = (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).array().sqrt();
  return out;
}

int steps_to_fraction(const Vector& trajectory, double fraction) {
  if (trajectory.size() == 0) throw InvalidArgument("steps_to_fraction: empty trajectory");
  const double start = trajectory[0];
  const double gain = trajectory[trajectory.size() - 1] - start;
  if (!(gain > 0.0)) return 0;
  for (Eigen::Index s = 0; s < trajectory.size(); ++s)
    if (trajectory[s] - start >= fraction * gain) return static_cast<int>(s);
  return static_cast<int>(trajectory.size() - 1);
}

Rdm stepwise_rdm(const diffusion::DenoisingEpisode& episode) {
  const int steps = episode.num_steps();
  std::vector<std::string> labels;
  for (int s = 0; s <= steps; ++s) labels.push_back("t" + std::to_string(steps - s));
  return make_rdm(std::move(labels), correlation_distance_matrix(episode.states));
}

Rdm trialpair_rdm(const std::vector<VoxelState>& states_at_step, std::vector<std::string> labels) {
  if (states_at_step.size() < 2) throw InvalidArgument("trialpair_rdm: need at least two trials");
  if (labels.empty())
    for (std::size_t i = 0; i < states_at_step.size(); ++i) labels.push_back("trial" + std::to_string(i));
  return make_rdm(std::move(labels), correlation_distance_matrix(states_at_step));
}

Matrix mds_embed(const std::vector<VoxelState>& states) {
  if (states.size() < 3) throw InvalidArgument("mds_embed: need at least three states");
  return numerics::classical_mds(correlation_distance_matrix(states), 2);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double lo = m.row(r).minCoeff();
    const double hi = m.row(r).maxCoeff();
    if (hi > lo) out.row(r) = (m.row(r).array() - lo) / (hi - lo);
  }
  return out;
}

NoiseTrajectorySet make_noise_trajectories(std::string subject_id, training::Family family, Matrix mu, Matrix sigma,
                                           Matrix raw_mu) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols())
    throw InvalidArgument("make_noise_trajectories: mu/sigma shape mismatch");
  if ((sigma.array() <= 0.0).any()) throw InvalidArgument("make_noise_trajectories: sigma must be positive");
  NoiseTrajectorySet set;
  set.subject_id = std::move(subject_id);
  set.family = family;
  set.mu_star = normalize_rows(mu);
  set.sigma_star = normalize_rows(sigma);
  set.mu = std::move(mu);
  set.sigma = std::move(sigma);
  set.raw_mu = std::move(raw_mu);
  return set;
}

NoiseTrajectorySet extract_noise_trajectories(const policy::PolicyParams& params,
                                              const envsim::SyntheticSubject& subject,
                                              const diffusion::NoiseSchedule& schedule, training::Family family,
                                              int n_episodes, diffusion::StartMode mode, bool stochastic,
                                              numerics::RngStream& rng) {
  if (n_episodes < 1) throw InvalidArgument("extract_noise_trajectories: need at least one episode");
  const int steps = schedule.num_steps();
  const Eigen::Index v = params.state_dim();
  Matrix mu = Matrix::Zero(v, steps);
  Matrix sigma = Matrix::Zero(v, steps);
  Matrix raw_mu = Matrix::Zero(v, steps);
  const auto starts = trial_starts(subject, schedule, mode, n_episodes, rng);
  for (const auto& start : starts) {
    const auto ep = diffusion::run_episode(params, start, schedule, {}, rng, stochastic);
    for (int k = 0; k < steps; ++k) {
      raw_mu.col(k) += ep.step_mus.row(k).transpose();
      mu.col(k) += ep.step_mus.row(k).transpose() - ep.states[static_cast<std::size_t>(k)];
      sigma.col(k) += ep.step_sigmas.row(k).transpose();
    }
  }
  const double n = static_cast<double>(n_episodes);
  return make_noise_trajectories(subject.subject_id, family, mu / n, sigma / n, raw_mu / n);
}

IntVector cluster_voxels(const NoiseTrajectorySet& set, Eigen::Index k, numerics::RngStream& rng) {
  Matrix features(set.mu_star.rows(), 2 * set.mu_star.cols());
  features << set.mu_star, set.sigma_star;
  return numerics::kmeans(features, k, rng).labels;
}

SubjectTrajectory two_stage_pca(const NoiseTrajectorySet& set) {
  const Eigen::Index v = set.mu.rows();
  const Eigen::Index steps = set.mu.cols();
  if (v < 2) throw InvalidArgument("two_stage_pca: need at least two voxels");
  if (steps < 3) throw InvalidArgument("two_stage_pca: need at least three steps");

  SubjectTrajectory out;
  out.subject_id = set.subject_id;
  out.family = set.family;
  out.stage1_scores.resize(steps, v);
  out.stage1_ratio.resize(v);
  Matrix pair(steps, 2);
  for (Eigen::Index i = 0; i < v; ++i) {
    pair.col(0) = set.mu.row(i).transpose();
    pair.col(1) = set.sigma.row(i).transpose();
    const auto p = numerics::pca(pair, 1);
    out.stage1_scores.col(i) = p.scores.col(0);
    out.stage1_ratio[i] = p.explained_variance_ratio[0];
  }

  const Eigen::Index kept = std::min<Eigen::Index>({3, steps, v});
  const auto stage2 = numerics::pca(out.stage1_scores, kept);
  out.pc_path = Matrix::Zero(steps, 3);
  out.explained_variance_ratio = Vector::Zero(3);
  out.loadings = Matrix::Zero(3, v);
  out.pc_path.leftCols(kept) = stage2.scores;
  out.explained_variance_ratio.head(kept) = stage2.explained_variance_ratio;
  out.loadings.topRows(kept) = stage2.components;
  return out;
}

void align_trajectory_signs(std::vector<SubjectTrajectory>& trajectories) {
  if (trajectories.size() < 2) return;
  const Eigen::Index comps = trajectories.front().loadings.rows();
  for (Eigen::Index c = 0; c < comps; ++c) {
    const Vector reference = trajectories.front().loadings.row(c).transpose();
    Vector cohort_mean = Vector::Zero(reference.size());
    for (auto& tr : trajectories) {
      if (tr.loadings.cols() != reference.size()) throw InvalidArgument("align_trajectory_signs: voxel count mismatch");
      const double sign = tr.loadings.row(c).dot(reference.transpose()) < 0.0 ? -1.0 : 1.0;
      cohort_mean += sign * tr.loadings.row(c).transpose();
    }
    for (auto& tr : trajectories) {
      if (tr.loadings.row(c).dot(cohort_mean.transpose()) < 0.0) {
        tr.loadings.row(c) *= -1.0;
        tr.pc_path.col(c) *= -1.0;
      }
    }
  }
}

Rdm subject_trajectory_rdm(const std::vector<SubjectTrajectory>& trajectories) {
  const auto n = static_cast<Eigen::Index>(trajectories.size());
  Matrix d = Matrix::Zero(n, n);
  std::vector<std::string> labels;
  for (const auto& tr : trajectories) labels.push_back(tr.subject_id);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = trajectories[static_cast<std::size_t>(i)].pc_path;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& b = trajectories[static_cast<std::size_t>(j)].pc_path;
      if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidArgument("subject_trajectory_rdm: trajectory shapes differ");
      d(i, j) = d(j, i) = (a - b).norm();
    }
  }
  return make_rdm(std::move(labels), std::move(d));
}

numerics::Dendrogram cluster_subjects(const Rdm& rdm, Eigen::Index k, numerics::Linkage linkage) {
  return numerics::agglomerative_cluster(rdm.dist, std::min(k, rdm.dist.rows()), linkage);
}

numerics::LinearFit fit_reward_model(const Vector& human, const Vector& model) {
  if (human.size() != model.size()) throw InvalidArgument("fit_reward_model: length mismatch");
  if (human.size() < 3) throw InvalidArgument("fit_reward_model: need at least three subjects");
  Matrix design(human.size(), 2);
  design.col(0).setOnes();
  design.col(1) = model;
  return numerics::ols_fit(design, human, {"Intercept", "ModelPredictedReward"});
}

Matrix cluster_design(const Vector& model, const IntVector& clusters, std::vector<std::string>* names) {
  if (model.size() != clusters.size()) throw InvalidArgument("cluster_design: length mismatch");
  const int k = clusters.size() ? clusters.maxCoeff() + 1 : 0;
  const Eigen::Index n = model.size();
  Matrix design = Matrix::Zero(n, 2 * k);
  std::vector<std::string> cols{"Intercept"};
  design.col(0).setOnes();
  for (int c = 1; c < k; ++c) {
    cols.push_back("Cluster" + std::to_string(c + 1));
    for (Eigen::Index i = 0; i < n; ++i) design(i, c) = clusters[i] == c ? 1.0 : 0.0;
  }
  design.col(k) = model;
  cols.push_back("ModelPredictedReward");
  for (int c = 1; c < k; ++c) {
    cols.push_back("Cluster" + std::to_string(c + 1) + ":ModelPredictedReward");
    for (Eigen::Index i = 0; i < n; ++i) design(i, k + c) = clusters[i] == c ? model[i] : 0.0;
  }
  if (names != nullptr) *names = std::move(cols);
  return design;
}

namespace {

// Relabels to 0..K-1 in order of the original label values.
IntVector compact(const IntVector& labels) {
  std::map<int, int> remap;
  for (Eigen::Index i = 0; i < labels.size(); ++i) remap.emplace(labels[i], 0);
  int next = 0;
  for (auto& [label, id] : remap) id = next++;
  IntVector out(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
  return out;
}

}  // namespace

ClusterFit fit_reward_model_with_clusters(const Vector& human, const Vector& model, const IntVector& clusters) {
  if (human.size() != model.size() || human.size() != clusters.size())
    throw InvalidArgument("fit_reward_model_with_clusters: length mismatch");
  ClusterFit out;
  IntVector labels = compact(clusters);
  while (true) {
    const int k = labels.maxCoeff() + 1;
    if (k <= 1) break;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    std::vector<Eigen::Vector2d> centroid(static_cast<std::size_t>(k), Eigen::Vector2d::Zero());
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      counts[static_cast<std::size_t>(labels[i])]++;
      centroid[static_cast<std::size_t>(labels[i])] += Eigen::Vector2d(model[i], human[i]);
    }
    for (int c = 0; c < k; ++c) centroid[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
    const auto single = std::find(counts.begin(), counts.end(), 1);
    if (single == counts.end()) break;
    const int lonely = static_cast<int>(single - counts.begin());
    int target = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == lonely) continue;
      const double d = (centroid[static_cast<std::size_t>(c)] - centroid[static_cast<std::size_t>(lonely)]).norm();
      if (d < best) {
        best = d;
        target = c;
      }
    }
    out.warnings.push_back("cluster " + std::to_string(lonely + 1) + " has a single member; merged into cluster " +
                           std::to_string(target + 1));
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      if (labels[i] == lonely) labels[i] = target;
    labels = compact(labels);
  }
  out.clusters = labels;
  if (labels.maxCoeff() == 0) {
    out.fit = fit_reward_model(human, model);
    return out;
  }
  std::vector<std::string> names;
  const Matrix design = cluster_design(model, labels, &names);
  out.fit = numerics::ols_fit(design, human, std::move(names));
  return out;
}

}  // namespace nerd::analysis

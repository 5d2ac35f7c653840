#include "nerd/envsim/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nerd/errors.hpp"
#include "nerd/numerics/stats.hpp"

namespace nerd::envsim {

void validate(const SubjectConfig& c) {
  auto range_ok = [](const std::pair<double, double>& r) {
    return std::isfinite(r.first) && std::isfinite(r.second) && r.first <= r.second;
  };
  if (c.voxels < 2) throw InvalidArgument("subject config: voxels must be >= 2");
  if (c.n_trials < 1) throw InvalidArgument("subject config: n_trials must be >= 1");
  if (!(c.sparsity > 0.0 && c.sparsity <= 1.0)) throw InvalidArgument("subject config: sparsity must be in (0, 1]");
  if (!range_ok(c.proficiency_range) || c.proficiency_range.first < 0.0 || c.proficiency_range.second > 1.0)
    throw InvalidArgument("subject config: proficiency_range must lie in [0, 1]");
  if (!range_ok(c.noise_scale_range) || c.noise_scale_range.first < 0.0)
    throw InvalidArgument("subject config: noise_scale_range must be non-negative");
  if (!range_ok(c.bias_range)) throw InvalidArgument("subject config: bad bias_range");
  if (!(std::isfinite(c.amplitude) && c.amplitude >= 0.0))
    throw InvalidArgument("subject config: amplitude must be non-negative");
}

double decode_reward(const DecoderSpec& decoder, const VoxelState& x) {
  if (decoder.weights.size() != x.size()) throw InvalidArgument("decode_reward: dimension mismatch");
  return decoder.weights.dot(x) + decoder.bias;
}

RewardModel::RewardModel(DecoderSpec decoder, double scale) : decoder_(std::move(decoder)), scale_(scale) {
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw InvalidArgument("RewardModel: scale must be positive");
}

double RewardModel::squash(double raw_value) const {
  const double z = (raw_value - decoder_.bias) / scale_;
  return 1.0 / (1.0 + std::exp(-z));
}

double RewardModel::squashed(const VoxelState& x) const { return squash(raw(x)); }

Vector RewardModel::squashed_gradient(const VoxelState& x) const {
  const double r = squashed(x);
  return decoder_.weights * (r * (1.0 - r) / scale_);
}

double reward_scale(const SyntheticSubject& subject) {
  Vector baseline(static_cast<Eigen::Index>(subject.trials.size()));
  for (std::size_t i = 0; i < subject.trials.size(); ++i)
    baseline[static_cast<Eigen::Index>(i)] = decode_reward(subject.decoder, subject.trials[i].baseline_state);
  const double sd = numerics::sample_sd(baseline);
  if (sd > 1e-12) return sd;
  const double norm = subject.decoder.weights.norm();
  return norm > 0.0 ? norm : 1.0;
}

RewardModel reward_model(const SyntheticSubject& subject) {
  return RewardModel(subject.decoder, reward_scale(subject));
}

SyntheticSubject generate_subject_with(numerics::RngStream& rng, const std::string& subject_id,
                                       const SubjectConfig& config, double proficiency, double noise_scale) {
  validate(config);
  if (!(proficiency >= 0.0 && proficiency <= 1.0)) throw InvalidArgument("generate_subject: proficiency out of [0, 1]");
  if (!(noise_scale >= 0.0)) throw InvalidArgument("generate_subject: noise_scale must be non-negative");

  SyntheticSubject s;
  s.subject_id = subject_id;
  s.voxels = config.voxels;
  s.proficiency = proficiency;
  s.noise_scale = noise_scale;

  const Eigen::Index v = config.voxels;
  s.decoder.weights = Vector::Zero(v);
  for (Eigen::Index i = 0; i < v; ++i) {
    const double w = rng.normal();
    if (rng.uniform() < config.sparsity) s.decoder.weights[i] = w;
  }
  if (s.decoder.weights.isZero(0.0)) {
    // Keep at least one active voxel.
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v)));
    s.decoder.weights[idx] = rng.normal();
    if (s.decoder.weights[idx] == 0.0) s.decoder.weights[idx] = 1.0;
  }
  s.decoder.weights /= s.decoder.weights.norm();
  s.decoder.bias = rng.uniform(config.bias_range.first, config.bias_range.second);

  const Vector shift = proficiency * config.amplitude * s.decoder.weights;
  s.trials.reserve(static_cast<std::size_t>(config.n_trials));
  for (int t = 0; t < config.n_trials; ++t) {
    TrialRecord trial;
    trial.trial_id = t;
    trial.baseline_state = rng.normal_vector(v);
    trial.achieved_state = trial.baseline_state + shift;
    if (noise_scale > 0.0) trial.achieved_state += noise_scale * rng.normal_vector(v);
    trial.achieved_reward = decode_reward(s.decoder, trial.achieved_state);
    s.trials.push_back(std::move(trial));
  }
  return s;
}

SyntheticSubject generate_subject(numerics::RngStream& rng, const std::string& subject_id,
                                  const SubjectConfig& config) {
  validate(config);
  const double proficiency = rng.uniform(config.proficiency_range.first, config.proficiency_range.second);
  const double noise = rng.uniform(config.noise_scale_range.first, config.noise_scale_range.second);
  return generate_subject_with(rng, subject_id, config, proficiency, noise);
}

Dataset generate_cohort(std::uint64_t cohort_seed, int n_subjects, const SubjectConfig& config) {
  if (n_subjects < 1) throw InvalidArgument("generate_cohort: need at least one subject");
  validate(config);
  Dataset ds;
  ds.cohort_seed = cohort_seed;
  ds.voxels = config.voxels;
  numerics::RngStream root(cohort_seed);
  for (int i = 0; i < n_subjects; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%02d", i + 1);
    auto rng = root.substream(id, "subject");
    ds.subjects.push_back(generate_subject(rng, id, config));
  }
  return ds;
}

}  // namespace nerd::envsim

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nerd/numerics/rng.hpp"
#include "nerd/types.hpp"

namespace nerd::envsim {

/// Linear decoder: R = W^T x + b.
struct DecoderSpec {
  Vector weights;
  double bias = 0.0;
};

struct TrialRecord {
  int trial_id = 0;
  VoxelState baseline_state;
  VoxelState achieved_state;
  double achieved_reward = 0.0;
};

struct SyntheticSubject {
  std::string subject_id;
  int voxels = 0;
  DecoderSpec decoder;
  std::vector<TrialRecord> trials;
  double proficiency = 0.0;
  double noise_scale = 0.0;
};

struct SubjectConfig {
  int voxels = 30;
  int n_trials = 150;
  /// Fraction of decoder weights that are nonzero.
  double sparsity = 0.3;
  std::pair<double, double> proficiency_range{0.1, 0.9};
  std::pair<double, double> noise_scale_range{0.3, 0.6};
  std::pair<double, double> bias_range{0.0, 0.0};
  /// Length of the reward-increasing shift at proficiency 1 (state units).
  double amplitude = 3.5;
};

void validate(const SubjectConfig& config);

/// Raw decoder output W^T x + b.
double decode_reward(const DecoderSpec& decoder, const VoxelState& x);

/// Training-time reward: logistic((W^T x) / scale), bounded in (0, 1) like
/// the feedback display participants saw. Holds value and gradient so both
/// the sampled and the differentiable trainers share one definition.
class RewardModel {
public:
  RewardModel(DecoderSpec decoder, double scale);

  double raw(const VoxelState& x) const { return decode_reward(decoder_, x); }
  double squashed(const VoxelState& x) const;
  /// d squashed / dx.
  Vector squashed_gradient(const VoxelState& x) const;
  /// Maps a raw decoder value to the squashed scale.
  double squash(double raw_value) const;

  const DecoderSpec& decoder() const noexcept { return decoder_; }
  double scale() const noexcept { return scale_; }

private:
  DecoderSpec decoder_;
  double scale_;
};

/// Squash scale for a subject: sample sd of the decoder output over its
/// baseline states (falls back to ||W|| when that is degenerate).
double reward_scale(const SyntheticSubject& subject);
RewardModel reward_model(const SyntheticSubject& subject);

/// Decoder weights are sparse normal draws rescaled to unit norm, so the
/// reward gain at proficiency p is p * amplitude for every subject.
SyntheticSubject generate_subject(numerics::RngStream& rng, const std::string& subject_id,
                                  const SubjectConfig& config);

/// Same as generate_subject with a fixed proficiency and noise scale.
SyntheticSubject generate_subject_with(numerics::RngStream& rng, const std::string& subject_id,
                                       const SubjectConfig& config, double proficiency, double noise_scale);

struct Dataset {
  std::uint64_t cohort_seed = 0;
  int voxels = 0;
  std::vector<SyntheticSubject> subjects;
};

/// Cohort of `n_subjects` subjects named s01, s02, ...; each drawn from its
/// own substream of `cohort_seed`.
Dataset generate_cohort(std::uint64_t cohort_seed, int n_subjects, const SubjectConfig& config);

inline constexpr int kDatasetFormatVersion = 1;

std::string serialize_dataset(const Dataset& dataset);
/// Throws ParseError (with line number) or VersionError. Verifies every
/// trial's achieved_reward against the decoder.
Dataset parse_dataset(const std::string& contents);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace nerd::envsim

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "nerd/envsim/envsim.hpp"
#include "nerd/fitting/fitting.hpp"
#include "nerd/numerics/linalg.hpp"
#include "nerd/training/training.hpp"

namespace nerd::cli {

struct AnalysisConfig {
  int n_episodes = 30;          ///< rollouts averaged per frozen model
  int voxel_clusters = 4;
  int subject_clusters = 4;
  numerics::Linkage linkage = numerics::Linkage::average;
  int rdm_trials = 8;           ///< trials in each trial-pair RDM
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int n_subjects = 24;
  envsim::SubjectConfig dataset;
  training::TrainConfig nerd;
  training::TrainConfig control;
  fitting::FitConfig fit;
  AnalysisConfig analysis;
  int jobs = 1;
};

RunConfig default_config();

nlohmann::json to_json(const RunConfig& config);

/// Overlays `patch` onto `base`. Unknown keys and wrongly typed values are
/// rejected with InvalidArgument naming the offending path.
RunConfig apply_json(const RunConfig& base, const nlohmann::json& patch);

/// Pushes the global seed into every component that draws randomness.
void propagate_seed(RunConfig& config);

/// Rejects NaN, negative or inconsistent fields.
void validate(const RunConfig& config);

RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base);

const training::TrainConfig& train_config(const RunConfig& config, training::Family family);

/// Canonical dump (sorted keys, 2-space indent, trailing newline).
std::string dump(const RunConfig& config);

}  // namespace nerd::cli

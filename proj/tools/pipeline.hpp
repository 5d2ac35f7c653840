#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace nerd::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kNumericFailure = 2, kPartial = 3 };

struct Invocation {
  RunConfig config;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> dataset;  ///< defaults to <out>/dataset.txt
  std::vector<std::string> subjects;             ///< empty = every subject
  std::vector<training::Family> families{training::Family::nerd, training::Family::control};
};

int cmd_gen_data(const Invocation& inv, std::ostream& log);
int cmd_train(const Invocation& inv, std::ostream& log);
int cmd_fit(const Invocation& inv, std::ostream& log);
int cmd_analyze(const Invocation& inv, std::ostream& log);
int cmd_report(const Invocation& inv, std::ostream& log);

/// Output layout under the run directory.
std::filesystem::path dataset_path(const Invocation& inv);
std::filesystem::path model_dir(const std::filesystem::path& out, const std::string& subject, training::Family family);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch);

/// Epochs at which a full run of `config` leaves a checkpoint.
std::vector<int> expected_checkpoint_epochs(const training::TrainConfig& config);

/// (epoch, path) of every checkpoint file in `dir`, ascending.
std::vector<std::pair<int, std::filesystem::path>> list_checkpoints(const std::filesystem::path& dir);

}  // namespace nerd::cli

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nerd/errors.hpp"
#include "nerd/util/text.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace nerd;
using namespace nerd::cli;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string subjects;
  std::string family = "both";
  std::string out;
  std::string dataset;
  std::optional<int> stride;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& item : text::split(s, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Invocation resolve(const Flags& f, const std::string& command) {
  Invocation inv;
  if (!f.out.empty()) {
    inv.out_dir = f.out;
  } else if (const char* env = std::getenv("NERD_LAB_OUT"); env != nullptr && *env != '\0') {
    inv.out_dir = env;
  } else {
    inv.out_dir = "nerd_lab_out";
  }

  // Layering: defaults < run directory config (when no file is given) < --config file < flags.
  RunConfig cfg = default_config();
  if (!f.config.empty()) {
    cfg = load_config_file(f.config, cfg);
  } else if (command != "gen-data" && fs::exists(inv.out_dir / "config.json")) {
    cfg = load_config_file(inv.out_dir / "config.json", cfg);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.stride) {
    cfg.nerd.checkpoint_stride = *f.stride;
    cfg.control.checkpoint_stride = *f.stride;
  }
  if (!f.subjects.empty()) {
    if (command == "gen-data") {
      cfg.n_subjects = static_cast<int>(text::parse_int(f.subjects));
    } else {
      inv.subjects = split_list(f.subjects);
    }
  }
  if (f.family == "both") {
    inv.families = {training::Family::nerd, training::Family::control};
  } else {
    inv.families = {training::parse_family(f.family)};
  }
  if (!f.dataset.empty()) inv.dataset = fs::path(f.dataset);
  propagate_seed(cfg);
  validate(cfg);
  inv.config = cfg;
  return inv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nerd_lab: reinforcement-trained diffusion models in a simulated neurofeedback loop"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON config file layered over the defaults");
    sub->add_option("--seed", flags.seed, "global seed");
    sub->add_option("--jobs", flags.jobs, "worker threads for subject-level work");
    sub->add_option("--subjects", flags.subjects, "gen-data: subject count; otherwise comma-separated subject ids");
    sub->add_option("--family", flags.family, "nerd, control or both")->check(CLI::IsMember({"nerd", "control", "both"}));
    sub->add_option("--out", flags.out, "run directory (default $NERD_LAB_OUT or ./nerd_lab_out)");
    sub->add_option("--dataset", flags.dataset, "dataset file (default <out>/dataset.txt)");
    sub->add_option("--checkpoint-stride", flags.stride, "epochs between checkpoints");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Invocation&, std::ostream&);
  };
  const Command commands[] = {
      {"gen-data", "generate a synthetic cohort", &cmd_gen_data},
      {"train", "train NERD and/or control models per subject (resumable)", &cmd_train},
      {"fit", "per-epoch NLL fit and best-epoch selection", &cmd_fit},
      {"analyze", "run every analysis on the frozen models", &cmd_analyze},
      {"report", "index every artifact in the run directory", &cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      const Invocation inv = resolve(flags, cmd->name);
      return cmd->run(inv, std::cout);
    } catch (const NumericFailure& e) {
      std::cerr << "nerd_lab " << cmd->name << ": numeric failure: " << e.what() << "\n";
      return kNumericFailure;
    } catch (const std::exception& e) {
      std::cerr << "nerd_lab " << cmd->name << ": error: " << e.what() << "\n";
      return kUserError;
    }
  }
  return kUserError;
}

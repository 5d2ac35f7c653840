#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "nerd/analysis/analysis.hpp"
#include "nerd/errors.hpp"
#include "nerd/report/csv.hpp"
#include "nerd/report/svg.hpp"
#include "nerd/util/text.hpp"

namespace nerd::cli {

namespace fs = std::filesystem;
using training::Family;

namespace {

void write_text(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  text::write_file_atomic(path, contents);
}

template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= n) return;
      fn(i);
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (threads <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t j = 0; j < threads; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

envsim::Dataset load_input_dataset(const Invocation& inv) {
  const fs::path path = dataset_path(inv);
  if (!fs::exists(path)) throw InvalidArgument("dataset not found: " + path.string() + " (run gen-data first)");
  try {
    return envsim::load_dataset(path);
  } catch (const ParseError& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

std::vector<const envsim::SyntheticSubject*> select_subjects(const envsim::Dataset& ds,
                                                             const std::vector<std::string>& wanted) {
  std::vector<const envsim::SyntheticSubject*> out;
  if (wanted.empty()) {
    for (const auto& s : ds.subjects) out.push_back(&s);
    return out;
  }
  for (const auto& id : wanted) {
    const auto it = std::find_if(ds.subjects.begin(), ds.subjects.end(),
                                 [&](const envsim::SyntheticSubject& s) { return s.subject_id == id; });
    if (it == ds.subjects.end()) throw InvalidArgument("unknown subject '" + id + "'");
    out.push_back(&*it);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Task {
  const envsim::SyntheticSubject* subject;
  Family family;
};

std::vector<Task> make_tasks(const std::vector<const envsim::SyntheticSubject*>& subjects,
                             const std::vector<Family>& families) {
  std::vector<Task> tasks;
  for (const auto* s : subjects)
    for (Family f : families) tasks.push_back({s, f});
  return tasks;
}

void echo_config(const Invocation& inv) { write_text(inv.out_dir / "config.json", dump(inv.config)); }

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

Vector iota_vector(Eigen::Index n, double start = 0.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = start + static_cast<double>(i);
  return v;
}

}  // namespace

fs::path dataset_path(const Invocation& inv) { return inv.dataset ? *inv.dataset : inv.out_dir / "dataset.txt"; }

fs::path model_dir(const fs::path& out, const std::string& subject, Family family) {
  return out / "train" / (subject + "_" + training::to_string(family));
}

fs::path checkpoint_path(const fs::path& dir, int epoch) {
  std::string n = std::to_string(epoch);
  if (n.size() < 6) n.insert(0, 6 - n.size(), '0');
  return dir / ("ckpt_" + n + ".txt");
}

std::vector<int> expected_checkpoint_epochs(const training::TrainConfig& c) {
  std::vector<int> epochs{0};
  for (int e = 1; e <= c.n_epochs; ++e)
    if (e % c.checkpoint_stride == 0 || e == c.n_epochs) epochs.push_back(e);
  return epochs;
}

std::vector<std::pair<int, fs::path>> list_checkpoints(const fs::path& dir) {
  std::vector<std::pair<int, fs::path>> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() != 15 || name.rfind("ckpt_", 0) != 0 || name.substr(11) != ".txt") continue;
    int epoch = 0;
    const char* first = name.data() + 5;
    const auto [ptr, ec] = std::from_chars(first, first + 6, epoch);
    if (ec != std::errc() || ptr != first + 6) continue;
    out.emplace_back(epoch, entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Invocation& inv, std::ostream& log) {
  const auto ds = envsim::generate_cohort(inv.config.seed, inv.config.n_subjects, inv.config.dataset);
  echo_config(inv);
  const fs::path path = dataset_path(inv);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  envsim::save_dataset(ds, path);
  log << "dataset: " << ds.subjects.size() << " subjects, V = " << ds.voxels << ", "
      << inv.config.dataset.n_trials << " trials each -> " << path.string() << "\n";
  return kOk;
}

// ------------------------------------------------------------------- train

int cmd_train(const Invocation& inv, std::ostream& log) {
  const auto ds = load_input_dataset(inv);
  const auto tasks = make_tasks(select_subjects(ds, inv.subjects), inv.families);
  echo_config(inv);

  struct Outcome {
    std::string message;
    int code = kOk;
  };
  std::vector<Outcome> outcomes(tasks.size());

  parallel_for(tasks.size(), inv.config.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& cfg = train_config(inv.config, task.family);
    const std::string label = task.subject->subject_id + "/" + training::to_string(task.family);
    const fs::path dir = model_dir(inv.out_dir, task.subject->subject_id, task.family);
    try {
      fs::create_directories(dir);
      std::optional<training::Checkpoint> resume;
      std::vector<training::EpochLog> logs;
      const auto existing = list_checkpoints(dir);
      if (!existing.empty()) {
        training::Checkpoint last;
        try {
          last = training::load_checkpoint(existing.back().second);
        } catch (const ParseError& e) {
          throw InvalidArgument(existing.back().second.string() + ": " + e.what());
        }
        if (last.config_hash != training::config_hash(cfg))
          throw InvalidArgument(dir.string() + " holds checkpoints from a different config");
        const fs::path log_file = dir / "log.csv";
        if (fs::exists(log_file)) {
          for (const auto& l : training::parse_epoch_log_csv(text::read_file(log_file)))
            if (l.epoch <= last.epoch) logs.push_back(l);
        }
        if (last.epoch >= cfg.n_epochs) {
          outcomes[i].message = label + ": up to date (epoch " + std::to_string(last.epoch) + ")";
          return;
        }
        resume = std::move(last);
      }
      training::TrainObserver observer;
      observer.on_epoch = [&](const training::EpochLog& l) { logs.push_back(l); };
      observer.on_checkpoint = [&](const training::Checkpoint& cp) {
        training::save_checkpoint(cp, checkpoint_path(dir, cp.epoch));
        write_text(dir / "log.csv", training::epoch_log_csv(logs));
      };
      const int from = resume ? resume->epoch : 0;
      training::train(task.family, *task.subject, cfg, resume ? &*resume : nullptr, observer);
      std::ostringstream msg;
      msg << label << ": epochs " << from << " -> " << cfg.n_epochs;
      if (!logs.empty()) msg << ", final mean reward " << text::format_double(logs.back().mean_reward);
      outcomes[i].message = msg.str();
    } catch (const NumericFailure& e) {
      outcomes[i] = {label + ": numeric failure: " + e.what(), kNumericFailure};
    } catch (const std::exception& e) {
      outcomes[i] = {label + ": " + e.what(), kUserError};
    }
  });

  int code = kOk;
  std::vector<std::string> failed;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    log << outcomes[i].message << "\n";
    if (outcomes[i].code != kOk) {
      failed.push_back(tasks[i].subject->subject_id + "/" + training::to_string(tasks[i].family));
      code = std::max(code, outcomes[i].code);
    }
  }
  if (!failed.empty()) {
    log << "failed:";
    for (const auto& f : failed) log << " " << f;
    log << "\n";
  }
  return code;
}

// --------------------------------------------------------------------- fit

namespace {

std::vector<fitting::FitResult> load_all_fits(const fs::path& fit_dir) {
  std::vector<fitting::FitResult> fits;
  if (!fs::is_directory(fit_dir)) return fits;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(fit_dir))
    if (entry.path().extension() == ".fit") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) fits.push_back(fitting::load_fit(f));
  return fits;
}

}  // namespace

int cmd_fit(const Invocation& inv, std::ostream& log) {
  const auto ds = load_input_dataset(inv);
  const auto tasks = make_tasks(select_subjects(ds, inv.subjects), inv.families);
  echo_config(inv);

  std::vector<std::string> gaps;
  for (const auto& task : tasks) {
    const auto& cfg = train_config(inv.config, task.family);
    const fs::path dir = model_dir(inv.out_dir, task.subject->subject_id, task.family);
    std::set<int> present;
    for (const auto& [epoch, path] : list_checkpoints(dir)) present.insert(epoch);
    std::vector<int> missing;
    for (int e : expected_checkpoint_epochs(cfg))
      if (!present.count(e)) missing.push_back(e);
    if (!missing.empty()) {
      gaps.push_back(task.subject->subject_id + "/" + training::to_string(task.family) + " missing epochs " +
                     (missing.size() > 12 ? std::to_string(missing.size()) + " checkpoints (first " +
                                                std::to_string(missing.front()) + ")"
                                          : join_ints(missing)));
    }
  }
  if (!gaps.empty()) {
    for (const auto& g : gaps) log << "error: " << g << "\n";
    throw InvalidArgument("checkpoints missing for " + std::to_string(gaps.size()) + " model(s); run train first");
  }

  const fs::path fit_dir = inv.out_dir / "fit";
  fs::create_directories(fit_dir);
  std::vector<std::string> messages(tasks.size());
  std::vector<int> codes(tasks.size(), kOk);
  parallel_for(tasks.size(), inv.config.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& cfg = train_config(inv.config, task.family);
    const std::string label = task.subject->subject_id + "/" + training::to_string(task.family);
    const fs::path dir = model_dir(inv.out_dir, task.subject->subject_id, task.family);
    try {
      std::vector<training::Checkpoint> cps;
      for (int e : expected_checkpoint_epochs(cfg)) {
        const fs::path p = checkpoint_path(dir, e);
        try {
          cps.push_back(training::load_checkpoint(p));
        } catch (const ParseError& err) {
          throw InvalidArgument(p.string() + ": " + err.what());
        }
      }
      const auto fit = fitting::fit_subject(*task.subject, cps, cfg.schedule(), inv.config.fit);
      fitting::save_fit(fit, fit_dir);
      messages[i] = label + ": e* = " + std::to_string(fit.e_star) + ", min NLL " + text::format_double(fit.min_nll);
    } catch (const NumericFailure& e) {
      messages[i] = label + ": numeric failure: " + e.what();
      codes[i] = kNumericFailure;
    } catch (const std::exception& e) {
      messages[i] = label + ": " + e.what();
      codes[i] = kUserError;
    }
  });
  int code = kOk;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    log << messages[i] << "\n";
    code = std::max(code, codes[i]);
  }

  // Cohort-level summaries over every fit present in the run directory.
  const auto fits = load_all_fits(fit_dir);
  report::CsvWriter summary({"subject", "family", "e_star", "e_star_index", "min_nll"});
  std::map<std::string, std::map<Family, double>> by_subject;
  std::map<Family, std::vector<report::Series>> curves;
  for (const auto& f : fits) {
    summary.cell(f.subject_id).cell(training::to_string(f.family)).cell(f.e_star).cell(f.e_star_index).cell(f.min_nll);
    summary.end_row();
    by_subject[f.subject_id][f.family] = f.min_nll;
    Vector epochs(static_cast<Eigen::Index>(f.epochs.size()));
    for (std::size_t k = 0; k < f.epochs.size(); ++k) epochs[static_cast<Eigen::Index>(k)] = f.epochs[k];
    curves[f.family].push_back({f.subject_id, epochs, f.per_epoch_mean_nll, {}});
  }
  write_text(fit_dir / "fit_summary.csv", summary.str());
  for (const auto& [family, series] : curves) {
    write_text(fit_dir / ("nll_" + training::to_string(family) + ".svg"),
               report::line_plot("Mean trial NLL per checkpoint (" + training::to_string(family) + ")", "epoch",
                                 "NLL", series));
  }

  std::vector<double> nerd_nll, control_nll;
  for (const auto& [subject, m] : by_subject) {
    if (m.count(Family::nerd) && m.count(Family::control)) {
      nerd_nll.push_back(m.at(Family::nerd));
      control_nll.push_back(m.at(Family::control));
    }
  }
  report::CsvWriter ttest({"n", "dof", "t", "p_value", "mean_nll_nerd", "mean_nll_control"});
  if (nerd_nll.size() >= 2) {
    const Vector a = to_vector(nerd_nll), b = to_vector(control_nll);
    try {
      const auto t = numerics::paired_t_test(a, b);
      ttest.cell(static_cast<long long>(a.size())).cell(static_cast<long long>(t.dof)).cell(t.t).cell(t.p).cell(a.mean()).cell(b.mean());
      ttest.end_row();
      log << "paired t-test on min NLL (nerd - control): t(" << t.dof << ") = " << text::format_double(t.t)
          << ", p = " << text::format_double(t.p) << "\n";
    } catch (const DegenerateInput& e) {
      log << "warning: paired t-test skipped: " << e.what() << "\n";
    }
  } else {
    log << "warning: paired t-test needs both families for at least two subjects\n";
  }
  write_text(fit_dir / "nll_ttest.csv", ttest.str());
  return code;
}

// ----------------------------------------------------------------- analyze

namespace {

struct SubjectAnalysis {
  bool ok = false;
  std::string error;
  int e_star = 0;
  analysis::RewardTrajectory squashed;
  analysis::RewardTrajectory raw;
  double human_squashed = 0.0;
  double human_raw = 0.0;
  analysis::SubjectTrajectory pcs;
  IntVector voxel_labels;
  std::vector<training::EpochLog> logs;
};

std::vector<std::string> step_labels(int num_steps) {
  std::vector<std::string> labels;
  for (int t = num_steps; t >= 0; --t) labels.push_back("t" + std::to_string(t));
  return labels;
}

SubjectAnalysis analyze_subject(const Invocation& inv, const envsim::SyntheticSubject& subject, Family family,
                                const fitting::FitResult& fit, const fs::path& adir) {
  SubjectAnalysis res;
  const auto& cfg = train_config(inv.config, family);
  const auto& acfg = inv.config.analysis;
  const auto schedule = cfg.schedule();
  const int T = schedule.num_steps();
  const bool stochastic = family == Family::nerd;
  const std::string fam = training::to_string(family);
  const std::string sid = subject.subject_id;
  const fs::path dir = model_dir(inv.out_dir, sid, family);

  const auto cp = training::load_checkpoint(checkpoint_path(dir, fit.e_star));
  res.e_star = fit.e_star;
  if (fs::exists(dir / "log.csv")) res.logs = training::parse_epoch_log_csv(text::read_file(dir / "log.csv"));

  const numerics::RngStream root(acfg.seed);
  const auto reward = envsim::reward_model(subject);
  const diffusion::RewardFn squashed_fn = [&](const VoxelState& x) { return reward.squashed(x); };
  const diffusion::RewardFn raw_fn = [&](const VoxelState& x) { return reward.raw(x); };

  {
    auto rng = root.substream(sid, "analysis-" + fam + "-starts");
    const auto starts = analysis::trial_starts(subject, schedule, cfg.start_mode, acfg.n_episodes, rng);
    auto rng_sq = root.substream(sid, "analysis-" + fam + "-trajectory");
    res.squashed = analysis::reward_trajectory(cp.params, starts, schedule, squashed_fn, stochastic, rng_sq);
    auto rng_raw = root.substream(sid, "analysis-" + fam + "-trajectory");
    res.raw = analysis::reward_trajectory(cp.params, starts, schedule, raw_fn, stochastic, rng_raw);
  }
  for (const auto& t : subject.trials) {
    res.human_squashed += reward.squashed(t.achieved_state);
    res.human_raw += t.achieved_reward;
  }
  res.human_squashed /= static_cast<double>(subject.trials.size());
  res.human_raw /= static_cast<double>(subject.trials.size());

  // One episode: stepwise RDM and MDS of the states across denoising.
  {
    auto rng = root.substream(sid, "analysis-" + fam + "-episode");
    const auto start = diffusion::episode_start(subject.trials.front().baseline_state, schedule, cfg.start_mode, rng);
    const auto episode = diffusion::run_episode(cp.params, start, schedule, squashed_fn, rng, stochastic);
    const auto rdm = analysis::stepwise_rdm(episode);
    const std::string base = "rdm_stepwise-" + fam + "_" + sid;
    write_text(adir / (base + ".csv"), report::matrix_csv(rdm.dist, rdm.labels));
    write_text(adir / (base + ".svg"), report::heatmap("Step-wise RDM " + sid + " (" + fam + ")", rdm.dist, rdm.labels));

    const Matrix xy = analysis::mds_embed(episode.states);
    report::CsvWriter csv({"step", "t", "x", "y"});
    for (Eigen::Index k = 0; k < xy.rows(); ++k) {
      csv.cell(static_cast<long long>(k)).cell(static_cast<long long>(T - k)).cell(xy(k, 0)).cell(xy(k, 1));
      csv.end_row();
    }
    const std::string mds = "mds-" + fam + "_" + sid;
    write_text(adir / (mds + ".csv"), csv.str());
    write_text(adir / (mds + ".svg"),
               report::scatter_plot("MDS of states across denoising " + sid + " (" + fam + ")", "dim 1", "dim 2",
                                    {{"states", xy.col(0), xy.col(1), {}}}));
  }

  // Trial-pair RDMs at every step.
  {
    auto rng = root.substream(sid, "analysis-" + fam + "-trialpair");
    const int n = std::min<int>(acfg.rdm_trials, static_cast<int>(subject.trials.size()));
    std::vector<diffusion::DenoisingEpisode> episodes;
    std::vector<std::string> labels;
    for (int i = 0; i < n; ++i) {
      const auto& trial = subject.trials[static_cast<std::size_t>(i)];
      const auto start = diffusion::episode_start(trial.baseline_state, schedule, cfg.start_mode, rng);
      episodes.push_back(diffusion::run_episode(cp.params, start, schedule, {}, rng, stochastic));
      labels.push_back("trial" + std::to_string(trial.trial_id));
    }
    report::CsvWriter csv({"step", "t", "row", "col", "value"});
    const std::vector<int> shown{0, T / 2, T};
    for (int k = 0; k <= T; ++k) {
      std::vector<VoxelState> states;
      for (const auto& ep : episodes) states.push_back(ep.states[static_cast<std::size_t>(k)]);
      const auto rdm = analysis::trialpair_rdm(states, labels);
      for (Eigen::Index r = 0; r < rdm.dist.rows(); ++r)
        for (Eigen::Index c = 0; c < rdm.dist.cols(); ++c) {
          csv.cell(static_cast<long long>(k)).cell(static_cast<long long>(T - k)).cell(labels[static_cast<std::size_t>(r)]);
          csv.cell(labels[static_cast<std::size_t>(c)]).cell(rdm.dist(r, c));
          csv.end_row();
        }
      if (std::find(shown.begin(), shown.end(), k) != shown.end()) {
        write_text(adir / ("rdm_trialpair-" + fam + "_" + sid + "_t" + std::to_string(T - k) + ".svg"),
                   report::heatmap("Trial-pair RDM at t = " + std::to_string(T - k) + ", " + sid + " (" + fam + ")",
                                   rdm.dist, rdm.labels));
      }
    }
    write_text(adir / ("rdm_trialpair-" + fam + "_" + sid + ".csv"), csv.str());
  }

  // Learned noise read-out, voxel clusters and the two-stage PCA path.
  {
    auto rng = root.substream(sid, "analysis-" + fam + "-noise");
    const auto set = analysis::extract_noise_trajectories(cp.params, subject, schedule, family, acfg.n_episodes,
                                                          cfg.start_mode, stochastic, rng);
    report::CsvWriter csv({"voxel", "step", "t", "mu", "sigma", "raw_mu", "mu_star", "sigma_star"});
    for (Eigen::Index v = 0; v < set.mu.rows(); ++v)
      for (Eigen::Index k = 0; k < set.mu.cols(); ++k) {
        csv.cell(static_cast<long long>(v)).cell(static_cast<long long>(k)).cell(static_cast<long long>(T - k));
        csv.cell(set.mu(v, k)).cell(set.sigma(v, k)).cell(set.raw_mu(v, k)).cell(set.mu_star(v, k));
        csv.cell(set.sigma_star(v, k));
        csv.end_row();
      }
    const std::string base = "noise-" + fam + "_" + sid;
    write_text(adir / (base + ".csv"), csv.str());
    std::vector<std::string> vlabels;
    for (Eigen::Index v = 0; v < set.mu.rows(); ++v) vlabels.push_back("v" + std::to_string(v));
    write_text(adir / (base + "_mu.svg"),
               report::heatmap("Normalized mu (voxel x step) " + sid + " (" + fam + ")", set.mu_star, vlabels));
    write_text(adir / (base + "_sigma.svg"),
               report::heatmap("Normalized sigma (voxel x step) " + sid + " (" + fam + ")", set.sigma_star, vlabels));
    auto krng = root.substream(sid, "analysis-" + fam + "-kmeans");
    const auto k = std::min<Eigen::Index>(acfg.voxel_clusters, set.mu.rows());
    res.voxel_labels = analysis::cluster_voxels(set, k, krng);
    res.pcs = analysis::two_stage_pca(set);
  }
  res.ok = true;
  return res;
}

struct FamilyReport {
  std::vector<std::string> lines;
  std::vector<std::string> warnings;
  bool have_regression = false;
  double r2 = 0.0;
  double r2_clusters = 0.0;
};

}  // namespace

int cmd_analyze(const Invocation& inv, std::ostream& log) {
  const auto ds = load_input_dataset(inv);
  const auto subjects = select_subjects(ds, inv.subjects);
  echo_config(inv);
  const fs::path adir = inv.out_dir / "analysis";
  fs::create_directories(adir);

  const auto fits = load_all_fits(inv.out_dir / "fit");
  std::map<std::pair<std::string, Family>, const fitting::FitResult*> fit_index;
  for (const auto& f : fits) fit_index[{f.subject_id, f.family}] = &f;

  std::vector<std::string> warnings;
  std::ostringstream doc;
  doc << "# NERD lab analysis summary\n\n";
  doc << "Subjects: " << subjects.size() << ". Configuration: `config.json` (train hash nerd "
      << training::config_hash(inv.config.nerd) << ", control " << training::config_hash(inv.config.control)
      << ").\n\n";

  report::CsvWriter traj_csv({"subject", "family", "step", "mean", "std"});
  report::CsvWriter traj_raw_csv({"subject", "family", "step", "mean", "std"});
  report::CsvWriter pca_csv({"subject", "family", "pc", "ratio"});
  report::CsvWriter path_csv({"subject", "family", "step", "t", "pc1", "pc2", "pc3"});
  report::CsvWriter cluster_csv({"kind", "family", "subject", "item", "cluster"});
  report::CsvWriter reg_csv({"family", "model", "scale", "term", "beta", "std_error", "t_stat", "p_value", "r_squared", "n"});
  report::CsvWriter curve_csv({"subject", "family", "epoch", "mean_loss", "mean_reward"});

  std::map<Family, FamilyReport> reports;
  for (Family family : inv.families) {
    const std::string fam = training::to_string(family);
    auto& rep = reports[family];
    std::vector<const envsim::SyntheticSubject*> usable;
    for (const auto* s : subjects) {
      if (fit_index.count({s->subject_id, family})) {
        usable.push_back(s);
      } else {
        rep.warnings.push_back(s->subject_id + "/" + fam + ": no fit result, subject skipped");
      }
    }
    std::vector<SubjectAnalysis> results(usable.size());
    parallel_for(usable.size(), inv.config.jobs, [&](std::size_t i) {
      try {
        results[i] = analyze_subject(inv, *usable[i], family, *fit_index.at({usable[i]->subject_id, family}), adir);
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].error = e.what();
      }
    });

    std::vector<const envsim::SyntheticSubject*> done;
    std::vector<SubjectAnalysis*> ok;
    for (std::size_t i = 0; i < usable.size(); ++i) {
      if (!results[i].ok) {
        rep.warnings.push_back(usable[i]->subject_id + "/" + fam + ": analysis failed: " + results[i].error);
        continue;
      }
      done.push_back(usable[i]);
      ok.push_back(&results[i]);
    }

    doc << "## " << fam << " models\n\n";
    if (done.empty()) {
      rep.warnings.push_back(fam + ": no analyzable subjects, every section skipped");
      doc << "No analyzable subjects.\n\n";
      continue;
    }

    // Training curves and reward trajectories.
    std::vector<report::Series> loss_series, reward_series, traj_series;
    for (std::size_t i = 0; i < done.size(); ++i) {
      const auto& sid = done[i]->subject_id;
      const auto& r = *ok[i];
      Vector ep(static_cast<Eigen::Index>(r.logs.size())), loss(ep.size()), rew(ep.size());
      for (std::size_t k = 0; k < r.logs.size(); ++k) {
        const auto& l = r.logs[k];
        ep[static_cast<Eigen::Index>(k)] = l.epoch;
        loss[static_cast<Eigen::Index>(k)] = l.mean_loss;
        rew[static_cast<Eigen::Index>(k)] = l.mean_reward;
        curve_csv.cell(sid).cell(fam).cell(l.epoch).cell(l.mean_loss).cell(l.mean_reward);
        curve_csv.end_row();
      }
      loss_series.push_back({sid, ep, loss, {}});
      reward_series.push_back({sid, ep, rew, {}});
      for (Eigen::Index k = 0; k < r.squashed.mean.size(); ++k) {
        traj_csv.cell(sid).cell(fam).cell(static_cast<long long>(k)).cell(r.squashed.mean[k]).cell(r.squashed.std[k]);
        traj_csv.end_row();
        traj_raw_csv.cell(sid).cell(fam).cell(static_cast<long long>(k)).cell(r.raw.mean[k]).cell(r.raw.std[k]);
        traj_raw_csv.end_row();
      }
      traj_series.push_back({sid, iota_vector(r.squashed.mean.size()), r.squashed.mean, r.squashed.std});
    }
    write_text(adir / ("training_loss-" + fam + ".svg"),
               report::line_plot("Training loss (" + fam + ")", "epoch", "mean loss", loss_series));
    write_text(adir / ("training_reward-" + fam + ".svg"),
               report::line_plot("Training reward (" + fam + ")", "epoch", "mean reward", reward_series));
    write_text(adir / ("reward_trajectories-" + fam + ".svg"),
               report::line_plot("Reward across denoising steps (" + fam + ")", "denoising step", "reward",
                                 traj_series));
    doc << "### Training curves\n\n![loss](training_loss-" << fam << ".svg)\n![reward](training_reward-" << fam
        << ".svg)\n\n";
    doc << "### Reward across denoising\n\n![trajectories](reward_trajectories-" << fam << ".svg)\n\n";
    doc << "| subject | e* | start reward | final reward | steps to 90% |\n|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < done.size(); ++i) {
      const auto& m = ok[i]->squashed.mean;
      doc << "| " << done[i]->subject_id << " | " << ok[i]->e_star << " | " << text::format_double(m[0]) << " | "
          << text::format_double(m[m.size() - 1]) << " | " << analysis::steps_to_fraction(m) << " |\n";
    }
    doc << "\n### Representational geometry\n\n";
    for (const auto* s : done) {
      doc << "- " << s->subject_id << ": [step-wise RDM](rdm_stepwise-" << fam << "_" << s->subject_id
          << ".svg), [trial-pair RDMs](rdm_trialpair-" << fam << "_" << s->subject_id << ".csv), [MDS](mds-" << fam
          << "_" << s->subject_id << ".svg), [mu](noise-" << fam << "_" << s->subject_id << "_mu.svg), [sigma](noise-"
          << fam << "_" << s->subject_id << "_sigma.svg)\n";
    }
    doc << "\n";

    // Voxel clusters, PCA paths, subject trajectory RDM.
    std::vector<analysis::SubjectTrajectory> trajectories;
    for (std::size_t i = 0; i < done.size(); ++i) {
      const auto& sid = done[i]->subject_id;
      for (Eigen::Index v = 0; v < ok[i]->voxel_labels.size(); ++v) {
        cluster_csv.cell("voxel").cell(fam).cell(sid).cell("v" + std::to_string(v)).cell(ok[i]->voxel_labels[v]);
        cluster_csv.end_row();
      }
      trajectories.push_back(ok[i]->pcs);
    }
    analysis::align_trajectory_signs(trajectories);
    for (const auto& tr : trajectories) {
      for (Eigen::Index p = 0; p < tr.explained_variance_ratio.size(); ++p) {
        pca_csv.cell(tr.subject_id).cell(fam).cell(static_cast<long long>(p + 1)).cell(tr.explained_variance_ratio[p]);
        pca_csv.end_row();
      }
      const auto T = tr.pc_path.rows();
      for (Eigen::Index k = 0; k < T; ++k) {
        path_csv.cell(tr.subject_id).cell(fam).cell(static_cast<long long>(k)).cell(static_cast<long long>(T - k));
        path_csv.cell(tr.pc_path(k, 0)).cell(tr.pc_path(k, 1)).cell(tr.pc_path(k, 2));
        path_csv.end_row();
      }
    }
    {
      Vector pc1(static_cast<Eigen::Index>(trajectories.size()));
      for (std::size_t i = 0; i < trajectories.size(); ++i)
        pc1[static_cast<Eigen::Index>(i)] = trajectories[i].explained_variance_ratio[0];
      doc << "### Noise trajectories\n\nStage-2 PC1 explained variance: mean " << text::format_double(pc1.mean());
      if (pc1.size() >= 2) doc << ", sd " << text::format_double(numerics::sample_sd(pc1));
      doc << ".\n\n";
    }

    IntVector subject_labels;
    bool have_clusters = false;
    if (trajectories.size() >= 2) {
      const auto rdm = analysis::subject_trajectory_rdm(trajectories);
      const std::string base = "rdm_trajectory-" + fam + "_cohort";
      write_text(adir / (base + ".csv"), report::matrix_csv(rdm.dist, rdm.labels));
      write_text(adir / (base + ".svg"), report::heatmap("Subject trajectory RDM (" + fam + ")", rdm.dist, rdm.labels));
      const auto k = std::min<Eigen::Index>(inv.config.analysis.subject_clusters, rdm.dist.rows());
      const auto tree = analysis::cluster_subjects(rdm, k, inv.config.analysis.linkage);
      subject_labels = tree.labels;
      have_clusters = true;
      write_text(adir / ("dendrogram-" + fam + ".svg"),
                 report::dendrogram("Subject clusters (" + fam + ")", tree, rdm.labels));
      for (std::size_t i = 0; i < done.size(); ++i) {
        cluster_csv.cell("subject").cell(fam).cell(done[i]->subject_id).cell(done[i]->subject_id);
        cluster_csv.cell(subject_labels[static_cast<Eigen::Index>(i)]);
        cluster_csv.end_row();
      }
      doc << "![trajectory RDM](" << base << ".svg)\n![dendrogram](dendrogram-" << fam << ".svg)\n\n";
    } else {
      rep.warnings.push_back(fam + ": subject trajectory RDM and clustering need at least two subjects");
    }

    // Regression of human mean reward on model predicted reward.
    doc << "### Human reward regression\n\n";
    if (done.size() < 3) {
      rep.warnings.push_back(fam + ": regression needs at least three subjects");
      doc << "Skipped (fewer than three subjects).\n\n";
      continue;
    }
    for (const std::string scale : {"squashed", "raw"}) {
      const auto n = static_cast<Eigen::Index>(done.size());
      Vector human(n), model(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = *ok[static_cast<std::size_t>(i)];
        human[i] = scale == "squashed" ? r.human_squashed : r.human_raw;
        const auto& m = scale == "squashed" ? r.squashed.mean : r.raw.mean;
        model[i] = m[m.size() - 1];
      }
      auto emit = [&](const numerics::LinearFit& fit, const std::string& model_name) {
        for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          reg_csv.cell(fam).cell(model_name).cell(scale).cell(fit.design_column_names[j]).cell(fit.coefficients[jj]);
          reg_csv.cell(fit.std_errors[jj]).cell(fit.t_stats[jj]).cell(fit.p_values[jj]).cell(fit.r_squared);
          reg_csv.cell(static_cast<long long>(n));
          reg_csv.end_row();
        }
      };
      try {
        const auto simple = analysis::fit_reward_model(human, model);
        emit(simple, "y~x");
        double slope = simple.coefficients[1], intercept = simple.coefficients[0];
        write_text(adir / ("regression-" + fam + "_" + scale + ".svg"),
                   report::scatter_plot("Human vs model reward (" + fam + ", " + scale + ")", "model predicted reward",
                                        "human mean reward", {{"subjects", model, human, {}}}, &intercept, &slope));
        if (scale == "squashed") {
          rep.have_regression = true;
          rep.r2 = simple.r_squared;
        }
        doc << "**" << scale << "** y ~ x: R2 = " << text::format_double(simple.r_squared) << ", slope "
            << text::format_double(slope) << " (p = " << text::format_double(simple.p_values[1]) << ")\n\n";
        if (have_clusters) {
          const auto cf = analysis::fit_reward_model_with_clusters(human, model, subject_labels);
          for (const auto& w : cf.warnings) rep.warnings.push_back(fam + ": " + w);
          emit(cf.fit, "y~x1*x2");
          if (scale == "squashed") rep.r2_clusters = cf.fit.r_squared;
          doc << "**" << scale << "** y ~ x1 * x2: R2 = " << text::format_double(cf.fit.r_squared)
              << (cf.fit.r_squared + 1e-12 >= simple.r_squared ? " (not below y ~ x)" : " (BELOW y ~ x)") << "\n\n";
          doc << "| term | beta | p |\n|---|---|---|\n";
          for (std::size_t j = 0; j < cf.fit.coefficients.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            doc << "| " << cf.fit.design_column_names[j] << " | " << text::format_double(cf.fit.coefficients[jj])
                << " | " << text::format_double(cf.fit.p_values[jj]) << " |\n";
          }
          doc << "\n![regression](regression-" << fam << "_" << scale << ".svg)\n\n";
        }
      } catch (const std::exception& e) {
        rep.warnings.push_back(fam + " (" + scale + "): regression failed: " + e.what());
      }
    }
  }

  write_text(adir / "reward_trajectories.csv", traj_csv.str());
  write_text(adir / "reward_trajectories_raw.csv", traj_raw_csv.str());
  write_text(adir / "training_curves.csv", curve_csv.str());
  write_text(adir / "pca_variance.csv", pca_csv.str());
  write_text(adir / "pca_paths.csv", path_csv.str());
  write_text(adir / "clusters.csv", cluster_csv.str());
  write_text(adir / "regression_summary.csv", reg_csv.str());

  doc << "## Model comparison\n\n";
  if (reports.count(Family::nerd) && reports.count(Family::control) && reports[Family::nerd].have_regression &&
      reports[Family::control].have_regression) {
    const double a = reports[Family::nerd].r2, b = reports[Family::control].r2;
    doc << "R2 ordering (squashed reward, y ~ x): nerd " << text::format_double(a) << (a > b ? " > " : " <= ")
        << "control " << text::format_double(b) << "\n\n";
  } else {
    doc << "R2 ordering: unavailable (regression missing for at least one family)\n\n";
  }
  for (const auto& [family, rep] : reports)
    for (const auto& w : rep.warnings) warnings.push_back(w);
  doc << "## Warnings\n\n";
  if (warnings.empty()) doc << "None.\n";
  for (const auto& w : warnings) doc << "- " << w << "\n";
  write_text(adir / "summary.md", doc.str());

  for (const auto& w : warnings) log << "warning: " << w << "\n";
  log << "analysis written to " << adir.string() << "\n";
  return warnings.empty() ? kOk : kPartial;
}

// ------------------------------------------------------------------ report

int cmd_report(const Invocation& inv, std::ostream& log) {
  const fs::path out = inv.out_dir;
  std::vector<fs::path> files;
  if (fs::is_directory(out)) {
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), out);
      if (rel == "index.md") continue;
      const std::string ext = rel.extension().string();
      if (ext == ".tmp") continue;
      files.push_back(rel);
    }
  }
  std::sort(files.begin(), files.end());

  std::ostringstream doc;
  doc << "# NERD lab run index\n\n";
  const fs::path cfg = out / "config.json";
  if (fs::exists(cfg)) {
    doc << "Config hash: " << text::hex64(text::fnv1a(text::read_file(cfg))) << " (config.json)\n\n";
  } else {
    doc << "Config hash: none (config.json missing)\n\n";
  }
  if (files.empty()) {
    log << "warning: no artifacts under " << out.string() << "\n";
    doc << "No artifacts.\n";
  } else {
    std::map<std::string, std::vector<fs::path>> groups;
    for (const auto& f : files) {
      const auto ext = f.extension().string();
      if (ext == ".csv" || ext == ".svg" || ext == ".md" || ext == ".json" || ext == ".fit" ||
          f.filename() == "dataset.txt")
        groups[f.begin()->string() == f.filename().string() ? std::string(".") : f.begin()->string()].push_back(f);
    }
    std::size_t ckpts = 0;
    for (const auto& f : files)
      if (f.filename().string().rfind("ckpt_", 0) == 0) ++ckpts;
    for (const auto& [group, list] : groups) {
      doc << "## " << (group == "." ? std::string("run root") : group) << "\n\n| file | bytes | fnv1a |\n|---|---|---|\n";
      for (const auto& f : list) {
        const std::string body = text::read_file(out / f);
        doc << "| " << f.generic_string() << " | " << body.size() << " | " << text::hex64(text::fnv1a(body)) << " |\n";
      }
      doc << "\n";
    }
    doc << "Checkpoint files: " << ckpts << ".\n";
  }
  fs::create_directories(out);
  write_text(out / "index.md", doc.str());
  log << "index written to " << (out / "index.md").string() << " (" << files.size() << " files scanned)\n";
  return kOk;
}

}  // namespace nerd::cli

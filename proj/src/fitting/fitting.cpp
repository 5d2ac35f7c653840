#include "nerd/fitting/fitting.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "nerd/errors.hpp"
#include "nerd/numerics/stats.hpp"
#include "nerd/util/text.hpp"

namespace nerd::fitting {

void validate(const FitConfig& c) {
  if (c.n_samples < 2) throw InvalidArgument("fit config: n_samples must be >= 2");
  if (!(c.variance_floor > 0.0) || !std::isfinite(c.variance_floor))
    throw InvalidArgument("fit config: variance_floor must be > 0");
  if (c.max_trials < 0) throw InvalidArgument("fit config: max_trials must be >= 0");
}

double diagonal_gaussian_nll(const Matrix& samples, const VoxelState& target, double variance_floor) {
  if (samples.rows() < 2) throw InvalidArgument("diagonal_gaussian_nll: need at least two samples");
  if (samples.cols() != target.size()) throw InvalidArgument("diagonal_gaussian_nll: dimension mismatch");
  const Vector mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - mean.transpose();
  const Vector var = centered.colwise().squaredNorm() / static_cast<double>(samples.rows() - 1);
  double total = 0.0;
  for (Eigen::Index v = 0; v < target.size(); ++v) {
    const double sd = std::sqrt(std::max(var[v], variance_floor));
    total -= numerics::gaussian_logpdf(target[v], mean[v], sd);
  }
  return total / static_cast<double>(target.size());
}

Matrix sample_final_states(const policy::PolicyParams& params, const VoxelState& start,
                           const diffusion::NoiseSchedule& schedule, int n_samples, numerics::RngStream& rng) {
  const int steps = schedule.num_steps();
  const Eigen::Index v = params.state_dim();
  if (start.size() != v) throw InvalidArgument("sample_final_states: start state dimension mismatch");
  if (n_samples < 1) throw InvalidArgument("sample_final_states: need at least one sample");
  // Draw in the order one episode per sample would, then roll all samples
  // forward together (one column each).
  Matrix noise(v * steps, n_samples);
  for (int i = 0; i < n_samples; ++i)
    for (Eigen::Index j = 0; j < v * steps; ++j) noise(j, i) = rng.normal();

  Matrix x = start.replicate(1, n_samples);
  Matrix hidden(params.hidden_size(), n_samples), raw(2 * v, n_samples);
  for (int k = 0; k < steps; ++k) {
    const double time = static_cast<double>(steps - k) / static_cast<double>(steps);
    hidden.noalias() = params.w1.leftCols(v) * x;
    hidden.colwise() += params.b1 + time * params.w1.col(v);
    hidden = hidden.array().tanh();
    raw.noalias() = params.w2 * hidden;
    raw.colwise() += params.b2;
    const Eigen::ArrayXXd z = raw.bottomRows(v).array();
    const Eigen::ArrayXXd sigma = z.max(0.0) + (-z.abs()).exp().log1p() + params.sigma_min;
    x = raw.topRows(v).array() + sigma * noise.middleRows(k * v, v).array();
    if (!x.allFinite()) throw NumericFailure("non-finite policy output", steps - k);
  }
  return x.transpose();
}

double trial_nll(const policy::PolicyParams& params, const envsim::SyntheticSubject& subject,
                 std::size_t trial_index, const diffusion::NoiseSchedule& schedule, const FitConfig& config,
                 numerics::RngStream& rng) {
  validate(config);
  if (params.state_dim() != subject.voxels) throw InvalidArgument("trial_nll: checkpoint/subject dimension mismatch");
  const auto& trial = subject.trials.at(trial_index);
  const VoxelState start = diffusion::episode_start(trial.baseline_state, schedule, config.start_mode, rng);
  const Matrix samples = sample_final_states(params, start, schedule, config.n_samples, rng);
  return diagonal_gaussian_nll(samples, trial.achieved_state, config.variance_floor);
}

std::pair<int, double> select_best_epoch(const Vector& nll) {
  if (nll.size() == 0) throw InvalidArgument("select_best_epoch: empty input");
  if (!nll.allFinite()) throw InvalidArgument("select_best_epoch: non-finite NLL");
  int best = 0;
  for (Eigen::Index i = 1; i < nll.size(); ++i)
    if (nll[i] < nll[best]) best = static_cast<int>(i);
  return {best, nll[best]};
}

FitResult fit_subject(const envsim::SyntheticSubject& subject, const std::vector<training::Checkpoint>& checkpoints,
                      const diffusion::NoiseSchedule& schedule, const FitConfig& config) {
  validate(config);
  if (checkpoints.empty()) throw InvalidArgument("fit_subject: no checkpoints");
  if (subject.trials.empty()) throw InvalidArgument("fit_subject: subject has no trials");
  const std::size_t n_trials =
      config.max_trials > 0 ? std::min<std::size_t>(subject.trials.size(), static_cast<std::size_t>(config.max_trials))
                            : subject.trials.size();
  const numerics::RngStream root(config.seed);

  FitResult res;
  res.subject_id = subject.subject_id;
  res.family = checkpoints.front().family;
  res.per_epoch_mean_nll.resize(static_cast<Eigen::Index>(checkpoints.size()));
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const auto& cp = checkpoints[c];
    double total = 0.0;
    for (std::size_t i = 0; i < n_trials; ++i) {
      auto rng = root.substream(subject.subject_id, "trial-nll",
                                static_cast<std::uint64_t>(subject.trials[i].trial_id));
      total += trial_nll(cp.params, subject, i, schedule, config, rng);
    }
    res.epochs.push_back(cp.epoch);
    res.per_epoch_mean_nll[static_cast<Eigen::Index>(c)] = total / static_cast<double>(n_trials);
  }
  const auto [index, value] = select_best_epoch(res.per_epoch_mean_nll);
  res.e_star_index = index;
  res.e_star = res.epochs[static_cast<std::size_t>(index)];
  res.min_nll = value;
  return res;
}

bool is_consistent(const FitResult& r) {
  if (r.per_epoch_mean_nll.size() == 0 || r.e_star_index < 0 || r.e_star_index >= r.per_epoch_mean_nll.size())
    return false;
  if (r.epochs.size() != static_cast<std::size_t>(r.per_epoch_mean_nll.size())) return false;
  if (r.epochs[static_cast<std::size_t>(r.e_star_index)] != r.e_star) return false;
  if (r.per_epoch_mean_nll[r.e_star_index] != r.min_nll) return false;
  for (Eigen::Index i = 0; i < r.per_epoch_mean_nll.size(); ++i) {
    if (r.per_epoch_mean_nll[i] < r.min_nll) return false;
    if (i < r.e_star_index && r.per_epoch_mean_nll[i] == r.min_nll) return false;
  }
  return true;
}

std::string serialize_fit(const FitResult& fit) {
  std::ostringstream out;
  out << "nerd-fit " << kFitFormatVersion << '\n'
      << "subject " << fit.subject_id << '\n'
      << "family " << training::to_string(fit.family) << '\n'
      << "e_star " << fit.e_star << '\n'
      << "e_star_index " << fit.e_star_index << '\n'
      << "min_nll " << text::format_double(fit.min_nll) << '\n'
      << "n_epochs " << fit.epochs.size() << '\n';
  for (std::size_t i = 0; i < fit.epochs.size(); ++i)
    out << "nll " << fit.epochs[i] << ' ' << text::format_double(fit.per_epoch_mean_nll[static_cast<Eigen::Index>(i)])
        << '\n';
  out << "end\n";
  return out.str();
}

FitResult parse_fit(const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const std::string& keyword, std::size_t n) {
    if (!std::getline(in, line)) throw ParseError("unexpected end of fit file", line_no + 1);
    ++line_no;
    auto tokens = text::split_ws(line);
    if (tokens.size() != n + 1 || tokens[0] != keyword) throw ParseError("expected '" + keyword + "'", line_no);
    return std::vector<std::string>(tokens.begin() + 1, tokens.end());
  };
  try {
    const auto version = text::parse_int(next("nerd-fit", 1)[0]);
    if (version != kFitFormatVersion) throw VersionError("fit format version " + std::to_string(version) + " is not supported");
    FitResult fit;
    fit.subject_id = next("subject", 1)[0];
    fit.family = training::parse_family(next("family", 1)[0]);
    fit.e_star = static_cast<int>(text::parse_int(next("e_star", 1)[0]));
    fit.e_star_index = static_cast<int>(text::parse_int(next("e_star_index", 1)[0]));
    fit.min_nll = text::parse_double(next("min_nll", 1)[0]);
    const auto n = text::parse_int(next("n_epochs", 1)[0]);
    if (n < 1) throw ParseError("fit has no epochs", line_no);
    fit.per_epoch_mean_nll.resize(n);
    for (long long i = 0; i < n; ++i) {
      auto v = next("nll", 2);
      fit.epochs.push_back(static_cast<int>(text::parse_int(v[0])));
      fit.per_epoch_mean_nll[i] = text::parse_double(v[1]);
    }
    next("end", 0);
    if (!is_consistent(fit)) throw ParseError("fit record is internally inconsistent", line_no);
    return fit;
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), line_no);
  }
}

std::string nll_csv(const FitResult& fit) {
  std::ostringstream out;
  out << "epoch,mean_nll\n";
  for (std::size_t i = 0; i < fit.epochs.size(); ++i)
    out << fit.epochs[i] << ',' << text::format_double(fit.per_epoch_mean_nll[static_cast<Eigen::Index>(i)]) << '\n';
  return out.str();
}

void save_fit(const FitResult& fit, const std::filesystem::path& dir) {
  const std::string stem = fit.subject_id + "_" + training::to_string(fit.family);
  text::write_file_atomic(dir / (stem + ".fit"), serialize_fit(fit));
  text::write_file_atomic(dir / (stem + "_nll.csv"), nll_csv(fit));
}

FitResult load_fit(const std::filesystem::path& file) { return parse_fit(text::read_file(file)); }

}  // namespace nerd::fitting

#include "run_config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "nerd/errors.hpp"
#include "nerd/util/text.hpp"

namespace nerd::cli {

using nlohmann::json;

namespace {

std::string start_mode_name(diffusion::StartMode m) {
  switch (m) {
    case diffusion::StartMode::trial: return "trial";
    case diffusion::StartMode::forward_noised: return "forward_noised";
    case diffusion::StartMode::pure_noise: return "pure_noise";
  }
  return "forward_noised";
}

diffusion::StartMode parse_start_mode(const std::string& s, const std::string& path) {
  if (s == "trial") return diffusion::StartMode::trial;
  if (s == "forward_noised") return diffusion::StartMode::forward_noised;
  if (s == "pure_noise") return diffusion::StartMode::pure_noise;
  throw InvalidArgument(path + ": unknown start mode '" + s + "'");
}

std::string linkage_name(numerics::Linkage l) {
  switch (l) {
    case numerics::Linkage::average: return "average";
    case numerics::Linkage::complete: return "complete";
    case numerics::Linkage::ward: return "ward";
  }
  return "average";
}

numerics::Linkage parse_linkage(const std::string& s, const std::string& path) {
  if (s == "average") return numerics::Linkage::average;
  if (s == "complete") return numerics::Linkage::complete;
  if (s == "ward") return numerics::Linkage::ward;
  throw InvalidArgument(path + ": unknown linkage '" + s + "'");
}

json range(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }

json train_json(const training::TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"gamma", c.gamma},
          {"alpha", c.alpha},
          {"clip_norm", c.clip_norm},
          {"batch_episodes", c.batch_episodes},
          {"diffusion_batch", c.diffusion_batch},
          {"n_epochs", c.n_epochs},
          {"hidden", c.hidden},
          {"sigma_min", c.sigma_min},
          {"schedule", c.schedule_kind == diffusion::ScheduleKind::linear ? "linear" : "constant"},
          {"num_steps", c.num_steps},
          {"beta_min", c.beta_min},
          {"beta_max", c.beta_max},
          {"start_mode", start_mode_name(c.start_mode)},
          {"checkpoint_stride", c.checkpoint_stride}};
}

// Field setters keyed by name; each receives the value and its dotted path.
using Setter = std::function<void(const json&, const std::string&)>;

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw InvalidArgument(path + ": expected a number");
  return v.get<double>();
}

long long as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw InvalidArgument(path + ": expected an integer");
  return v.get<long long>();
}

int as_int32(const json& v, const std::string& path) {
  const long long x = as_int(v, path);
  if (x < -2147483647LL || x > 2147483647LL) throw InvalidArgument(path + ": integer out of range");
  return static_cast<int>(x);
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw InvalidArgument(path + ": expected a non-negative integer");
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw InvalidArgument(path + ": expected a string");
  return v.get<std::string>();
}

std::pair<double, double> as_range(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw InvalidArgument(path + ": expected [low, high]");
  return {as_double(v[0], path + "[0]"), as_double(v[1], path + "[1]")};
}

void apply_object(const json& patch, const std::string& path, const std::map<std::string, Setter>& setters) {
  if (!patch.is_object()) throw InvalidArgument((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidArgument(sub + ": unknown key");
    it->second(value, sub);
  }
}

void apply_train(training::TrainConfig& c, const json& patch, const std::string& path) {
  apply_object(patch, path,
               {{"lambda", [&](const json& v, const std::string& p) { c.lambda = as_double(v, p); }},
                {"gamma", [&](const json& v, const std::string& p) { c.gamma = as_double(v, p); }},
                {"alpha", [&](const json& v, const std::string& p) { c.alpha = as_double(v, p); }},
                {"clip_norm", [&](const json& v, const std::string& p) { c.clip_norm = as_double(v, p); }},
                {"batch_episodes", [&](const json& v, const std::string& p) { c.batch_episodes = as_int32(v, p); }},
                {"diffusion_batch", [&](const json& v, const std::string& p) { c.diffusion_batch = as_int32(v, p); }},
                {"n_epochs", [&](const json& v, const std::string& p) { c.n_epochs = as_int32(v, p); }},
                {"hidden", [&](const json& v, const std::string& p) { c.hidden = as_int32(v, p); }},
                {"sigma_min", [&](const json& v, const std::string& p) { c.sigma_min = as_double(v, p); }},
                {"schedule",
                 [&](const json& v, const std::string& p) {
                   const auto s = as_string(v, p);
                   if (s == "linear") {
                     c.schedule_kind = diffusion::ScheduleKind::linear;
                   } else if (s == "constant") {
                     c.schedule_kind = diffusion::ScheduleKind::constant;
                   } else {
                     throw InvalidArgument(p + ": unknown schedule '" + s + "'");
                   }
                 }},
                {"num_steps", [&](const json& v, const std::string& p) { c.num_steps = as_int32(v, p); }},
                {"beta_min", [&](const json& v, const std::string& p) { c.beta_min = as_double(v, p); }},
                {"beta_max", [&](const json& v, const std::string& p) { c.beta_max = as_double(v, p); }},
                {"start_mode",
                 [&](const json& v, const std::string& p) { c.start_mode = parse_start_mode(as_string(v, p), p); }},
                {"checkpoint_stride",
                 [&](const json& v, const std::string& p) { c.checkpoint_stride = as_int32(v, p); }}});
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument("config: " + message);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.nerd.alpha = 0.1;
  c.nerd.lambda = 1.0;
  c.nerd.n_epochs = 300;
  c.control.alpha = 0.3;
  c.control.lambda = 0.0;
  c.control.n_epochs = 100;
  return c;
}

json to_json(const RunConfig& c) {
  // jobs is deliberately absent: it changes scheduling, never results.
  return {{"seed", c.seed},
          {"dataset",
           {{"n_subjects", c.n_subjects},
            {"voxels", c.dataset.voxels},
            {"n_trials", c.dataset.n_trials},
            {"sparsity", c.dataset.sparsity},
            {"proficiency_range", range(c.dataset.proficiency_range)},
            {"noise_scale_range", range(c.dataset.noise_scale_range)},
            {"bias_range", range(c.dataset.bias_range)},
            {"amplitude", c.dataset.amplitude}}},
          {"train", {{"nerd", train_json(c.nerd)}, {"control", train_json(c.control)}}},
          {"fit",
           {{"n_samples", c.fit.n_samples},
            {"variance_floor", c.fit.variance_floor},
            {"max_trials", c.fit.max_trials},
            {"start_mode", start_mode_name(c.fit.start_mode)}}},
          {"analysis",
           {{"n_episodes", c.analysis.n_episodes},
            {"voxel_clusters", c.analysis.voxel_clusters},
            {"subject_clusters", c.analysis.subject_clusters},
            {"linkage", linkage_name(c.analysis.linkage)},
            {"rdm_trials", c.analysis.rdm_trials}}}};
}

RunConfig apply_json(const RunConfig& base, const json& patch) {
  RunConfig c = base;
  apply_object(
      patch, "",
      {{"seed", [&](const json& v, const std::string& p) { c.seed = as_u64(v, p); }},
       {"jobs", [&](const json& v, const std::string& p) { c.jobs = as_int32(v, p); }},
       {"dataset",
        [&](const json& v, const std::string& p) {
          auto& d = c.dataset;
          apply_object(
              v, p,
              {{"n_subjects", [&](const json& x, const std::string& q) { c.n_subjects = as_int32(x, q); }},
               {"voxels", [&](const json& x, const std::string& q) { d.voxels = as_int32(x, q); }},
               {"n_trials", [&](const json& x, const std::string& q) { d.n_trials = as_int32(x, q); }},
               {"sparsity", [&](const json& x, const std::string& q) { d.sparsity = as_double(x, q); }},
               {"proficiency_range",
                [&](const json& x, const std::string& q) { d.proficiency_range = as_range(x, q); }},
               {"noise_scale_range",
                [&](const json& x, const std::string& q) { d.noise_scale_range = as_range(x, q); }},
               {"bias_range", [&](const json& x, const std::string& q) { d.bias_range = as_range(x, q); }},
               {"amplitude", [&](const json& x, const std::string& q) { d.amplitude = as_double(x, q); }}});
        }},
       {"train",
        [&](const json& v, const std::string& p) {
          apply_object(v, p,
                       {{"nerd", [&](const json& x, const std::string& q) { apply_train(c.nerd, x, q); }},
                        {"control", [&](const json& x, const std::string& q) { apply_train(c.control, x, q); }}});
        }},
       {"fit",
        [&](const json& v, const std::string& p) {
          apply_object(
              v, p,
              {{"n_samples", [&](const json& x, const std::string& q) { c.fit.n_samples = as_int32(x, q); }},
               {"variance_floor",
                [&](const json& x, const std::string& q) { c.fit.variance_floor = as_double(x, q); }},
               {"max_trials", [&](const json& x, const std::string& q) { c.fit.max_trials = as_int32(x, q); }},
               {"start_mode", [&](const json& x, const std::string& q) {
                  c.fit.start_mode = parse_start_mode(as_string(x, q), q);
                }}});
        }},
       {"analysis", [&](const json& v, const std::string& p) {
          auto& a = c.analysis;
          apply_object(
              v, p,
              {{"n_episodes", [&](const json& x, const std::string& q) { a.n_episodes = as_int32(x, q); }},
               {"voxel_clusters", [&](const json& x, const std::string& q) { a.voxel_clusters = as_int32(x, q); }},
               {"subject_clusters",
                [&](const json& x, const std::string& q) { a.subject_clusters = as_int32(x, q); }},
               {"linkage",
                [&](const json& x, const std::string& q) { a.linkage = parse_linkage(as_string(x, q), q); }},
               {"rdm_trials", [&](const json& x, const std::string& q) { a.rdm_trials = as_int32(x, q); }}});
        }}});
  return c;
}

void propagate_seed(RunConfig& c) {
  c.nerd.seed = c.seed;
  c.control.seed = c.seed;
  c.fit.seed = c.seed;
  c.analysis.seed = c.seed;
}

void validate(const RunConfig& c) {
  require(c.jobs >= 1, "jobs must be >= 1");
  require(c.n_subjects >= 1, "dataset.n_subjects must be >= 1");
  require(c.n_subjects <= 99, "dataset.n_subjects must be <= 99");
  envsim::validate(c.dataset);
  for (const auto* t : {&c.nerd, &c.control}) {
    training::validate(*t);
    require(finite_nonneg(t->lambda), "train.lambda must be finite and >= 0");
    require(t->checkpoint_stride >= 1, "train.checkpoint_stride must be >= 1");
  }
  require(c.nerd.num_steps == c.control.num_steps, "train.nerd.num_steps and train.control.num_steps differ");
  require(c.nerd.schedule_kind == c.control.schedule_kind && c.nerd.beta_min == c.control.beta_min &&
              c.nerd.beta_max == c.control.beta_max,
          "both families must share one noise schedule");
  fitting::validate(c.fit);
  const auto& a = c.analysis;
  require(a.n_episodes >= 1, "analysis.n_episodes must be >= 1");
  require(a.voxel_clusters >= 1 && a.voxel_clusters <= c.dataset.voxels,
          "analysis.voxel_clusters must lie in [1, voxels]");
  require(a.subject_clusters >= 1, "analysis.subject_clusters must be >= 1");
  require(a.rdm_trials >= 2, "analysis.rdm_trials must be >= 2");
}

RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base) {
  const std::string text = text::read_file(path);
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return apply_json(base, parsed);
}

const training::TrainConfig& train_config(const RunConfig& c, training::Family family) {
  return family == training::Family::nerd ? c.nerd : c.control;
}

std::string dump(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace nerd::cli

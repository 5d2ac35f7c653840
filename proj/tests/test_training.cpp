#include <doctest.h>

#include <cmath>

#include "nerd/errors.hpp"
#include "nerd/training/training.hpp"

using namespace nerd;
using namespace nerd::training;

namespace {

envsim::SyntheticSubject small_subject(int voxels = 4, double proficiency = 0.5) {
  envsim::SubjectConfig c;
  c.voxels = voxels;
  c.n_trials = 12;
  numerics::RngStream rng(11);
  return envsim::generate_subject_with(rng, "s01", c, proficiency, 0.3);
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 6;
  c.num_steps = 4;
  c.batch_episodes = 6;
  c.diffusion_batch = 2;
  c.n_epochs = 6;
  c.alpha = 0.05;
  c.seed = 3;
  return c;
}

std::vector<diffusion::DenoisingEpisode> batch(const policy::PolicyParams& p, int n, std::uint64_t seed) {
  const auto s = diffusion::make_schedule(diffusion::ScheduleKind::linear, 4, 1e-4, 0.02);
  numerics::RngStream rng(seed);
  std::vector<diffusion::DenoisingEpisode> out;
  diffusion::RewardFn r = [](const VoxelState& x) { return x[0] - 0.5 * x[1]; };
  for (int i = 0; i < n; ++i) out.push_back(diffusion::run_episode(p, rng.normal_vector(p.state_dim()), s, r, rng, true));
  return out;
}

}  // namespace

TEST_CASE("discounted returns") {
  Vector r(3);
  r << 0, 0, 1;
  const Vector g = compute_returns(r, 0.5);
  CHECK(g[0] == doctest::Approx(0.25));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(1.0));
  r << 1, 2, 3;
  const Vector h = compute_returns(r, 0.9);
  CHECK(h[0] == doctest::Approx(1 + 0.9 * 2 + 0.81 * 3));
}

TEST_CASE("only the terminal step is rewarded") {
  numerics::RngStream rng(1);
  const auto p = policy::init_params(rng, 3, 4);
  const auto ep = batch(p, 1, 2).front();
  const Vector r = terminal_rewards(ep);
  CHECK(r.head(r.size() - 1).isZero(0.0));
  CHECK(r[r.size() - 1] == ep.final_reward);
}

TEST_CASE("reinforce update follows the baselined score-function direction") {
  numerics::RngStream rng(2);
  const auto p = policy::init_params(rng, 3, 5);
  const auto eps = batch(p, 5, 7);
  TrainConfig c = small_config();
  c.clip_norm = 1e9;
  c.lambda = 0.0;
  const auto upd = reinforce_update(p, eps, c);

  const int T = eps[0].num_steps();
  std::vector<Vector> returns;
  Vector base = Vector::Zero(T);
  for (const auto& e : eps) {
    Vector r = Vector::Zero(T);
    r[T - 1] = e.final_reward;
    returns.push_back(compute_returns(r, c.gamma));
    base += returns.back() / 5.0;
  }
  Vector d = Vector::Zero(p.parameter_count());
  for (std::size_t e = 0; e < eps.size(); ++e)
    for (int k = 0; k < T; ++k)
      d += (returns[e][k] - base[k]) / 5.0 *
           policy::backward_logprob(p, eps[e].states[static_cast<std::size_t>(k)], T - k, T,
                                    eps[e].states[static_cast<std::size_t>(k + 1)])
               .flatten();
  const Vector delta = upd.params.flatten() - p.flatten();
  CHECK((delta - c.alpha * d).norm() < 1e-12 * std::max(1.0, d.norm()));
  CHECK(upd.log.grad_norm_pre_clip == doctest::Approx(d.norm()));
}

TEST_CASE("gradient clipping bounds the step") {
  numerics::RngStream rng(3);
  const auto p = policy::init_params(rng, 3, 5);
  const auto eps = batch(p, 5, 8);
  TrainConfig c = small_config();
  c.clip_norm = 1e-3;
  const auto upd = reinforce_update(p, eps, c);
  CHECK(upd.grad_norm_post_clip == doctest::Approx(1e-3));
  CHECK((upd.params.flatten() - p.flatten()).norm() == doctest::Approx(c.alpha * 1e-3));
}

TEST_CASE("equal rewards across the batch leave the weights alone") {
  numerics::RngStream rng(4);
  const auto p = policy::init_params(rng, 3, 5);
  auto eps = batch(p, 4, 9);
  for (auto& e : eps) e.final_reward = 0.25;
  TrainConfig c = small_config();
  c.lambda = 0.0;
  const auto upd = reinforce_update(p, eps, c);
  CHECK(upd.params.flatten() == p.flatten());
  CHECK_THROWS_AS(reinforce_update(p, {}, c), InvalidArgument);
}

TEST_CASE("diffusion term gradient matches finite differences") {
  numerics::RngStream rng(5);
  const auto p = policy::init_params(rng, 3, 4);
  const auto s = diffusion::make_schedule(diffusion::ScheduleKind::linear, 4, 1e-4, 0.02);
  auto pairs = diffusion::forward_pairs(rng.normal_vector(3), s, rng);
  const auto h = hybrid_loss(p, pairs, {}, 1.0, 4);
  CHECK(h.loss == doctest::Approx(h.diffusion_mse));
  const Vector g = h.diffusion_gradient.flatten(), f = p.flatten();
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    Vector fp = f, fm = f;
    fp[k] += 1e-6;
    fm[k] -= 1e-6;
    auto q = p, r = p;
    q.assign_flat(fp);
    r.assign_flat(fm);
    const double num = (hybrid_loss(q, pairs, {}, 1.0, 4).diffusion_mse - hybrid_loss(r, pairs, {}, 1.0, 4).diffusion_mse) / 2e-6;
    CHECK(g[k] == doctest::Approx(num).epsilon(1e-5).scale(1.0));
  }
  CHECK(hybrid_loss(p, {}, {}, 1.0, 4).diffusion_mse == 0.0);
}

TEST_CASE("training is deterministic and resumable") {
  const auto subject = small_subject();
  for (auto family : {Family::nerd, Family::control}) {
    TrainConfig c = small_config();
    c.checkpoint_stride = 2;
    const auto full = train(family, subject, c);
    REQUIRE(full.checkpoints.size() == 4);
    CHECK(full.checkpoints[0].epoch == 0);
    CHECK(full.checkpoints[3].epoch == 6);
    CHECK(full.logs.size() == 6);
    const auto again = train(family, subject, c);
    CHECK(again.checkpoints.back().params.flatten() == full.checkpoints.back().params.flatten());

    const auto resumed = train(family, subject, c, &full.checkpoints[1]);
    REQUIRE(resumed.checkpoints.size() == 2);
    CHECK(resumed.checkpoints.back().params.flatten() == full.checkpoints.back().params.flatten());

    // through a text round-trip as well
    const auto cp = parse_checkpoint(serialize_checkpoint(full.checkpoints[2]));
    CHECK(train(family, subject, c, &cp).checkpoints.back().params.flatten() ==
          full.checkpoints.back().params.flatten());

    TrainConfig other = c;
    other.alpha *= 2;
    CHECK_THROWS_AS(train(family, subject, other, &full.checkpoints[1]), InvalidArgument);
  }
}

TEST_CASE("both families start from the same weights") {
  const auto subject = small_subject();
  const auto c = small_config();
  CHECK(train_nerd(subject, c).checkpoints[0].params.flatten() ==
        train_control(subject, c).checkpoints[0].params.flatten());
}

TEST_CASE("zero decoder weights keep the weights fixed") {
  auto subject = small_subject();
  subject.decoder.weights.setZero();
  subject.decoder.bias = 0.4;
  for (auto& t : subject.trials) t.achieved_reward = 0.4;
  TrainConfig c = small_config();
  c.lambda = 0.0;
  for (auto family : {Family::control, Family::nerd}) {
    const auto r = train(family, subject, c);
    INFO(to_string(family));
    CHECK((r.checkpoints.back().params.flatten() - r.checkpoints.front().params.flatten()).norm() < 1e-12);
  }
  const auto r = train_control(subject, c);
  for (const auto& log : r.logs) CHECK(log.mean_loss == doctest::Approx(-0.5));
}

TEST_CASE("control training raises the reward") {
  const auto subject = small_subject(6, 0.8);
  TrainConfig c = small_config();
  c.n_epochs = 40;
  c.alpha = 0.3;
  const auto r = train_control(subject, c);
  CHECK(r.logs.back().mean_reward > r.logs.front().mean_reward + 0.1);
}

TEST_CASE("config validation, hash and family names") {
  TrainConfig c = small_config();
  CHECK(config_hash(c) == config_hash(small_config()));
  TrainConfig d = c;
  d.lambda = 0.5;
  CHECK(config_hash(c) != config_hash(d));
  d = c;
  d.gamma = 1.0;
  CHECK_THROWS_AS(validate(d), InvalidArgument);
  d = c;
  d.checkpoint_stride = 0;
  CHECK_THROWS_AS(validate(d), InvalidArgument);
  CHECK(parse_family("control") == Family::control);
  CHECK(to_string(Family::nerd) == "nerd");
  CHECK_THROWS_AS(parse_family("other"), InvalidArgument);
}

TEST_CASE("checkpoint and log text formats") {
  const auto r = train_nerd(small_subject(), small_config());
  const auto& cp = r.checkpoints.back();
  const auto txt = serialize_checkpoint(cp);
  const auto back = parse_checkpoint(txt);
  CHECK(serialize_checkpoint(back) == txt);
  CHECK(back.epoch == cp.epoch);
  CHECK(back.config_hash == cp.config_hash);
  CHECK_THROWS_AS(parse_checkpoint(txt.substr(0, txt.size() - 10)), ParseError);

  const auto csv = epoch_log_csv(r.logs);
  const auto logs = parse_epoch_log_csv(csv);
  REQUIRE(logs.size() == r.logs.size());
  CHECK(logs.back().mean_reward == r.logs.back().mean_reward);
  CHECK(epoch_log_csv(logs) == csv);
}

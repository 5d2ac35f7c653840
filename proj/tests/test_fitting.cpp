#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nerd/errors.hpp"
#include "nerd/fitting/fitting.hpp"

using namespace nerd;
using namespace nerd::fitting;

TEST_CASE("best epoch picks the earliest minimum") {
  Vector a(4);
  a << 3, 1, 1, 2;
  CHECK(select_best_epoch(a) == std::pair<int, double>{1, 1.0});
  Vector b(3);
  b << 0.5, 0.5, 0.5;
  CHECK(select_best_epoch(b).first == 0);
  Vector c(1);
  c << 7;
  CHECK(select_best_epoch(c).first == 0);
  CHECK_THROWS_AS(select_best_epoch(Vector()), InvalidArgument);
  Vector d(2);
  d << 1, NAN;
  CHECK_THROWS_AS(select_best_epoch(d), InvalidArgument);
}

TEST_CASE("diagonal Gaussian NLL written out by hand") {
  Matrix s(3, 2);
  s << 0, 1, 2, 1, 4, 1;  // column 2 has zero variance
  VoxelState x(2);
  x << 1, 1.01;
  const double floor = 1e-4;
  // column 1: mean 2, var 4; column 2: mean 1, var floored
  const double nll1 = 0.5 * std::log(2 * M_PI * 4.0) + 0.5 * (1 - 2) * (1 - 2) / 4.0;
  const double nll2 = 0.5 * std::log(2 * M_PI * floor) + 0.5 * 0.01 * 0.01 / floor;
  CHECK(diagonal_gaussian_nll(s, x, floor) == doctest::Approx((nll1 + nll2) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(diagonal_gaussian_nll(s.topRows(1), x, floor), InvalidArgument);
  CHECK_THROWS_AS(diagonal_gaussian_nll(s, Vector::Zero(3), floor), InvalidArgument);
}

TEST_CASE("NLL is smallest at the sample mean") {
  numerics::RngStream rng(1);
  Matrix s(30, 4);
  for (int i = 0; i < 30; ++i) s.row(i) = rng.normal_vector(4).transpose();
  const VoxelState m = s.colwise().mean();
  const double at_mean = diagonal_gaussian_nll(s, m, 1e-4);
  for (int k = 0; k < 20; ++k) CHECK(diagonal_gaussian_nll(s, m + 0.1 * rng.normal_vector(4), 1e-4) > at_mean);
}

namespace {

struct Fixture {
  envsim::SyntheticSubject subject;
  training::TrainConfig train;
  std::vector<training::Checkpoint> checkpoints;
  Fixture() {
    envsim::SubjectConfig c;
    c.voxels = 4;
    c.n_trials = 6;
    numerics::RngStream rng(2);
    subject = envsim::generate_subject_with(rng, "s07", c, 0.5, 0.3);
    train.hidden = 6;
    train.num_steps = 4;
    train.batch_episodes = 4;
    train.n_epochs = 4;
    train.alpha = 0.05;
    checkpoints = training::train_nerd(subject, train).checkpoints;
  }
};

}  // namespace

TEST_CASE("fit_subject scores every checkpoint consistently") {
  Fixture f;
  FitConfig fc;
  fc.n_samples = 10;
  const auto fit = fit_subject(f.subject, f.checkpoints, f.train.schedule(), fc);
  REQUIRE(fit.per_epoch_mean_nll.size() == 5);
  CHECK(fit.epochs == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(is_consistent(fit));
  CHECK(fit.min_nll == fit.per_epoch_mean_nll.minCoeff());
  CHECK(fit.e_star == fit.epochs[static_cast<std::size_t>(fit.e_star_index)]);

  // the same checkpoint twice sees the same draws, so it scores identically
  std::vector<training::Checkpoint> twice{f.checkpoints[2], f.checkpoints[2]};
  const auto same = fit_subject(f.subject, twice, f.train.schedule(), fc);
  CHECK(same.per_epoch_mean_nll[0] == same.per_epoch_mean_nll[1]);
  CHECK(same.e_star_index == 0);
  CHECK(same.per_epoch_mean_nll[0] == fit.per_epoch_mean_nll[2]);

  // by hand for the first trial only
  FitConfig one = fc;
  one.max_trials = 1;
  const auto r1 = fit_subject(f.subject, {f.checkpoints[1]}, f.train.schedule(), one);
  auto rng = numerics::RngStream(one.seed).substream("s07", "trial-nll", 0);
  CHECK(r1.min_nll == trial_nll(f.checkpoints[1].params, f.subject, 0, f.train.schedule(), one, rng));
}

TEST_CASE("sample_final_states draws one row per sample") {
  Fixture f;
  numerics::RngStream rng(3);
  const Matrix m = sample_final_states(f.checkpoints[0].params, Vector::Zero(4), f.train.schedule(), 7, rng);
  CHECK(m.rows() == 7);
  CHECK(m.cols() == 4);
  CHECK(m.row(0) != m.row(1));

  // same draws as one stochastic episode per sample
  numerics::RngStream a(4), b(4);
  const VoxelState start = a.normal_vector(4);
  b.normal_vector(4);
  const Matrix batch = sample_final_states(f.checkpoints[3].params, start, f.train.schedule(), 5, a);
  for (int i = 0; i < 5; ++i) {
    const auto ep = diffusion::run_episode(f.checkpoints[3].params, start, f.train.schedule(), {}, b, true);
    CHECK((batch.row(i).transpose() - ep.states.back()).norm() < 1e-12);
  }
}

TEST_CASE("fit text round-trip") {
  Fixture f;
  FitConfig fc;
  fc.n_samples = 5;
  const auto fit = fit_subject(f.subject, f.checkpoints, f.train.schedule(), fc);
  const auto back = parse_fit(serialize_fit(fit));
  CHECK(back.per_epoch_mean_nll == fit.per_epoch_mean_nll);
  CHECK(back.e_star == fit.e_star);
  CHECK(back.subject_id == "s07");
  CHECK(nll_csv(fit).rfind("epoch", 0) == 0);

  const auto dir = std::filesystem::temp_directory_path() / "nerd_fit_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_fit(fit, dir);
  bool found = false;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".fit") continue;
    CHECK(load_fit(e.path()).min_nll == fit.min_nll);
    found = true;
  }
  CHECK(found);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fit config validation") {
  FitConfig fc;
  fc.n_samples = 1;
  CHECK_THROWS_AS(validate(fc), InvalidArgument);
  fc = {};
  fc.variance_floor = 0.0;
  CHECK_THROWS_AS(validate(fc), InvalidArgument);
}

#include "nerd/policy/policy.hpp"

#include <algorithm>
#include <cmath>

#include "nerd/errors.hpp"

namespace nerd::policy {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Weights Weights::zeros(Eigen::Index voxels, Eigen::Index hidden) {
  return {Matrix::Zero(hidden, voxels + 1), Vector::Zero(hidden), Matrix::Zero(2 * voxels, hidden),
          Vector::Zero(2 * voxels)};
}

double Weights::squared_norm() const {
  return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
}

double Weights::norm() const { return std::sqrt(squared_norm()); }

bool Weights::all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }

void Weights::add_scaled(const Weights& other, double scale) {
  w1.noalias() += scale * other.w1;
  b1.noalias() += scale * other.b1;
  w2.noalias() += scale * other.w2;
  b2.noalias() += scale * other.b2;
}

Weights& Weights::operator*=(double scale) {
  w1 *= scale;
  b1 *= scale;
  w2 *= scale;
  b2 *= scale;
  return *this;
}

Vector Weights::flatten() const {
  Vector flat(parameter_count());
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    flat.segment(o, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    o += m.size();
  };
  put(w1);
  put(b1);
  put(w2);
  put(b2);
  return flat;
}

void Weights::assign_flat(const Vector& flat) {
  if (flat.size() != parameter_count()) throw InvalidArgument("assign_flat: size mismatch");
  Eigen::Index o = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(o, m.size());
    o += m.size();
  };
  take(w1);
  take(b1);
  take(w2);
  take(b2);
}

PolicyParams init_params(numerics::RngStream& rng, Eigen::Index voxels, Eigen::Index hidden, double sigma_min) {
  if (voxels < 1 || hidden < 1) throw InvalidArgument("init_params: dimensions must be positive");
  if (!(sigma_min > 0.0 && sigma_min < 1.0)) throw InvalidArgument("init_params: sigma_min must be in (0, 1)");
  PolicyParams p;
  static_cast<Weights&>(p) = Weights::zeros(voxels, hidden);
  p.sigma_min = sigma_min;
  auto glorot = [&](Matrix& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  };
  glorot(p.w1);
  glorot(p.w2);
  // softplus(z) = 1 - sigma_min
  p.b2.tail(voxels).setConstant(std::log(std::expm1(1.0 - sigma_min)));
  return p;
}

PolicyOutput forward(const PolicyParams& params, const VoxelState& x, int t, int num_steps) {
  const Eigen::Index v = params.state_dim();
  if (x.size() != v) throw InvalidArgument("policy forward: state dimension mismatch");
  if (num_steps < 1 || t < 1 || t > num_steps) throw InvalidArgument("policy forward: timestep out of range");
  PolicyOutput out;
  out.input.resize(v + 1);
  out.input.head(v) = x;
  out.input[v] = static_cast<double>(t) / static_cast<double>(num_steps);
  out.hidden.noalias() = params.w1 * out.input;
  out.hidden += params.b1;
  out.hidden = out.hidden.array().tanh();
  out.raw.noalias() = params.w2 * out.hidden;
  out.raw += params.b2;
  out.mu = out.raw.head(v);
  out.sigma.resize(v);
  for (Eigen::Index i = 0; i < v; ++i) out.sigma[i] = softplus(out.raw[v + i]) + params.sigma_min;
  return out;
}

double logprob(const PolicyOutput& out, const VoxelState& action) {
  if (action.size() != out.mu.size()) throw InvalidArgument("logprob: action dimension mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double total = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double z = (action[i] - out.mu[i]) / out.sigma[i];
    total += -kHalfLog2Pi - std::log(out.sigma[i]) - 0.5 * z * z;
  }
  return total;
}

Vector backprop(const PolicyParams& params, const PolicyOutput& out, const Vector& d_mu, const Vector& d_sigma,
                Gradients& acc, double scale) {
  const Eigen::Index v = params.state_dim();
  Vector d_raw(2 * v);
  d_raw.head(v) = d_mu;
  for (Eigen::Index i = 0; i < v; ++i) d_raw[v + i] = d_sigma[i] * logistic(out.raw[v + i]);

  acc.w2.noalias() += (scale * d_raw) * out.hidden.transpose();
  acc.b2.noalias() += scale * d_raw;
  Vector d_pre = params.w2.transpose() * d_raw;
  d_pre.array() *= 1.0 - out.hidden.array().square();
  acc.w1.noalias() += (scale * d_pre) * out.input.transpose();
  acc.b1.noalias() += scale * d_pre;
  return params.w1.leftCols(v).transpose() * d_pre;
}

void accumulate_logprob_gradient(const PolicyParams& params, const PolicyOutput& out, const VoxelState& action,
                                 double scale, Gradients& acc) {
  const Vector resid = action - out.mu;
  const Vector var = out.sigma.array().square();
  const Vector d_mu = resid.array() / var.array();
  const Vector d_sigma = -out.sigma.array().inverse() + resid.array().square() / (var.array() * out.sigma.array());
  backprop(params, out, d_mu, d_sigma, acc, scale);
}

Gradients backward_logprob(const PolicyParams& params, const VoxelState& x, int t, int num_steps,
                           const VoxelState& action) {
  const PolicyOutput out = forward(params, x, t, num_steps);
  if (action.size() != out.mu.size()) throw InvalidArgument("backward_logprob: action dimension mismatch");
  Gradients g = params.zeros_like();
  accumulate_logprob_gradient(params, out, action, 1.0, g);
  return g;
}

ChainGradient backward_reward_deterministic(const PolicyParams& params, const VoxelState& x_start, int num_steps,
                                            const envsim::RewardModel& reward, RewardScale scale) {
  if (num_steps < 1) throw InvalidArgument("backward_reward_deterministic: need at least one step");
  std::vector<PolicyOutput> outs;
  outs.reserve(static_cast<std::size_t>(num_steps));
  VoxelState x = x_start;
  for (int k = 0; k < num_steps; ++k) {
    outs.push_back(forward(params, x, num_steps - k, num_steps));
    x = outs.back().mu;
    if (!x.allFinite()) throw NumericFailure("non-finite state in deterministic chain", num_steps - k);
  }

  ChainGradient res;
  res.gradients = params.zeros_like();
  res.final_state = x;
  Vector upstream;
  if (scale == RewardScale::raw) {
    res.reward = reward.raw(x);
    upstream = -reward.decoder().weights;
  } else {
    res.reward = reward.squashed(x);
    upstream = -reward.squashed_gradient(x);
  }
  const Vector no_sigma = Vector::Zero(params.state_dim());
  for (int k = num_steps - 1; k >= 0; --k) {
    upstream = backprop(params, outs[static_cast<std::size_t>(k)], upstream, no_sigma, res.gradients);
    if (!upstream.allFinite()) throw NumericFailure("non-finite gradient in deterministic chain", num_steps - k);
  }
  return res;
}

namespace {

double relative_error(const Vector& analytic, const Vector& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

template <typename Objective>
Vector central_differences(const PolicyParams& params, double h, Objective&& objective) {
  PolicyParams probe = params;
  const Vector base = params.flatten();
  Vector flat = base;
  Vector grad(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    flat[i] = base[i] + h;
    probe.assign_flat(flat);
    const double up = objective(probe);
    flat[i] = base[i] - h;
    probe.assign_flat(flat);
    const double down = objective(probe);
    flat[i] = base[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace

double grad_check(const PolicyParams& params, const ProbeConfig& probe) {
  const Eigen::Index v = params.state_dim();
  numerics::RngStream rng(probe.seed);
  double worst = 0.0;
  for (int p = 0; p < probe.n_probes; ++p) {
    const VoxelState x = rng.normal_vector(v);
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(probe.num_steps)));
    const VoxelState action = rng.normal_vector(v);
    const Vector analytic = backward_logprob(params, x, t, probe.num_steps, action).flatten();
    const Vector numeric = central_differences(params, probe.step, [&](const PolicyParams& q) {
      return logprob(forward(q, x, t, probe.num_steps), action);
    });
    worst = std::max(worst, relative_error(analytic, numeric));

    envsim::DecoderSpec decoder{rng.normal_vector(v), rng.normal()};
    const envsim::RewardModel reward(decoder, 1.0 + rng.uniform());
    const VoxelState start = rng.normal_vector(v);
    const Vector chain = backward_reward_deterministic(params, start, probe.num_steps, reward).gradients.flatten();
    const Vector chain_numeric = central_differences(params, probe.step, [&](const PolicyParams& q) {
      VoxelState s = start;
      for (int k = 0; k < probe.num_steps; ++k) s = forward(q, s, probe.num_steps - k, probe.num_steps).mu;
      return -reward.raw(s);
    });
    worst = std::max(worst, relative_error(chain, chain_numeric));
  }
  return worst;
}

}  // namespace nerd::policy

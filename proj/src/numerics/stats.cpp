#include "nerd/numerics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "nerd/errors.hpp"

namespace nerd::numerics {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Centered sum of squares at rounding level counts as constant.
bool is_constant(const Vector& v, double centered_ss) {
  const double scale = v.cwiseAbs().maxCoeff();
  const double tol = 1e-13 * scale;
  return centered_ss <= tol * tol * static_cast<double>(v.size());
}

}  // namespace

double gaussian_logpdf(double x, double mu, double sigma) {
  if (!std::isfinite(x) || !std::isfinite(mu) || !std::isfinite(sigma))
    throw InvalidArgument("gaussian_logpdf: non-finite input");
  if (sigma <= 0.0) throw InvalidArgument("gaussian_logpdf: sigma must be positive");
  const double z = (x - mu) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

double pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: length mismatch");
  if (x.size() < 2) throw InvalidArgument("pearson: need at least two points");
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (is_constant(x, sxx) || is_constant(y, syy)) throw DegenerateInput("pearson: zero variance input");
  const double r = dx.dot(dy) / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

namespace {

Vector average_ranks(const Vector& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[static_cast<Eigen::Index>(a)] < v[static_cast<Eigen::Index>(b)];
  });
  Vector ranks(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[static_cast<Eigen::Index>(order[j + 1])] == v[static_cast<Eigen::Index>(order[i])]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[static_cast<Eigen::Index>(order[k])] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const Vector& x, const Vector& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

double student_t_sf(double t, double dof) {
  if (!(dof >= 1.0)) throw InvalidArgument("student_t_sf: dof must be >= 1");
  if (std::isnan(t)) throw InvalidArgument("student_t_sf: t is NaN");
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  // P(|T| > |t|) = I_{dof/(dof+t^2)}(dof/2, 1/2)
  const double x = dof / (dof + t * t);
  const double two_tail = boost::math::ibeta(0.5 * dof, 0.5, x);
  return t > 0 ? 0.5 * two_tail : 1.0 - 0.5 * two_tail;
}

double two_sided_p(double t, double dof) {
  if (std::isnan(t)) return std::nan("");
  return std::min(1.0, 2.0 * student_t_sf(std::abs(t), dof));
}

LinearFit ols_fit(const Matrix& design, const Vector& y, std::vector<std::string> names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index k = design.cols();
  if (y.size() != n) throw InvalidArgument("ols_fit: design/response length mismatch");
  if (k < 1) throw InvalidArgument("ols_fit: empty design");
  if (n <= k) throw InsufficientData("ols_fit: need more observations than columns");
  if (!design.allFinite() || !y.allFinite()) throw InvalidArgument("ols_fit: non-finite input");

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw SingularDesign("ols_fit: design matrix is rank deficient");

  LinearFit fit;
  fit.coefficients = qr.solve(y);
  fit.residuals = y - design * fit.coefficients;
  fit.residual_dof = static_cast<long>(n - k);
  const double rss = fit.residuals.squaredNorm();
  const double sigma2 = rss / static_cast<double>(n - k);

  // (X^T X)^{-1} = P R^{-1} R^{-T} P^T
  const Matrix r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
  const Matrix cov_perm = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  const Matrix xtx_inv = perm * cov_perm * perm.transpose();

  fit.std_errors = (sigma2 * xtx_inv.diagonal().array()).sqrt();
  fit.t_stats.resize(k);
  fit.p_values.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double se = fit.std_errors[i];
    if (se > 0.0) {
      fit.t_stats[i] = fit.coefficients[i] / se;
      fit.p_values[i] = two_sided_p(fit.t_stats[i], static_cast<double>(n - k));
    } else {
      // Exact fit: infinite t, zero p unless the coefficient itself is 0.
      fit.t_stats[i] = fit.coefficients[i] == 0.0 ? 0.0 : std::copysign(HUGE_VAL, fit.coefficients[i]);
      fit.p_values[i] = fit.coefficients[i] == 0.0 ? 1.0 : 0.0;
    }
  }

  const double tss = (y.array() - y.mean()).matrix().squaredNorm();
  fit.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 0.0;

  if (names.empty()) {
    for (Eigen::Index i = 0; i < k; ++i) names.push_back("x" + std::to_string(i));
  }
  if (static_cast<Eigen::Index>(names.size()) != k) throw InvalidArgument("ols_fit: wrong number of column names");
  fit.design_column_names = std::move(names);
  return fit;
}

TTestResult paired_t_test(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: length mismatch");
  if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least two pairs");
  const Vector d = a - b;
  const double sd = sample_sd(d);
  if (!(sd > 1e-13 * d.cwiseAbs().maxCoeff())) throw DegenerateInput("paired_t_test: differences have zero variance");
  const double n = static_cast<double>(d.size());
  TTestResult res;
  res.dof = static_cast<long>(d.size() - 1);
  res.t = d.mean() / (sd / std::sqrt(n));
  res.p = two_sided_p(res.t, static_cast<double>(res.dof));
  return res;
}

double mean(const Vector& v) {
  if (v.size() == 0) throw InvalidArgument("mean: empty vector");
  return v.mean();
}

double sample_sd(const Vector& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace nerd::numerics

#pragma once

#include <string>
#include <vector>

#include "nerd/types.hpp"

namespace nerd::numerics {

/// Log density of N(mu, sigma^2) at x. Throws InvalidArgument for
/// non-finite inputs or sigma <= 0.
double gaussian_logpdf(double x, double mu, double sigma);

/// Sample Pearson correlation. Throws DegenerateInput if either vector is
/// constant; callers that need a fallback catch it.
double pearson(const Vector& x, const Vector& y);

/// Spearman rank correlation (average ranks for ties).
double spearman(const Vector& x, const Vector& y);

/// Upper tail P(T > t) of Student's t with `dof` degrees of freedom.
double student_t_sf(double t, double dof);

/// Two-sided p-value for a t statistic.
double two_sided_p(double t, double dof);

struct LinearFit {
  Vector coefficients;
  Vector std_errors;
  Vector t_stats;
  Vector p_values;
  double r_squared = 0.0;
  long residual_dof = 0;
  std::vector<std::string> design_column_names;
  Vector residuals;
};

/// Ordinary least squares with classical inference. `names` defaults to
/// x0, x1, ... when empty. R^2 is 0 when y has zero total sum of squares.
LinearFit ols_fit(const Matrix& design, const Vector& y, std::vector<std::string> names = {});

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  long dof = 0;
};

TTestResult paired_t_test(const Vector& a, const Vector& b);

double mean(const Vector& v);
/// Sample standard deviation (n - 1 denominator); 0 for n < 2.
double sample_sd(const Vector& v);

}  // namespace nerd::numerics

#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace riverpilot::analytics {

struct StatResult {
  double statistic = 0.0;
  double p = 1.0;
  std::string method;
  int n = 0;
};

// Special functions.
double normal_cdf(double z);
/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);
/// Kolmogorov survival function P(K > lambda).
double kolmogorov_sf(double lambda);

/// 1-based ranks, ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// Throws LengthMismatch, TooFew (n < 3), DegenerateVariance.
StatResult pearson(std::span<const double> x, std::span<const double> y);
StatResult spearman(std::span<const double> x, std::span<const double> y);

/// Switches from exact enumeration to the normal approximation above this n.
inline constexpr int kWilcoxonExactMax = 20;

/// Paired signed-rank test on post - pre. Zero differences are dropped.
/// Statistic T = min(W+, W-). Throws LengthMismatch, AllZeroDifferences,
/// TooFew (fewer than 5 nonzero pairs).
StatResult wilcoxon_signed_rank(std::span<const double> pre, std::span<const double> post);
/// Exact two-sided p from the signed-rank distribution of `abs_ranks`.
double wilcoxon_exact_p(std::span<const double> abs_ranks, double t);
double wilcoxon_normal_p(std::span<const double> abs_ranks, double t);

/// Throws TooFew when either sample has fewer than 3 values.
StatResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct OlsResult {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  double r2 = 0.0;
  double sigma2 = 0.0;
  int n = 0;
  int df = 0;
};

/// `x` already includes the intercept column. Throws TooFew unless rows
/// exceed columns, RankDeficient when columns are linearly dependent.
OlsResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
/// Intercept-plus-predictors design matrix.
Eigen::MatrixXd design(const std::vector<std::span<const double>>& predictors);

struct MediationResult {
  double a = 0.0;         // M ~ X
  double b = 0.0;         // Y ~ X + M, coefficient of M
  double direct = 0.0;    // c', coefficient of X in the same model
  double total = 0.0;     // c, from Y ~ X
  double indirect = 0.0;  // a * b
  double sobel_z = 0.0;
  double p = 1.0;
  int n = 0;
};

/// Baron-Kenny regressions and the Sobel test. Throws TooFew (n < 10) and
/// whatever the regressions throw.
MediationResult mediation(std::span<const double> x, std::span<const double> m, std::span<const double> y);

}  // namespace riverpilot::analytics

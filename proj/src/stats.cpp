#include "riverpilot/stats.hpp"
#include "riverpilot/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>

namespace riverpilot::analytics {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Jacobi theta form, fast for small lambda.
    double cdf = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double j = 2.0 * k - 1.0;
      cdf += std::exp(-j * j * pi * pi / (8.0 * lambda * lambda));
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sf = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sf += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

StatResult pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size());
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorCode::TooFew, "n = " + std::to_string(n));
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateVariance, sxx == 0.0 ? "x" : "y");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  StatResult res{r, 0.0, "pearson", static_cast<int>(n)};
  const double df = static_cast<double>(n) - 2.0;
  if (std::abs(r) < 1.0) res.p = student_t_two_sided(r * std::sqrt(df / (1.0 - r * r)), df);
  return res;
}

StatResult spearman(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size());
  if (x.size() < 3) throw Error(ErrorCode::TooFew, "n = " + std::to_string(x.size()));
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  StatResult res = pearson(rx, ry);
  res.method = "spearman";
  return res;
}

namespace {

// Doubled ranks: average ranks are multiples of one half.
std::vector<std::int64_t> doubled(std::span<const double> ranks) {
  std::vector<std::int64_t> out;
  for (double r : ranks) out.push_back(std::llround(2.0 * r));
  return out;
}

}  // namespace

double wilcoxon_exact_p(std::span<const double> abs_ranks, double t) {
  const auto r = doubled(abs_ranks);
  const std::size_t n = r.size();
  const std::int64_t total = std::accumulate(r.begin(), r.end(), std::int64_t{0});
  const std::int64_t t2 = std::llround(2.0 * t);
  // Walk all sign assignments in Gray-code order, one flip per step.
  std::uint64_t mask = 0;
  std::int64_t w = 0;  // doubled W+ of the current assignment
  std::uint64_t hits = 0;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (i > 0) {
      const int bit = __builtin_ctzll(i);
      mask ^= std::uint64_t{1} << bit;
      w += (mask >> bit) & 1u ? r[bit] : -r[bit];
    }
    if (std::min(w, total - w) <= t2) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

double wilcoxon_normal_p(std::span<const double> abs_ranks, double t) {
  const double n = static_cast<double>(abs_ranks.size());
  const double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  std::vector<double> sorted(abs_ranks.begin(), abs_ranks.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double k = static_cast<double>(j - i);
    var -= (k * k * k - k) / 48.0;
    i = j;
  }
  if (var <= 0.0) return 1.0;
  const double z = (mean - t - 0.5) / std::sqrt(var);
  if (z <= 0.0) return 1.0;
  return std::min(1.0, std::erfc(z / std::numbers::sqrt2));
}

StatResult wilcoxon_signed_rank(std::span<const double> pre, std::span<const double> post) {
  require_same_length(pre.size(), post.size());
  std::vector<double> d;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double di = post[i] - pre[i];
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) throw Error(ErrorCode::AllZeroDifferences);
  if (d.size() < 5) throw Error(ErrorCode::TooFew, "n = " + std::to_string(d.size()));
  std::vector<double> mag;
  for (double x : d) mag.push_back(std::abs(x));
  const auto ranks = average_ranks(mag);
  double wp = 0.0, wm = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? wp : wm) += ranks[i];
  const double t = std::min(wp, wm);
  const int n = static_cast<int>(d.size());
  if (n <= kWilcoxonExactMax) return {t, wilcoxon_exact_p(ranks, t), "wilcoxon_exact", n};
  return {t, wilcoxon_normal_p(ranks, t), "wilcoxon_normal", n};
}

StatResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 3 || b.size() < 3) {
    throw Error(ErrorCode::TooFew, std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double n = static_cast<double>(sa.size()), m = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double v;
    if (j >= sb.size()) v = sa[i];
    else if (i >= sa.size()) v = sb[j];
    else v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  const double ne = n * m / (n + m);
  return {d, kolmogorov_sf(std::sqrt(ne) * d), "ks_two_sample", static_cast<int>(sa.size() + sb.size())};
}

Eigen::MatrixXd design(const std::vector<std::span<const double>>& predictors) {
  const std::size_t n = predictors.empty() ? 0 : predictors[0].size();
  Eigen::MatrixXd x(n, predictors.size() + 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t k = 0; k < predictors.size(); ++k) {
      require_same_length(predictors[k].size(), n);
      x(i, k + 1) = predictors[k][i];
    }
  }
  return x;
}

OlsResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.rows()), k = static_cast<int>(x.cols());
  require_same_length(y.size(), x.rows());
  if (n <= k) throw Error(ErrorCode::TooFew, std::to_string(n) + " rows for " + std::to_string(k) + " columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw Error(ErrorCode::RankDeficient, "rank " + std::to_string(qr.rank()) + " of " + std::to_string(k));

  OlsResult r;
  r.n = n;
  r.df = n - k;
  r.coefficients = qr.solve(y);
  const Eigen::VectorXd resid = y - x * r.coefficients;
  const double ssr = resid.squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  r.sigma2 = ssr / r.df;
  r.r2 = sst > 0.0 ? 1.0 - ssr / sst : (ssr == 0.0 ? 1.0 : 0.0);
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::MatrixXd cov = r.sigma2 * xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  r.std_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.t.resize(k);
  r.p.resize(k);
  for (int i = 0; i < k; ++i) {
    const double se = r.std_errors(i), b = r.coefficients(i);
    if (se == 0.0) {
      r.t(i) = b == 0.0 ? 0.0 : std::copysign(INFINITY, b);
      r.p(i) = b == 0.0 ? 1.0 : 0.0;
    } else {
      r.t(i) = b / se;
      r.p(i) = student_t_two_sided(r.t(i), r.df);
    }
  }
  return r;
}

MediationResult mediation(std::span<const double> x, std::span<const double> m, std::span<const double> y) {
  require_same_length(x.size(), m.size());
  require_same_length(x.size(), y.size());
  if (x.size() < 10) throw Error(ErrorCode::TooFew, "n = " + std::to_string(x.size()));
  const Eigen::Map<const Eigen::VectorXd> mv(m.data(), m.size()), yv(y.data(), y.size());
  const OlsResult path_a = ols_fit(design({x}), mv);
  const OlsResult path_b = ols_fit(design({x, m}), yv);
  const OlsResult path_c = ols_fit(design({x}), yv);

  MediationResult r;
  r.n = static_cast<int>(x.size());
  r.a = path_a.coefficients(1);
  r.b = path_b.coefficients(2);
  r.direct = path_b.coefficients(1);
  r.total = path_c.coefficients(1);
  r.indirect = r.a * r.b;
  const double sa = path_a.std_errors(1), sb = path_b.std_errors(2);
  const double se = std::sqrt(r.b * r.b * sa * sa + r.a * r.a * sb * sb);
  if (se > 0.0) r.sobel_z = r.indirect / se;
  else r.sobel_z = r.indirect == 0.0 ? 0.0 : std::copysign(INFINITY, r.indirect);
  r.p = std::erfc(std::abs(r.sobel_z) / std::numbers::sqrt2);
  return r;
}

}  // namespace riverpilot::analytics

#include "riverpilot/error.hpp"
#include "riverpilot/markers.hpp"
#include "riverpilot/random.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace riverpilot::markers {

namespace {

// Similarity taking points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const Correspondence> corr, bool image_side) {
  double mx = 0.0, my = 0.0;
  for (const auto& c : corr) {
    const Vec2 p = image_side ? c.image : c.sheet;
    mx += p.x;
    my += p.y;
  }
  const double n = static_cast<double>(corr.size());
  mx /= n;
  my /= n;
  double mean_dist = 0.0;
  for (const auto& c : corr) {
    const Vec2 p = image_side ? c.image : c.sheet;
    mean_dist += std::hypot(p.x - mx, p.y - my);
  }
  mean_dist /= n;
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0;
  return t;
}

bool collinear(Vec2 a, Vec2 b, Vec2 c, double tol) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double scale = std::max(ab.squared_magnitude(), ac.squared_magnitude());
  return std::abs(ab.cross(ac)) <= tol * scale;
}

bool degenerate_sample(const std::array<Correspondence, 4>& s) {
  constexpr double tol = 1e-6;
  for (int skip = 0; skip < 4; ++skip) {
    std::array<int, 3> idx{};
    int k = 0;
    for (int i = 0; i < 4; ++i)
      if (i != skip) idx[k++] = i;
    if (collinear(s[idx[0]].sheet, s[idx[1]].sheet, s[idx[2]].sheet, tol) ||
        collinear(s[idx[0]].image, s[idx[1]].image, s[idx[2]].image, tol))
      return true;
  }
  return false;
}

std::vector<std::size_t> collect_inliers(const Homography& h, std::span<const Correspondence> corr,
                                         double threshold, double* total_error) {
  std::vector<std::size_t> inliers;
  double total = 0.0;
  const double t2 = threshold * threshold;
  const auto& m = h.matrix();
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Vec2 p = corr[i].sheet;
    const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
    if (std::abs(w) < 1e-12) continue;
    const double u = (m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w - corr[i].image.x;
    const double v = (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w - corr[i].image.y;
    const double e2 = u * u + v * v;
    if (e2 < t2) {
      inliers.push_back(i);
      total += e2;
    }
  }
  if (total_error) *total_error = total;
  return inliers;
}

}  // namespace

Homography normalized_dlt(std::span<const Correspondence> corr) {
  if (corr.size() < 4) throw Error(ErrorCode::InsufficientCorrespondences);
  const Eigen::Matrix3d ts = normalizing_transform(corr, false);
  const Eigen::Matrix3d ti = normalizing_transform(corr, true);

  using Row9 = Eigen::Matrix<double, Eigen::Dynamic, 9>;
  using Mat9 = Eigen::Matrix<double, 9, 9>;
  Row9 a(2 * corr.size(), 9);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(corr[i].sheet.x, corr[i].sheet.y, 1.0);
    const Eigen::Vector3d d = ti * Eigen::Vector3d(corr[i].image.x, corr[i].image.y, 1.0);
    const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
    a.row(r + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
  }
  // A and its triangular factor share right singular vectors; the 9x9 factor
  // keeps the SVD fixed-size however many points there are.
  Eigen::Matrix<double, 9, 1> hvec;
  bool solved = false;
  if (a.rows() == 8) {
    // Minimal case: fix h33 = 1 (the normalized centroid never maps to
    // infinity for a usable sample) and solve the square system.
    const Eigen::Matrix<double, 8, 8> lhs = a.leftCols<8>();
    const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(lhs);
    if (lu.isInvertible() && std::abs(lu.determinant()) > 1e-12) {
      hvec.head<8>() = lu.solve(-a.col(8));
      hvec(8) = 1.0;
      solved = hvec.allFinite();
    }
  }
  if (!solved) {
    // A and its triangular factor share right singular vectors; the 9x9
    // factor keeps the SVD fixed-size however many points there are.
    Mat9 core = Mat9::Zero();
    if (a.rows() >= 9) {
      Eigen::HouseholderQR<Row9> qr(a);
      core = qr.matrixQR().topRows<9>().triangularView<Eigen::Upper>();
    } else {
      core.topRows(a.rows()) = a;
    }
    Eigen::JacobiSVD<Mat9> svd(core, Eigen::ComputeFullV);
    hvec = svd.matrixV().col(8);
  }
  Eigen::Matrix3d hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
  return Homography(ti.inverse() * hn * ts);
}

double reprojection_error(const Homography& h, const Correspondence& c) {
  return distance(homography_apply(h, c.sheet), c.image);
}

RansacResult estimate_homography_ransac(std::span<const Correspondence> corr, const RansacParams& params) {
  if (corr.size() < 4) throw Error(ErrorCode::InsufficientCorrespondences);

  Rng rng(params.seed);
  const std::size_t n = corr.size();
  std::vector<std::size_t> best_inliers;
  double best_error = std::numeric_limits<double>::infinity();
  Homography best_h;

  int needed = params.max_iterations;
  int iter = 0;
  for (; iter < std::min(needed, params.max_iterations); ++iter) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = static_cast<std::size_t>(rng.below(n));
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      } while (!fresh);
    }
    std::array<Correspondence, 4> sample{corr[idx[0]], corr[idx[1]], corr[idx[2]], corr[idx[3]]};
    if (degenerate_sample(sample)) continue;

    const Homography h = normalized_dlt(sample);
    double err = 0.0;
    auto inliers = collect_inliers(h, corr, params.inlier_threshold_px, &err);
    if (inliers.size() > best_inliers.size() || (inliers.size() == best_inliers.size() && err < best_error)) {
      best_inliers = std::move(inliers);
      best_error = err;
      best_h = h;
      const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
      const double p_good = std::pow(w, 4.0);
      if (p_good >= 1.0 - 1e-12) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        const double k = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
        needed = static_cast<int>(std::min<double>(params.max_iterations, std::ceil(k)));
      }
    }
  }

  if (best_inliers.size() < 4) throw Error(ErrorCode::NoConsensus);

  // Refit on the consensus set until it stops changing.
  RansacResult result{best_h, best_inliers, iter};
  for (int round = 0; round < 3; ++round) {
    std::vector<Correspondence> subset;
    subset.reserve(result.inliers.size());
    for (auto i : result.inliers) subset.push_back(corr[i]);
    const Homography refit = normalized_dlt(subset);
    auto inliers = collect_inliers(refit, corr, params.inlier_threshold_px, nullptr);
    if (inliers.size() < 4 || (round > 0 && inliers.size() < result.inliers.size())) break;
    const bool same = inliers == result.inliers;
    result.homography = refit;
    result.inliers = std::move(inliers);
    if (same) break;
  }
  return result;
}

}  // namespace riverpilot::markers

#include "riverpilot/geometry.hpp"

#include "riverpilot/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <limits>

namespace riverpilot {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

double Angle::canonicalize(double radians) {
  double r = std::fmod(radians, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  if (r > kPi) r -= kTwoPi;
  return r;
}

double angular_distance(Angle a, Angle b) {
  double d = std::abs(a.radians() - b.radians());
  if (d > kPi) d = kTwoPi - d;
  return d;
}

// ---------------------------------------------------------------------------
// Homography

Eigen::Matrix3d Homography::normalize(const Eigen::Matrix3d& m) {
  const double norm = m.norm();
  if (norm == 0.0 || !std::isfinite(norm)) return m;
  Eigen::Matrix3d out = m / norm;
  double pivot = out(2, 2);
  if (pivot == 0.0) {
    for (int i = 0; i < 9 && pivot == 0.0; ++i) pivot = out(i / 3, i % 3);
  }
  if (pivot < 0.0) out = -out;
  return out;
}

Homography Homography::translation(Vec2 t) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = t.x;
  m(1, 2) = t.y;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

double Homography::condition_number() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m_);
  const auto& s = svd.singularValues();
  if (s(2) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(2);
}

bool Homography::approx_equal(const Homography& other, double tol) const {
  return (m_ - other.m_).cwiseAbs().maxCoeff() <= tol;
}

Vec2 homography_apply(const Homography& h, Vec2 p) {
  const auto& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) < 1e-12) throw Error(ErrorCode::PointAtInfinity);
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

// ---------------------------------------------------------------------------
// Camera

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::inverse_matrix() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::ConfigError, "intrinsics: fx, fy must be > 0");
}

bool Pose3D::is_rotation_valid(double tol) const {
  const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  return (rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

std::array<double, 3> euler_angles(const Eigen::Matrix3d& r) {
  // R = Rz(yaw) * Ry(pitch) * Rx(roll)
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

Eigen::Matrix3d from_euler_angles(const std::array<double, 3>& rpy) {
  return rot_z(rpy[2]) * rot_y(rpy[1]) * rot_x(rpy[0]);
}

std::optional<Vec2> project(const Pose3D& pose, const CameraIntrinsics& k, Vec2 p) {
  const Eigen::Vector3d c = pose.apply(Eigen::Vector3d(p.x, p.y, 0.0));
  if (c.z() <= 1e-9) return std::nullopt;
  return Vec2{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
}

Pose3D look_at_sheet(Vec2 target, double dist, double tilt, double azimuth, double roll) {
  // Camera looking straight down the sheet normal has its optical axis along
  // +z of the sheet frame (the sheet's printed face is seen from -z side when
  // x right / y down / z into the sheet). Camera axes start aligned with sheet.
  const Eigen::Vector3d axis_dir(std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth),
                                 std::cos(tilt));
  const Eigen::Vector3d tgt(target.x, target.y, 0.0);
  const Eigen::Vector3d center = tgt - dist * axis_dir;

  // Camera-to-sheet rotation: columns are camera axes expressed in sheet frame.
  // Build by tilting the fronto-parallel frame about the axis perpendicular
  // to the azimuth, then rolling about the optical axis.
  const Eigen::Matrix3d align = rot_z(azimuth) * rot_y(tilt) * rot_z(-azimuth);
  const Eigen::Matrix3d cam_to_sheet = align * rot_z(roll);

  Pose3D pose;
  pose.rotation = cam_to_sheet.transpose();
  pose.translation = -pose.rotation * center;
  return pose;
}

Homography forward_homography(const Pose3D& pose, const CameraIntrinsics& k) {
  Eigen::Matrix3d rt;
  rt.col(0) = pose.rotation.col(0);
  rt.col(1) = pose.rotation.col(1);
  rt.col(2) = pose.translation;
  return Homography(k.matrix() * rt);
}

Pose3D pose_from_homography(const Homography& h, const CameraIntrinsics& k) {
  k.validate();
  if (h.condition_number() > 1e8) throw Error(ErrorCode::DegenerateHomography);

  const Eigen::Matrix3d g = k.inverse_matrix() * h.matrix();
  const Eigen::Vector3d h1 = g.col(0);
  const Eigen::Vector3d h2 = g.col(1);
  const Eigen::Vector3d h3 = g.col(2);
  double lambda = 2.0 / (h1.norm() + h2.norm());
  // Plane in front of the camera.
  if (lambda * h3.z() < 0.0) lambda = -lambda;

  const Eigen::Vector3d r1 = lambda * h1;
  const Eigen::Vector3d r2 = lambda * h2;
  Eigen::Matrix3d approx;
  approx.col(0) = r1;
  approx.col(1) = r2;
  approx.col(2) = r1.cross(r2);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(approx, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }

  Pose3D pose;
  pose.rotation = r;
  pose.translation = lambda * h3;
  return pose;
}

// ---------------------------------------------------------------------------
// Planar helpers

std::optional<double> segment_intersection(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  const Vec2 r = a1 - a0;
  const Vec2 s = b1 - b0;
  const double denom = r.cross(s);
  const Vec2 qp = b0 - a0;
  if (std::abs(denom) < 1e-15) {
    // Parallel; collinear overlap counts as contact at the earliest shared point.
    if (std::abs(qp.cross(r)) > 1e-12) return std::nullopt;
    const double rr = r.dot(r);
    if (rr == 0.0) return std::nullopt;
    double t0 = qp.dot(r) / rr;
    double t1 = (b1 - a0).dot(r) / rr;
    if (t0 > t1) std::swap(t0, t1);
    if (t1 < 0.0 || t0 > 1.0) return std::nullopt;
    return std::max(0.0, t0);
  }
  const double t = qp.cross(s) / denom;
  const double u = qp.cross(r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

std::optional<double> polyline_crossing(Vec2 a0, Vec2 a1, std::span<const Vec2> polyline) {
  std::optional<double> best;
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    if (auto t = segment_intersection(a0, a1, polyline[i], polyline[i + 1])) {
      if (!best || *t < *best) best = t;
    }
  }
  return best;
}

double distance_to_segment(Vec2 p, Vec2 s0, Vec2 s1) {
  const Vec2 d = s1 - s0;
  const double len2 = d.squared_magnitude();
  if (len2 == 0.0) return distance(p, s0);
  const double t = std::clamp((p - s0).dot(d) / len2, 0.0, 1.0);
  return distance(p, s0 + d * t);
}

double distance_to_polyline(Vec2 p, std::span<const Vec2> polyline) {
  if (polyline.size() == 1) return distance(p, polyline[0]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    best = std::min(best, distance_to_segment(p, polyline[i], polyline[i + 1]));
  }
  return best;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> poly, double boundary_tol) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if (distance_to_segment(p, a, b) <= boundary_tol) return false;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace riverpilot

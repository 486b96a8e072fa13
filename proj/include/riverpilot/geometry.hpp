#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace riverpilot {

// Sheet frame: origin at the top-left corner of a sheet, x right, y down,
// millimeters. Image frame: pixels, same orientation.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr bool operator==(const Vec2&) const = default;

  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double magnitude() const { return std::hypot(x, y); }
  constexpr double squared_magnitude() const { return x * x + y * y; }
  double bearing() const { return std::atan2(y, x); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double distance(Vec2 a, Vec2 b) { return (a - b).magnitude(); }

/// Direction in radians, always held in (-pi, pi].
class Angle {
 public:
  constexpr Angle() = default;
  explicit Angle(double radians) : value_(canonicalize(radians)) {}

  static Angle from_degrees(double deg) { return Angle(deg * std::numbers::pi / 180.0); }
  static Angle of(Vec2 v) { return Angle(v.bearing()); }

  double radians() const { return value_; }
  double degrees() const { return value_ * 180.0 / std::numbers::pi; }
  Vec2 unit() const { return {std::cos(value_), std::sin(value_)}; }

  bool operator==(const Angle&) const = default;

  static double canonicalize(double radians);

 private:
  double value_ = 0.0;
};

/// Shortest angular separation, in [0, pi].
double angular_distance(Angle a, Angle b);

/// Projective map with unit Frobenius norm and positive h33 (or, when h33 is
/// zero, positive first nonzero entry in row-major order).
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity() / std::sqrt(3.0)) {}
  explicit Homography(const Eigen::Matrix3d& m) : m_(normalize(m)) {}

  static Homography identity() { return Homography(); }
  static Homography translation(Vec2 t);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const;
  double condition_number() const;

  /// Up-to-scale equality: compares normalized matrices.
  bool approx_equal(const Homography& other, double tol) const;

  static Eigen::Matrix3d normalize(const Eigen::Matrix3d& m);

 private:
  Eigen::Matrix3d m_;
};

Vec2 homography_apply(const Homography& h, Vec2 p);

struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 640.0;
  double cy = 400.0;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;
  void validate() const;
};

/// Rigid transform taking sheet-frame points (z = 0 on the sheet) into the
/// camera frame: X_cam = rotation * X_sheet + translation.
struct Pose3D {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d camera_center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  bool is_rotation_valid(double tol = 1e-9) const;
};

Eigen::Matrix3d rot_x(double radians);
Eigen::Matrix3d rot_y(double radians);
Eigen::Matrix3d rot_z(double radians);

/// ZYX (yaw, pitch, roll) decomposition; returns {roll, pitch, yaw}.
std::array<double, 3> euler_angles(const Eigen::Matrix3d& r);
Eigen::Matrix3d from_euler_angles(const std::array<double, 3>& roll_pitch_yaw);

/// Projects a sheet-plane point through pose and pinhole intrinsics.
/// Returns nullopt when the point lies at or behind the camera plane.
std::optional<Vec2> project(const Pose3D& pose, const CameraIntrinsics& k, Vec2 sheet_point);

/// Camera pose looking at `target` on the sheet from `distance` mm, with the
/// optical axis tilted `tilt` radians off the sheet normal toward azimuth
/// `azimuth`, and rolled `roll` radians about the optical axis.
Pose3D look_at_sheet(Vec2 target, double distance, double tilt, double azimuth, double roll);

/// Image-from-sheet homography induced by a plane pose: K [r1 r2 t].
Homography forward_homography(const Pose3D& pose, const CameraIntrinsics& k);

/// Inverse of forward_homography for a calibrated camera.
Pose3D pose_from_homography(const Homography& h, const CameraIntrinsics& k);

// Planar helpers shared by the game and canvas modules.

/// Proper or touching intersection of segments [a0,a1] and [b0,b1]; returns
/// the parameter along a in [0,1] of the first contact.
std::optional<double> segment_intersection(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1);

/// Earliest crossing parameter of segment [a0,a1] against a polyline.
std::optional<double> polyline_crossing(Vec2 a0, Vec2 a1, std::span<const Vec2> polyline);

double distance_to_segment(Vec2 p, Vec2 s0, Vec2 s1);
double distance_to_polyline(Vec2 p, std::span<const Vec2> polyline);

/// Even-odd test; points within `boundary_tol` of an edge count as outside.
bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon, double boundary_tol = 1e-6);

}  // namespace riverpilot

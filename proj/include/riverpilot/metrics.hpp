#pragma once

#include "riverpilot/geometry.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace riverpilot::analytics {

enum class VisibleSheet { None, VelocitySheet, ActivitySheet };

std::string_view to_string(VisibleSheet s);
VisibleSheet visible_sheet_from_string(std::string_view s);

struct PoseSample {
  std::int64_t ms = 0;
  Pose3D pose;  // tablet camera pose relative to the sheet frame
  VisibleSheet sheet = VisibleSheet::None;
};

struct RobotEvent {
  enum class Kind { OnSheet, OffSheet, Grabbed, Released };
  std::int64_t ms = 0;
  Kind kind = Kind::OnSheet;
};

/// Attempt counts per level letter, per team. Levels with zero attempts were
/// not attempted and are left out.
using AttemptTable = std::map<std::string, std::map<char, int>>;
using NormalizedTable = std::map<std::string, std::map<char, double>>;

/// Each count divided by the mean count of all teams that attempted the same
/// level. Throws InsufficientCohort when fewer than two teams attempted a level.
NormalizedTable normalized_attempts(const AttemptTable& attempts);

/// OLS slope of `values` against 0, 1, 2, ... Throws InsufficientLevels.
double attempts_growth_slope(std::span<const double> values);
/// Same against explicit level indices.
double attempts_growth_slope(std::span<const double> index, std::span<const double> values);

inline constexpr double kJerkRateHz = 20.0;

/// RMS third difference of the resampled Euler angles (root-sum-squared over
/// the three angles) divided by dt^3, over the samples showing `sheet`.
/// Resampling happens inside each contiguous run of such samples.
/// Throws TooFewSamples.
double jerkiness(std::span<const PoseSample> samples, VisibleSheet sheet);
/// Same on the camera center, mm/s^3.
double position_jerkiness(std::span<const PoseSample> samples, VisibleSheet sheet);

struct Visibility {
  double seconds = 0.0;  // any sheet visible
  int episodes = 0;
  double velocity_seconds = 0.0;
  double activity_seconds = 0.0;
};

/// Each sample's state holds until the next one; the last holds to `t1_ms`.
Visibility ar_visible_time(std::span<const PoseSample> samples, std::int64_t t0_ms, std::int64_t t1_ms);

struct RobotUsage {
  double on_sheet_seconds = 0.0;
  double grabbed_seconds = 0.0;
};

/// Both channels start false and hold their last value to `t1_ms`.
RobotUsage robot_usage(std::span<const RobotEvent> events, std::int64_t t0_ms, std::int64_t t1_ms);

struct MetricsRow {
  std::string team;
  std::string group;  // bot policy, or "human"
  int year = 0;
  std::string stream;
  std::vector<char> levels;                 // play order
  std::vector<int> attempts;                // per level
  std::vector<double> normalized_attempts;  // per level
  double growth_slope = 0.0;
  double mean_attempts = 0.0;
  double pre = 0.0;
  double post = 0.0;
  double mcq = 0.0;
  double gain = 0.0;
  double raw_gain = 0.0;
  double ar_velocity_s = 0.0;
  double ar_activity_s = 0.0;
  int ar_episodes = 0;
  double robot_on_sheet_s = 0.0;
  double robot_grabbed_s = 0.0;
  double jerk_velocity = 0.0;  // NaN when too few samples
  double jerk_activity = 0.0;
  double position_jerk_velocity = 0.0;
  double position_jerk_activity = 0.0;
  int canvas_score = 0;
};

/// Fixed column order, rows as given. NaN becomes an empty cell.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<std::string> metrics_columns();

/// The statistical battery over a cohort, plus the same per group. Tests that
/// cannot run record their error code instead of a result.
nlohmann::json cohort_stats(const std::vector<MetricsRow>& rows);

}  // namespace riverpilot::analytics

#include "riverpilot/pipeline.hpp"

#include "riverpilot/assessment.hpp"
#include "riverpilot/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace riverpilot::pipeline {

using analytics::MetricsRow;
using analytics::VisibleSheet;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class F>
double or_nan(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    return kNaN;
  }
}

}  // namespace

MetricsRow team_metrics(const service::ServiceSession& s) {
  const auto& st = s.game().state();
  MetricsRow r;
  r.team = s.config().team_id;
  r.group = s.config().group;
  r.year = s.config().year;
  r.stream = std::string(game::to_string(s.config().stream));
  int played = 0, total = 0;
  for (const auto& res : st.results) {
    r.levels.push_back(res.level);
    r.attempts.push_back(res.attempts);
    if (res.attempts > 0) {
      ++played;
      total += res.attempts;
    }
  }
  r.mean_attempts = played ? static_cast<double>(total) / played : kNaN;
  r.pre = s.pre_score();
  r.post = s.post_score();
  r.mcq = s.mcq_score();
  r.gain = assessment::learning_gain(r.pre, r.post);
  r.raw_gain = assessment::raw_gain(r.pre, r.post);

  const std::int64_t end = st.clock_ms();
  const auto vis = analytics::ar_visible_time(s.pose_samples(), 0, end);
  r.ar_velocity_s = vis.velocity_seconds;
  r.ar_activity_s = vis.activity_seconds;
  r.ar_episodes = vis.episodes;
  const auto robot = analytics::robot_usage(s.robot_events(), 0, end);
  r.robot_on_sheet_s = robot.on_sheet_seconds;
  r.robot_grabbed_s = robot.grabbed_seconds;
  const auto& poses = s.pose_samples();
  r.jerk_velocity = or_nan([&] { return analytics::jerkiness(poses, VisibleSheet::VelocitySheet); });
  r.jerk_activity = or_nan([&] { return analytics::jerkiness(poses, VisibleSheet::ActivitySheet); });
  r.position_jerk_velocity = or_nan([&] { return analytics::position_jerkiness(poses, VisibleSheet::VelocitySheet); });
  r.position_jerk_activity = or_nan([&] { return analytics::position_jerkiness(poses, VisibleSheet::ActivitySheet); });
  for (const auto& [letter, c] : s.canvases()) r.canvas_score = std::max(r.canvas_score, canvas::score_canvas(c));
  return r;
}

void normalize_cohort(std::vector<MetricsRow>& rows) {
  analytics::AttemptTable table;
  for (const auto& r : rows) {
    auto& row = table[r.team];
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      if (r.attempts[i] > 0) row[r.levels[i]] = r.attempts[i];
    }
  }
  // Levels attempted by a single team cannot be normalized; drop them.
  std::map<char, int> teams_per_level;
  for (const auto& [team, row] : table) {
    for (const auto& [letter, n] : row) ++teams_per_level[letter];
  }
  for (auto& [team, row] : table) {
    std::erase_if(row, [&](const auto& kv) { return teams_per_level[kv.first] < 2; });
  }
  const auto norm = analytics::normalized_attempts(table);
  for (auto& r : rows) {
    r.normalized_attempts.assign(r.levels.size(), kNaN);
    std::vector<double> idx, vals;
    const auto it = norm.find(r.team);
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      if (it == norm.end()) break;
      const auto v = it->second.find(r.levels[i]);
      if (v == it->second.end()) continue;
      r.normalized_attempts[i] = v->second;
      idx.push_back(static_cast<double>(i));
      vals.push_back(v->second);
    }
    r.growth_slope = or_nan([&] { return analytics::attempts_growth_slope(idx, vals); });
  }
}

Report analyze_logs(const std::filesystem::path& logs) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(logs)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Report report;
  for (const auto& f : files) {
    const auto replayed = service::replay(f);
    report.rows.push_back(team_metrics(*replayed.session));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return a.team < b.team; });
  normalize_cohort(report.rows);
  report.stats = analytics::cohort_stats(report.rows);
  return report;
}

void write_report(const Report& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
    analytics::write_metrics_csv(csv, r.rows);
  }
  std::ofstream js(out_dir / "stats.json", std::ios::binary);
  js << r.stats.dump(2) << '\n';
}

}  // namespace riverpilot::pipeline

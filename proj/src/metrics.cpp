#include "riverpilot/metrics.hpp"
#include "riverpilot/error.hpp"
#include "riverpilot/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>

namespace riverpilot::analytics {

using nlohmann::json;

std::string_view to_string(VisibleSheet s) {
  switch (s) {
    case VisibleSheet::None: return "None";
    case VisibleSheet::VelocitySheet: return "VelocitySheet";
    case VisibleSheet::ActivitySheet: return "ActivitySheet";
  }
  return "?";
}

VisibleSheet visible_sheet_from_string(std::string_view s) {
  for (auto v : {VisibleSheet::None, VisibleSheet::VelocitySheet, VisibleSheet::ActivitySheet}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::SchemaError, "unknown sheet " + std::string(s));
}

NormalizedTable normalized_attempts(const AttemptTable& attempts) {
  std::map<char, std::pair<double, int>> per_level;  // sum, teams
  for (const auto& [team, levels] : attempts) {
    for (const auto& [letter, n] : levels) {
      if (n <= 0) continue;
      per_level[letter].first += n;
      per_level[letter].second += 1;
    }
  }
  for (const auto& [letter, acc] : per_level) {
    if (acc.second < 2) throw Error(ErrorCode::InsufficientCohort, std::string("level ") + letter);
  }
  NormalizedTable out;
  for (const auto& [team, levels] : attempts) {
    auto& row = out[team];
    for (const auto& [letter, n] : levels) {
      if (n <= 0) continue;
      const auto& acc = per_level.at(letter);
      row[letter] = n / (acc.first / acc.second);
    }
  }
  return out;
}

double attempts_growth_slope(std::span<const double> index, std::span<const double> values) {
  if (index.size() != values.size()) throw Error(ErrorCode::LengthMismatch);
  if (values.size() < 2) throw Error(ErrorCode::InsufficientLevels, std::to_string(values.size()) + " levels");
  const double n = static_cast<double>(values.size());
  const double mx = std::accumulate(index.begin(), index.end(), 0.0) / n;
  const double my = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sxy += (index[i] - mx) * (values[i] - my);
    sxx += (index[i] - mx) * (index[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorCode::InsufficientLevels, "all at one level index");
  return sxy / sxx;
}

double attempts_growth_slope(std::span<const double> values) {
  std::vector<double> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0.0);
  return attempts_growth_slope(idx, values);
}

namespace {

using Channels = std::array<double, 3>;

// Resamples each contiguous run showing `sheet` at kJerkRateHz and returns
// the RMS third difference divided by dt^3.
double rms_third_difference(std::span<const PoseSample> samples, VisibleSheet sheet,
                            const std::function<Channels(const PoseSample&)>& channels, bool unwrap) {
  const auto shown = std::count_if(samples.begin(), samples.end(), [&](const PoseSample& s) { return s.sheet == sheet; });
  if (shown < 4) throw Error(ErrorCode::TooFewSamples, std::to_string(shown) + " samples");
  const double dt = 1.0 / kJerkRateHz;
  double sum_sq = 0.0;
  std::size_t terms = 0;

  std::size_t i = 0;
  while (i < samples.size()) {
    if (samples[i].sheet != sheet) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < samples.size() && samples[j].sheet == sheet) ++j;
    // Run [i, j): channel values, unwrapped along the run.
    std::vector<double> t;
    std::vector<Channels> v;
    for (std::size_t k = i; k < j; ++k) {
      Channels c = channels(samples[k]);
      if (unwrap && !v.empty()) {
        for (int a = 0; a < 3; ++a) {
          const double prev = v.back()[a];
          c[a] = prev + std::remainder(c[a] - prev, 2.0 * std::numbers::pi);
        }
      }
      t.push_back(samples[k].ms / 1000.0);
      v.push_back(c);
    }
    std::vector<Channels> grid;
    std::size_t seg = 0;
    for (double tau = t.front(); tau <= t.back() + 1e-9; tau = t.front() + dt * static_cast<double>(grid.size())) {
      while (seg + 1 < t.size() && t[seg + 1] < tau) ++seg;
      Channels c = v[seg];
      if (seg + 1 < t.size()) {
        const double w = std::clamp((tau - t[seg]) / (t[seg + 1] - t[seg]), 0.0, 1.0);
        for (int a = 0; a < 3; ++a) c[a] = v[seg][a] + w * (v[seg + 1][a] - v[seg][a]);
      }
      grid.push_back(c);
    }
    for (std::size_t k = 3; k < grid.size(); ++k) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d3 = grid[k][a] - 3.0 * grid[k - 1][a] + 3.0 * grid[k - 2][a] - grid[k - 3][a];
        s += d3 * d3;
      }
      sum_sq += s;
      ++terms;
    }
    i = j;
  }
  if (terms == 0) throw Error(ErrorCode::TooFewSamples, "no run spans four resampled points");
  return std::sqrt(sum_sq / static_cast<double>(terms)) / (dt * dt * dt);
}

}  // namespace

double jerkiness(std::span<const PoseSample> samples, VisibleSheet sheet) {
  return rms_third_difference(
      samples, sheet, [](const PoseSample& s) { return euler_angles(s.pose.rotation); }, true);
}

double position_jerkiness(std::span<const PoseSample> samples, VisibleSheet sheet) {
  return rms_third_difference(
      samples, sheet,
      [](const PoseSample& s) {
        const Eigen::Vector3d c = s.pose.camera_center();
        return Channels{c.x(), c.y(), c.z()};
      },
      false);
}

Visibility ar_visible_time(std::span<const PoseSample> samples, std::int64_t t0_ms, std::int64_t t1_ms) {
  Visibility out;
  bool in_episode = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::int64_t a = std::max(samples[i].ms, t0_ms);
    const std::int64_t b = std::min(i + 1 < samples.size() ? samples[i + 1].ms : t1_ms, t1_ms);
    if (b <= a) continue;
    const double secs = (b - a) / 1000.0;
    const VisibleSheet s = samples[i].sheet;
    if (s == VisibleSheet::None) {
      in_episode = false;
      continue;
    }
    if (!in_episode) ++out.episodes;
    in_episode = true;
    out.seconds += secs;
    (s == VisibleSheet::VelocitySheet ? out.velocity_seconds : out.activity_seconds) += secs;
  }
  return out;
}

RobotUsage robot_usage(std::span<const RobotEvent> events, std::int64_t t0_ms, std::int64_t t1_ms) {
  RobotUsage out;
  bool on = false, grabbed = false;
  std::int64_t last = t0_ms;
  auto advance = [&](std::int64_t to) {
    to = std::clamp(to, t0_ms, t1_ms);
    if (to > last) {
      if (on) out.on_sheet_seconds += (to - last) / 1000.0;
      if (grabbed) out.grabbed_seconds += (to - last) / 1000.0;
      last = to;
    }
  };
  for (const auto& e : events) {
    advance(e.ms);
    switch (e.kind) {
      case RobotEvent::Kind::OnSheet: on = true; break;
      case RobotEvent::Kind::OffSheet: on = false; break;
      case RobotEvent::Kind::Grabbed: grabbed = true; break;
      case RobotEvent::Kind::Released: grabbed = false; break;
    }
  }
  advance(t1_ms);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

constexpr int kLevelSlots = 5;

std::string cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::string> metrics_columns() {
  std::vector<std::string> cols{"team", "group", "year", "stream", "levels"};
  for (int i = 1; i <= kLevelSlots; ++i) cols.push_back("attempts_" + std::to_string(i));
  for (int i = 1; i <= kLevelSlots; ++i) cols.push_back("normalized_attempts_" + std::to_string(i));
  for (const char* c : {"growth_slope", "mean_attempts", "pre", "post", "mcq", "gain", "raw_gain", "ar_velocity_s",
                        "ar_activity_s", "ar_episodes", "robot_on_sheet_s", "robot_grabbed_s", "jerk_velocity",
                        "jerk_activity", "position_jerk_velocity", "position_jerk_activity", "canvas_score"}) {
    cols.push_back(c);
  }
  return cols;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  const auto cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rows) {
    std::vector<std::string> c{r.team, r.group, std::to_string(r.year), r.stream, std::string(r.levels.begin(), r.levels.end())};
    for (int i = 0; i < kLevelSlots; ++i) c.push_back(i < static_cast<int>(r.attempts.size()) ? std::to_string(r.attempts[i]) : "");
    for (int i = 0; i < kLevelSlots; ++i) {
      c.push_back(i < static_cast<int>(r.normalized_attempts.size()) ? cell(r.normalized_attempts[i]) : "");
    }
    for (double v : {r.growth_slope, r.mean_attempts, r.pre, r.post, r.mcq, r.gain, r.raw_gain, r.ar_velocity_s,
                     r.ar_activity_s}) {
      c.push_back(cell(v));
    }
    c.push_back(std::to_string(r.ar_episodes));
    for (double v : {r.robot_on_sheet_s, r.robot_grabbed_s, r.jerk_velocity, r.jerk_activity, r.position_jerk_velocity,
                     r.position_jerk_activity}) {
      c.push_back(cell(v));
    }
    c.push_back(std::to_string(r.canvas_score));
    for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << c[i];
    out << "\n";
  }
}

namespace {

json stat_json(const StatResult& s) {
  return {{"statistic", s.statistic}, {"p", s.p}, {"method", s.method}, {"n", s.n}};
}

json guarded(const std::function<json()>& f) {
  try {
    return f();
  } catch (const Error& e) {
    return {{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}};
  }
}

// Pairs where both values are finite.
std::pair<std::vector<double>, std::vector<double>> finite_pairs(const std::vector<MetricsRow>& rows,
                                                                 double MetricsRow::*x, double MetricsRow::*y) {
  std::vector<double> a, b;
  for (const auto& r : rows) {
    if (std::isfinite(r.*x) && std::isfinite(r.*y)) {
      a.push_back(r.*x);
      b.push_back(r.*y);
    }
  }
  return {a, b};
}

json battery(const std::vector<MetricsRow>& rows) {
  json out;
  std::vector<double> pre, post, year, slope;
  for (const auto& r : rows) {
    pre.push_back(r.pre);
    post.push_back(r.post);
    year.push_back(r.year);
    slope.push_back(r.growth_slope);
  }
  out["n"] = rows.size();
  out["mean_pre"] = rows.empty() ? 0.0 : std::accumulate(pre.begin(), pre.end(), 0.0) / rows.size();
  out["mean_post"] = rows.empty() ? 0.0 : std::accumulate(post.begin(), post.end(), 0.0) / rows.size();
  out["mean_growth_slope"] = rows.empty() ? 0.0 : std::accumulate(slope.begin(), slope.end(), 0.0) / rows.size();
  out["pre_post_wilcoxon"] = guarded([&] { return stat_json(wilcoxon_signed_rank(pre, post)); });
  out["pre_post_ks"] = guarded([&] { return stat_json(ks_two_sample(pre, post)); });

  struct Pair { const char* name; double MetricsRow::*x; double MetricsRow::*y; };
  const Pair pairs[] = {
      {"mean_attempts_post", &MetricsRow::mean_attempts, &MetricsRow::post},
      {"mean_attempts_pre", &MetricsRow::mean_attempts, &MetricsRow::pre},
      {"growth_slope_post", &MetricsRow::growth_slope, &MetricsRow::post},
      {"jerk_velocity_post", &MetricsRow::jerk_velocity, &MetricsRow::post},
      {"jerk_activity_post", &MetricsRow::jerk_activity, &MetricsRow::post},
      {"ar_velocity_post", &MetricsRow::ar_velocity_s, &MetricsRow::post},
      {"ar_activity_post", &MetricsRow::ar_activity_s, &MetricsRow::post},
      {"robot_grabbed_post", &MetricsRow::robot_grabbed_s, &MetricsRow::post},
      {"mcq_post", &MetricsRow::mcq, &MetricsRow::post},
  };
  json sp, pe;
  for (const auto& p : pairs) {
    const auto [a, b] = finite_pairs(rows, p.x, p.y);
    sp[p.name] = guarded([&] { return stat_json(spearman(a, b)); });
    pe[p.name] = guarded([&] { return stat_json(pearson(a, b)); });
  }
  sp["year_pre"] = guarded([&] { return stat_json(spearman(year, pre)); });
  sp["year_post"] = guarded([&] { return stat_json(spearman(year, post)); });
  out["spearman"] = sp;
  out["pearson"] = pe;

  out["ols_post_on_mean_attempts"] = guarded([&] {
    std::vector<double> x;
    for (const auto& r : rows) x.push_back(r.mean_attempts);
    const auto fit = ols_fit(design({x}), Eigen::Map<const Eigen::VectorXd>(post.data(), post.size()));
    return json{{"intercept", fit.coefficients(0)}, {"slope", fit.coefficients(1)}, {"p_slope", fit.p(1)},
                {"r2", fit.r2}, {"n", fit.n}, {"method", "ols"}};
  });
  out["mediation"] = guarded([&] {
    std::vector<double> x, m, y;
    for (const auto& r : rows) {
      if (!std::isfinite(r.jerk_velocity)) continue;
      x.push_back(r.mean_attempts);
      m.push_back(r.jerk_velocity);
      y.push_back(r.post);
    }
    const auto med = mediation(x, m, y);
    return json{{"x", "mean_attempts"}, {"m", "jerk_velocity"}, {"y", "post"},
                {"a", med.a}, {"b", med.b}, {"direct", med.direct}, {"total", med.total},
                {"indirect", med.indirect}, {"sobel_z", med.sobel_z}, {"p", med.p}, {"n", med.n},
                {"method", "baron_kenny_sobel"}};
  });
  return out;
}

}  // namespace

json cohort_stats(const std::vector<MetricsRow>& rows) {
  json out = battery(rows);
  std::set<std::string> groups;
  for (const auto& r : rows) groups.insert(r.group);
  json by_group = json::object();
  for (const auto& g : groups) {
    std::vector<MetricsRow> sub;
    std::copy_if(rows.begin(), rows.end(), std::back_inserter(sub), [&](const MetricsRow& r) { return r.group == g; });
    by_group[g] = battery(sub);
  }
  out["groups"] = by_group;
  return out;
}

}  // namespace riverpilot::analytics

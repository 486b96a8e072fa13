#include "doctest.h"

#include "riverpilot/error.hpp"
#include "riverpilot/metrics.hpp"
#include "riverpilot/random.hpp"
#include "riverpilot/stats.hpp"

#include <cmath>
#include <sstream>

using namespace riverpilot;
using namespace riverpilot::analytics;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::ParseError;
}

PoseSample sample(double t_s, std::array<double, 3> rpy, VisibleSheet sheet = VisibleSheet::VelocitySheet) {
  PoseSample s;
  s.ms = static_cast<std::int64_t>(std::llround(t_s * 1000));
  s.pose.rotation = from_euler_angles(rpy);
  s.pose.translation = {0, 0, 400};
  s.sheet = sheet;
  return s;
}

}  // namespace

TEST_CASE("normalized attempts") {
  AttemptTable equal{{"t1", {{'A', 2}, {'C', 3}}}, {"t2", {{'A', 2}, {'C', 3}}}};
  for (const auto& [team, row] : normalized_attempts(equal)) {
    for (const auto& [letter, v] : row) CHECK(v == doctest::Approx(1.0));
  }
  AttemptTable t{{"t1", {{'A', 4}}}, {"t2", {{'A', 1}}}, {"t3", {{'A', 1}}}};
  CHECK(normalized_attempts(t)["t1"]['A'] == doctest::Approx(2.0));
  CHECK(normalized_attempts(t)["t2"]['A'] == doctest::Approx(0.5));

  // Zero counts are not attempts; a level with a single team is an error.
  AttemptTable lonely{{"t1", {{'A', 2}, {'B', 1}}}, {"t2", {{'A', 2}, {'B', 0}}}};
  CHECK(code_of([&] { normalized_attempts(lonely); }) == ErrorCode::InsufficientCohort);
}

TEST_CASE("growth slope") {
  const std::vector<double> flat{1.3, 1.3, 1.3, 1.3};
  CHECK(attempts_growth_slope(flat) == doctest::Approx(0.0));
  const std::vector<double> down{2, 1.5, 1, 0.5, 0};
  CHECK(attempts_growth_slope(down) == doctest::Approx(-0.5));
  const std::vector<double> one{1.0};
  CHECK(code_of([&] { attempts_growth_slope(one); }) == ErrorCode::InsufficientLevels);
  const std::vector<double> idx{0, 2, 4}, vals{1, 2, 3};
  CHECK(attempts_growth_slope(idx, vals) == doctest::Approx(0.5));
}

TEST_CASE("jerkiness of a constant pose is zero") {
  std::vector<PoseSample> s;
  for (int i = 0; i < 50; ++i) s.push_back(sample(i * 0.033, {0.1, -0.2, 0.3}));
  CHECK(jerkiness(s, VisibleSheet::VelocitySheet) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(position_jerkiness(s, VisibleSheet::VelocitySheet) == doctest::Approx(0.0));
  CHECK(code_of([&] { jerkiness(s, VisibleSheet::ActivitySheet); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("jerkiness recovers the third derivative of a cubic") {
  const double c = 0.02;  // rad/s^3
  // Input rates whose samples include the 20 Hz grid; yaw wraps past pi.
  for (int rate : {20, 60}) {
    CAPTURE(rate);
    std::vector<PoseSample> s;
    for (int i = 0; i <= 10 * rate; ++i) {
      const double t = static_cast<double>(i) / rate;
      s.push_back(sample(t, {0.0, 0.0, c * t * t * t}));
    }
    CHECK(jerkiness(s, VisibleSheet::VelocitySheet) == doctest::Approx(6 * c).epsilon(0.05));
  }
}

TEST_CASE("jerkiness is linear in white-noise amplitude") {
  const std::vector<double> sigmas{0.001, 0.002, 0.004, 0.006, 0.008};
  std::vector<double> js;
  for (double sigma : sigmas) {
    Rng rng(42);
    std::vector<PoseSample> s;
    for (int i = 0; i < 2000; ++i) {
      s.push_back(sample(i * 0.05, {rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma)}));
    }
    js.push_back(jerkiness(s, VisibleSheet::VelocitySheet));
  }
  const auto fit = ols_fit(design({sigmas}), Eigen::Map<const Eigen::VectorXd>(js.data(), js.size()));
  CHECK(fit.r2 > 0.99);
  CHECK(fit.coefficients(1) > 0);
}

TEST_CASE("jerkiness is computed per sheet and per run") {
  std::vector<PoseSample> s;
  for (int i = 0; i < 40; ++i) s.push_back(sample(i * 0.05, {0, 0, 0.01 * i}, VisibleSheet::VelocitySheet));
  // A jump while the activity sheet is shown must not leak into the velocity sheet value.
  for (int i = 40; i < 80; ++i) s.push_back(sample(i * 0.05, {0, 0, 1.0 + (i % 2) * 0.3}, VisibleSheet::ActivitySheet));
  for (int i = 80; i < 120; ++i) s.push_back(sample(i * 0.05, {0, 0, 0.01 * i}, VisibleSheet::VelocitySheet));
  CHECK(jerkiness(s, VisibleSheet::VelocitySheet) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(jerkiness(s, VisibleSheet::ActivitySheet) > 100.0);
}

TEST_CASE("ar visible time") {
  std::vector<PoseSample> all;
  for (int i = 0; i <= 10; ++i) all.push_back(sample(i, {0, 0, 0}, VisibleSheet::VelocitySheet));
  auto v = ar_visible_time(all, 0, 10000);
  CHECK(v.seconds == doctest::Approx(10.0));
  CHECK(v.episodes == 1);
  CHECK(v.velocity_seconds == doctest::Approx(10.0));

  std::vector<PoseSample> none;
  for (int i = 0; i <= 10; ++i) none.push_back(sample(i, {0, 0, 0}, VisibleSheet::None));
  v = ar_visible_time(none, 0, 10000);
  CHECK(v.seconds == 0.0);
  CHECK(v.episodes == 0);

  std::vector<PoseSample> alt;
  for (int i = 0; i < 10; ++i) {
    alt.push_back(sample(i, {0, 0, 0}, i % 2 ? VisibleSheet::None : VisibleSheet::ActivitySheet));
  }
  v = ar_visible_time(alt, 0, 10000);
  CHECK(v.seconds == doctest::Approx(5.0));
  CHECK(v.episodes == 5);
  CHECK(v.activity_seconds == doctest::Approx(5.0));

  // Clipped to the window.
  v = ar_visible_time(all, 2500, 4000);
  CHECK(v.seconds == doctest::Approx(1.5));
  CHECK(v.episodes == 1);
}

TEST_CASE("robot usage") {
  using K = RobotEvent::Kind;
  std::vector<RobotEvent> full{{0, K::OnSheet}, {0, K::Grabbed}};
  auto u = robot_usage(full, 0, 10000);
  CHECK(u.on_sheet_seconds == doctest::Approx(10.0));
  CHECK(u.grabbed_seconds == doctest::Approx(10.0));
  u = robot_usage({}, 0, 10000);
  CHECK(u.on_sheet_seconds == 0.0);
  CHECK(u.grabbed_seconds == 0.0);
  std::vector<RobotEvent> alt;
  for (int i = 0; i < 10; ++i) alt.push_back({i * 1000, i % 2 ? K::Released : K::Grabbed});
  u = robot_usage(alt, 0, 10000);
  CHECK(u.grabbed_seconds == doctest::Approx(5.0));
  CHECK(u.on_sheet_seconds == 0.0);
}

TEST_CASE("metrics csv and cohort stats are deterministic") {
  std::vector<MetricsRow> rows;
  Rng rng(5);
  for (int i = 0; i < 14; ++i) {
    MetricsRow r;
    r.team = "team" + std::to_string(i);
    r.group = i % 2 ? "Learner" : "Random";
    r.year = i < 7 ? 10 : 12;
    r.stream = i % 2 ? "Stream1" : "Stream2";
    r.levels = {'A', 'C', 'E', 'G', 'I'};
    r.attempts = {3, 2, 2, 1, 1};
    r.normalized_attempts = {1.2, 1.0, 0.9, 0.8, 0.7};
    r.growth_slope = -0.12;
    r.mean_attempts = 1 + rng.uniform(0, 3);
    r.pre = rng.uniform(0, 5);
    r.post = r.pre + rng.uniform(0.5, 4);
    r.jerk_velocity = i == 3 ? NAN : rng.uniform(0, 2);
    rows.push_back(r);
  }
  std::ostringstream a, b;
  write_metrics_csv(a, rows);
  write_metrics_csv(b, rows);
  CHECK(a.str() == b.str());
  std::istringstream lines(a.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(header.rfind("team,group,year,stream,levels,attempts_1", 0) == 0);
  CHECK(first.rfind("team0,Random,10,Stream2,ACEGI,3,2,2,1,1,1.2,", 0) == 0);

  const auto s1 = cohort_stats(rows).dump();
  const auto s2 = cohort_stats(rows).dump();
  CHECK(s1 == s2);
  const auto j = cohort_stats(rows);
  CHECK(j["pre_post_wilcoxon"]["statistic"] == 0.0);
  CHECK(j["pre_post_wilcoxon"]["p"].get<double>() < 0.001);
  CHECK(j["groups"]["Learner"]["n"] == 7);
  CHECK(j["mediation"]["n"] == 13);
  // Year and growth slope take few values; degenerate ones are recorded, not thrown.
  CHECK(j["spearman"]["growth_slope_post"].contains("error"));
}

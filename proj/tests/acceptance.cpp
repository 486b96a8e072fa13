// One line per primary criterion; exit status 1 when any fails.

#include "riverpilot/assessment.hpp"
#include "riverpilot/bots.hpp"
#include "riverpilot/canvas.hpp"
#include "riverpilot/error.hpp"
#include "riverpilot/game.hpp"
#include "riverpilot/markers.hpp"
#include "riverpilot/pipeline.hpp"
#include "riverpilot/random.hpp"
#include "riverpilot/service.hpp"
#include "riverpilot/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

using namespace riverpilot;
using json = nlohmann::json;

namespace {

// Tolerances and thresholds.
constexpr double kPhysicsTolMm = 0.5;
constexpr double kPhysicsBudgetS = 1.0;
constexpr double kHeadingTolDeg = 0.05;
constexpr double kScoreTol = 1e-9;
constexpr double kWilcoxonTol = 1e-12;
constexpr double kClosedFormTol = 1e-9;
constexpr double kMediationChainP = 1e-6;
constexpr double kMediationNullRate = 0.07;
constexpr double kCohortAlpha = 0.05;
constexpr double kCohortBudgetS = 30.0;
constexpr double kDetectionRate = 0.95;
constexpr double kInlierRmsPx = 1.0;
constexpr double kMedianLatencyMs = 33.0;
constexpr std::uint64_t kCohortSeed = 1;
constexpr int kCohortTeams = 14;

constexpr double kDeg = std::numbers::pi / 180.0;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::shared_ptr<const std::vector<game::Level>> bundled_levels() {
  static auto levels = std::make_shared<const std::vector<game::Level>>(game::load_levels(game::default_map_path()));
  return levels;
}

// Heading whose constant-field resultant points from the dock at the gold.
Angle triangle_heading(const game::Level& l) {
  const Vec2 d = (l.gold - l.dock) / distance(l.gold, l.dock);
  const Vec2 n{-d.y, d.x};
  const double perp = (l.wind + l.current).dot(n) / l.ship_speed;
  return Angle::of(n * (-perp) + d * std::sqrt(1.0 - perp * perp));
}

Verdict physics() {
  Verdict v;
  const auto levels = bundled_levels();
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (const auto& l : *levels) {
    game::Session s(levels, "oracle", l.stream);
    while (s.state().letter() != l.letter) s.wait(481.0);
    const Angle h = triangle_heading(l);
    s.set_velocity(h);
    s.launch();
    for (int i = 0; i < 1000; ++i) s.step();
    v.require(s.state().ship.phase == game::Phase::Sailing, fmt("level %c still sailing at 10 s", l.letter));
    const Vec2 closed = l.dock + (h.unit() * l.ship_speed + l.wind + l.current) * 10.0;
    worst = std::max(worst, distance(s.state().ship.position, closed));
  }
  const double elapsed = seconds_since(t0);
  v.require(levels->size() == 10, "ten levels");
  v.require(worst < kPhysicsTolMm, "landing error");
  v.require(elapsed < kPhysicsBudgetS, "runtime");
  v.note(fmt("max landing error %.2e mm (< %.1f), %zu levels in %.3f s (< %.0f)", worst, kPhysicsTolMm, levels->size(),
             elapsed, kPhysicsBudgetS));
  return v;
}

Verdict complexity() {
  Verdict v;
  game::Level flat;
  flat.letter = 'A';
  flat.stream = game::stream_of('A');
  flat.stage = game::stage_of('A');
  flat.banks = {std::vector<Vec2>{{0, 200}, {1000, 200}}, std::vector<Vec2>{{0, 600}, {1000, 600}}};
  flat.close_river();
  flat.dock = {400, 570};
  flat.gold = {650, 190};
  flat.gold_radius = 30.0;
  flat.ship_speed = 30.0;
  const double zero = game::level_complexity(flat);
  v.require(zero == 0.0, "zero-field complexity is exactly 0");

  const auto& levels = *bundled_levels();
  double worst = 0.0;
  std::map<char, double> c;
  for (const auto& l : levels) {
    const Angle h = game::solve_correct_direction(l);
    worst = std::max(worst, angular_distance(h, triangle_heading(l)) / kDeg);
    c[l.letter] = game::level_complexity(l);
  }
  v.require(worst < kHeadingTolDeg, "vector-triangle heading");
  std::string per_stream;
  for (game::Stream s : {game::Stream::Stream1, game::Stream::Stream2}) {
    double prev = -1.0;
    per_stream += std::string(game::to_string(s)) + ":";
    for (int idx : game::stream_order(levels, s)) {
      const char letter = levels[static_cast<std::size_t>(idx)].letter;
      v.require(c[letter] >= prev, fmt("non-decreasing at %c", letter));
      prev = c[letter];
      per_stream += fmt(" %c=%.1f", letter, c[letter] / kDeg);
    }
    per_stream += "; ";
  }
  per_stream.resize(per_stream.size() - 2);
  v.note(fmt("zero field %.1f; max heading deviation %.2e deg (< %.2f); %s", zero, worst, kHeadingTolDeg,
             per_stream.c_str()));
  return v;
}

Verdict scoring() {
  Verdict v;
  const auto bank = assessment::load_bank(assessment::default_bank_path());
  double e_truth = 0, e_opp = 0, e_double = 0;
  for (const auto& item : bank.items) {
    const auto& g = item.ground_truth;
    const Vec2 d = g.end - g.start;
    e_truth = std::max(e_truth, std::abs(assessment::score_item(g, item) - 1.0));
    e_opp = std::max(e_opp, std::abs(assessment::score_item({g.start, g.start - d}, item) - 1.0 / 11.0));
    e_double = std::max(e_double, std::abs(assessment::score_item({g.start, g.start + d * 2.0}, item) - 10.0 / 11.0));
  }
  v.require(!bank.items.empty(), "bank has items");
  v.require(e_truth < kScoreTol && e_opp < kScoreTol && e_double < kScoreTol, "formula values");
  v.note(fmt("%zu items; max |error| truth %.1e, opposite %.1e, doubled %.1e (tol %.0e)", bank.items.size(), e_truth,
             e_opp, e_double, kScoreTol));
  return v;
}

// Summands chained in `order`; bit k of `mask` keeps canonical link k:
// 0 and 1 join the summands, 2 the answer start, 3 the answer end.
canvas::Canvas chained(unsigned mask, std::array<int, 3> order, std::array<Vec2, 3> deltas) {
  using canvas::Role;
  std::vector<canvas::CanvasVector> vs(4);
  const std::array<Role, 3> roles{Role::ShipVelocity, Role::Current, Role::Wind};
  Vec2 cursor{100, 100}, first = cursor;
  for (int k = 0; k < 3; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    if (k > 0 && !(mask & (1u << (k - 1)))) cursor += Vec2{37.0 + 11 * k, 53.0};
    vs[static_cast<std::size_t>(i)] = {i + 1, roles[static_cast<std::size_t>(i)], cursor,
                                       cursor + deltas[static_cast<std::size_t>(i)]};
    if (k == 0) first = cursor;
    cursor = vs[static_cast<std::size_t>(i)].end;
  }
  vs[3] = {4, Role::Answer, (mask & 4u) ? first : first + Vec2{-41, 17}, (mask & 8u) ? cursor : cursor + Vec2{23, -29}};
  canvas::Canvas c;
  c.vectors = vs;
  c.graph = canvas::derive_graph(c.vectors);
  return c;
}

Verdict canvas_criterion() {
  Verdict v;
  const std::array<std::array<int, 3>, 6> orders{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  const std::array<Vec2, 3> deltas{Vec2{90, 10}, Vec2{20, -60}, Vec2{-15, 35}};
  int full = canvas::score_canvas(chained(0b1111, orders[0], deltas));
  v.require(full == 4, "full chain scores 4");
  int cases = 0, mismatches = 0;
  for (const auto& order : orders) {
    for (unsigned mask = 0; mask < 16; ++mask) {
      const auto c = chained(mask, order, deltas);
      const int want = __builtin_popcount(mask);
      mismatches += canvas::score_canvas(c) != want || static_cast<int>(c.graph.connections.size()) != want;
      ++cases;
    }
  }
  v.require(mismatches == 0, "subset enumeration");
  // The bundled canvas levels, assembled by moving ends onto each other.
  const auto map = game::load_map(game::default_map_path());
  int bundled_full = 0, canvas_levels = 0;
  for (const auto& l : map.levels) {
    if (!game::stage_flags(l.stage).canvas) continue;
    ++canvas_levels;
    auto c = canvas::make_canvas(l, l.naive_heading());
    const auto at = [&](int id) { return *std::find_if(c.vectors.begin(), c.vectors.end(), [&](auto& x) { return x.id == id; }); };
    canvas::move_endpoint(c, 2, canvas::End::Start, at(1).end);
    canvas::move_endpoint(c, 3, canvas::End::Start, at(2).end);
    canvas::move_endpoint(c, 4, canvas::End::Start, at(1).start);
    canvas::move_endpoint(c, 4, canvas::End::Tip, at(3).end);
    bundled_full += canvas::score_canvas(c) == 4;
  }
  v.require(canvas_levels > 0 && bundled_full == canvas_levels, "bundled canvas levels reach 4");
  v.note(fmt("full chain %d; %d/%d subset cases match; bundled canvas levels at 4: %d/%d", full, cases - mismatches,
             cases, bundled_full, canvas_levels));
  return v;
}

double brute_wilcoxon_p(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      less += std::abs(d[j]) < std::abs(d[i]);
      equal += std::abs(d[j]) == std::abs(d[i]);
    }
    rank[i] = less + (equal + 1) / 2;
  }
  double wp = 0, wm = 0;
  for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? wp : wm) += rank[i];
  const double t = std::min(wp, wm);
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double p = 0, m = 0;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? p : m) += rank[i];
    hits += std::min(p, m) <= t + 1e-9;
  }
  return static_cast<double>(hits) / static_cast<double>(std::uint64_t{1} << n);
}

Verdict statistics() {
  using namespace analytics;
  Verdict v;
  Rng rng(20240);

  double w_err = 0;
  int datasets = 0;
  while (datasets < 50) {
    const int n = 5 + static_cast<int>(rng.below(8));
    std::vector<double> pre, post, d;
    for (int i = 0; i < n; ++i) {
      pre.push_back(std::round(rng.uniform(0, 10) * 2) / 2);
      post.push_back(std::round(rng.uniform(0, 10) * 2) / 2);
      if (post.back() != pre.back()) d.push_back(post.back() - pre.back());
    }
    if (d.size() < 5) continue;
    w_err = std::max(w_err, std::abs(wilcoxon_signed_rank(pre, post).p - brute_wilcoxon_p(d)));
    ++datasets;
  }
  v.require(w_err < kWilcoxonTol, "Wilcoxon enumeration");

  const std::vector<double> a{3.1, 0.4, 7.7, 2.2, 5.0, 9.3, 1.8, 6.6, 4.4, 8.5};
  const std::vector<double> b{2.0, 1.1, 5.5, 4.8, 3.3, 8.1, 0.2, 9.9, 6.0, 7.1};
  const std::size_t n = a.size();
  const auto ra = average_ranks(a), rb = average_ranks(b);
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double rho = 1 - 6 * d2 / (static_cast<double>(n) * (n * n - 1.0));
  const double e_spearman = std::abs(spearman(a, b).statistic - rho);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) sa += a[i], sb += b[i], saa += a[i] * a[i], sbb += b[i] * b[i], sab += a[i] * b[i];
  const double nn = static_cast<double>(n);
  const double r = (nn * sab - sa * sb) / std::sqrt((nn * saa - sa * sa) * (nn * sbb - sb * sb));
  const double e_pearson = std::abs(pearson(a, b).statistic - r);
  const double slope = (nn * sab - sa * sb) / (nn * saa - sa * sa), icpt = (sb - slope * sa) / nn;
  double ssr = 0;
  for (std::size_t i = 0; i < n; ++i) ssr += std::pow(b[i] - icpt - slope * a[i], 2);
  const double se = std::sqrt(ssr / (nn - 2) / (saa - sa * sa / nn));
  const auto fit = ols_fit(design({a}), Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(n)));
  const double e_ols = std::max({std::abs(fit.coefficients(1) - slope), std::abs(fit.coefficients(0) - icpt),
                                 std::abs(fit.std_errors(1) - se)});
  v.require(e_spearman < kClosedFormTol && e_pearson < kClosedFormTol && e_ols < kClosedFormTol, "closed forms");

  const auto ecdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double e) { return e <= x; })) / s.size();
  };
  double ks = 0;
  for (const auto* s : {&a, &b})
    for (double x : *s) ks = std::max(ks, std::abs(ecdf(a, x) - ecdf(b, x)));
  const double e_ks = std::abs(ks_two_sample(a, b).statistic - ks);
  v.require(e_ks < kClosedFormTol, "KS ECDF");

  std::vector<double> x, m, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(rng.uniform(0, 5));
    m.push_back(2 * x.back() + rng.normal(0, 1e-3));
    y.push_back(3 * m.back() + rng.normal(0, 1e-3));
  }
  const double chain_p = mediation(x, m, y).p;
  v.require(chain_p < kMediationChainP, "constructed chain");
  int positives = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    x.clear(), m.clear(), y.clear();
    for (int i = 0; i < 30; ++i) {
      x.push_back(rng.normal(0, 1));
      m.push_back(rng.normal(0, 1));
      y.push_back(0.5 * m.back() + 0.5 * x.back() + rng.normal(0, 1));
    }
    positives += mediation(x, m, y).p < 0.05;
  }
  const double fpr = static_cast<double>(positives) / reps;
  v.require(fpr <= kMediationNullRate, "null chain false-positive rate");
  v.note(fmt("Wilcoxon max |p - enum| %.1e over %d sets; Spearman %.1e, Pearson %.1e, OLS %.1e, KS %.1e; "
             "Sobel p %.1e (< %.0e); null FPR %.3f (<= %.2f)",
             w_err, datasets, e_spearman, e_pearson, e_ols, e_ks, chain_p, kMediationChainP, fpr, kMediationNullRate));
  return v;
}

std::filesystem::path scratch(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / "riverpilot_acceptance" / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::filesystem::path> cohort_logs;

Verdict cohort() {
  Verdict v;
  const auto dir = scratch("cohort");
  const auto t0 = Clock::now();
  const auto run = bots::run_bot_cohort(bots::make_cohort(kCohortTeams, "mixed", kCohortSeed), dir);
  const auto report = pipeline::analyze_logs(dir);
  const double elapsed = seconds_since(t0);
  pipeline::write_report(report, dir / "report");
  cohort_logs = run.logs;
  const json& g = report.stats.at("groups").at("Learner");
  const double wp = g.at("pre_post_wilcoxon").at("p").get<double>();
  const json& sp = g.at("spearman").at("mean_attempts_post");
  const double rho = sp.at("statistic").get<double>();
  const double slope = g.at("mean_growth_slope").get<double>();
  v.require(wp < kCohortAlpha, "(a) Wilcoxon");
  v.require(rho < 0, "(b) Spearman sign");
  v.require(slope < 0, "(c) growth slope");
  v.require(elapsed < kCohortBudgetS, "runtime");
  v.note(fmt("seed %llu, %d teams, %d Learner: (a) pre %.2f post %.2f Wilcoxon p %.4f (< %.2f); "
             "(b) Spearman rho %.3f (< 0); (c) mean slope %.4f (< 0); %.1f s (< %.0f)",
             static_cast<unsigned long long>(kCohortSeed), kCohortTeams, g.at("n").get<int>(),
             g.at("mean_pre").get<double>(), g.at("mean_post").get<double>(), wp, kCohortAlpha, rho, slope, elapsed,
             kCohortBudgetS));
  return v;
}

Verdict marker_pipeline() {
  Verdict v;
  markers::BenchParams bp;  // 500 frames, 30% occlusion, 1 px noise, 0.1-2 m
  const auto r = markers::run_bench(bp);
  v.require(r.detection_rate >= kDetectionRate, "detection rate");
  v.require(r.inlier_rms_px < kInlierRmsPx, "inlier RMS");
  v.require(r.median_ms <= kMedianLatencyMs, "median latency");
  v.note(fmt("%d frames, %.0f%% occlusion, sigma %.1f px, %.1f-%.1f m: detection %.3f (>= %.2f), inlier RMS %.3f px "
             "(< %.1f), median %.2f ms (<= %.0f), worst %.2f ms, false detections %d",
             r.frames, bp.occlusion * 100, bp.noise_sigma_px, bp.min_distance_mm / 1000, bp.max_distance_mm / 1000,
             r.detection_rate, kDetectionRate, r.inlier_rms_px, kInlierRmsPx, r.median_ms, kMedianLatencyMs,
             r.worst_ms, r.false_detections));
  return v;
}

Verdict determinism() {
  Verdict v;
  v.require(!cohort_logs.empty(), "cohort logs available");
  int verified = 0;
  for (const auto& log : cohort_logs) {
    const auto r = service::replay(log);
    verified += r.verified;
  }
  v.require(verified == static_cast<int>(cohort_logs.size()), "replay hashes");

  // Same seed again, byte for byte.
  const auto again = bots::run_bot_cohort(bots::make_cohort(kCohortTeams, "mixed", kCohortSeed), scratch("cohort_again"));
  int identical = 0;
  for (std::size_t i = 0; i < again.logs.size() && i < cohort_logs.size(); ++i) {
    identical += slurp(again.logs[i]) == slurp(cohort_logs[i]);
  }
  v.require(identical == static_cast<int>(cohort_logs.size()), "byte-identical rerun");

  // Kill after acknowledgment: drive a live logged session with a bot game's
  // driver events, drop it without closing at several points, recover.
  int kills = 0, recovered_ok = 0;
  if (!cohort_logs.empty()) {
    std::vector<service::Event> drivers;
    json started;
    {
      std::ifstream in(cohort_logs.front());
      for (std::string line; std::getline(in, line);) {
        const json j = json::parse(line);
        if (j["kind"] == "SnapshotHash") continue;
        const auto e = service::event_from_json(j);
        if (e.kind == "SessionStarted") started = e.payload;
        else if (!e.derived) drivers.push_back(e);
      }
    }
    const auto config = service::config_from_json(started.at("config"));
    const auto map = std::make_shared<const game::Map>(game::parse_map(started.at("map")));
    const auto dir = scratch("kill");
    Rng rng(kCohortSeed);
    for (int k = 0; k < 5; ++k) {
      const std::size_t cut = 1 + rng.below(drivers.size() - 1);
      const auto path = dir / fmt("kill%d.jsonl", k);
      std::string pre_kill;
      {
        service::ServiceSession live(config, map, std::make_unique<service::EventLog>(path));
        for (std::size_t i = 0; i < cut; ++i) live.apply({drivers[i].kind, drivers[i].payload});
        pre_kill = live.hash();
      }  // killed: no trailer
      ++kills;
      recovered_ok += service::recover(path)->hash() == pre_kill;
    }
  }
  v.require(kills > 0 && recovered_ok == kills, "kill-after-ack recovery");
  v.note(fmt("%d/%zu logs replay to their trailer hash; rerun byte-identical %d/%zu; recovered %d/%d kills to the "
             "pre-kill hash",
             verified, cohort_logs.size(), identical, cohort_logs.size(), recovered_ok, kills));
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"physics-oracle", physics},       {"complexity-metric", complexity},    {"scoring", scoring},
      {"canvas", canvas_criterion},      {"statistics-oracles", statistics},   {"bot-cohort", cohort},
      {"marker-pipeline", marker_pipeline}, {"determinism-recovery", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}

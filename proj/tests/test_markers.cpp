#include "doctest.h"

#include "riverpilot/error.hpp"
#include "riverpilot/markers.hpp"
#include "riverpilot/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

using namespace riverpilot;
using namespace riverpilot::markers;

namespace {

const Bounds kA3{420.0, 297.0};

DotPattern setting_sheet(int id = 1, std::uint64_t seed = 7) { return generate_pattern(id, 180, kA3, seed); }

Pose3D fronto(Vec2 target, double dist) { return look_at_sheet(target, dist, 0.0, 0.0, 0.0); }

std::multiset<std::uint64_t> as_multiset(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

// Ring of points[center] re-sorted by bearing, as the detector sees it.
std::vector<Vec2> sorted_ring(std::span<const Vec2> pts, std::size_t center, int n) {
  auto nn = nearest_neighbors(pts, center, n);
  std::vector<std::pair<double, Vec2>> v;
  for (auto i : nn) v.emplace_back((pts[i] - pts[center]).bearing(), pts[i]);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Vec2> out;
  for (const auto& [a, p] : v) out.push_back(p);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Patterns

TEST_CASE("generate_pattern is deterministic") {
  const auto a = generate_pattern(1, 200, kA3, 7);
  const auto b = generate_pattern(1, 200, kA3, 7);
  CHECK(a == b);
  CHECK(a.dots.size() == 200);
  const auto c = generate_pattern(1, 200, kA3, 8);
  CHECK(a.dots != c.dots);
}

TEST_CASE("generate_pattern keeps the minimum spacing and the bounds") {
  const auto p = generate_pattern(3, 20, {1000, 1000}, 1);
  REQUIRE(p.dots.size() == 20);
  for (std::size_t i = 0; i < p.dots.size(); ++i) {
    CHECK(p.dots[i].x >= 0.0);
    CHECK(p.dots[i].x <= 1000.0);
    CHECK(p.dots[i].y >= 0.0);
    CHECK(p.dots[i].y <= 1000.0);
    for (std::size_t j = i + 1; j < p.dots.size(); ++j) CHECK(distance(p.dots[i], p.dots[j]) >= 8.0);
  }

  const auto dense = setting_sheet();
  double closest = 1e9;
  for (std::size_t i = 0; i < dense.dots.size(); ++i)
    for (std::size_t j = i + 1; j < dense.dots.size(); ++j)
      closest = std::min(closest, distance(dense.dots[i], dense.dots[j]));
  CHECK(closest >= 8.0);
}

TEST_CASE("generate_pattern reports an infeasible density") {
  try {
    generate_pattern(1, 10000, {50, 50}, 1);
    FAIL("expected PlacementExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PlacementExhausted);
  }
}

TEST_CASE("pattern JSON round-trips exactly") {
  const auto p = setting_sheet(4, 99);
  const nlohmann::json j = p;
  CHECK(j.at("bounds_mm").at(0).get<double>() == 420.0);
  const auto back = nlohmann::json::parse(j.dump()).get<DotPattern>();
  CHECK(back == p);
}

// ---------------------------------------------------------------------------
// Descriptors

TEST_CASE("table size is dots times C(n, m)") {
  const auto p = generate_pattern(1, 20, {200, 200}, 3);
  const auto t = build_table({p});
  CHECK(t.entry_count() == 20 * 8);
  for (std::size_t i = 0; i < p.dots.size(); ++i) CHECK(point_keys(p.dots, i, t.params()).size() == 8);
}

TEST_CASE("build_table rejects patterns without full neighborhoods") {
  DotPattern p{1, 0, {100, 100}, {{0, 0}, {10, 0}, {20, 0}, {0, 10}, {10, 10}, {20, 10}, {0, 20}, {10, 20}}};
  CHECK_THROWS_AS(build_table({p}), Error);
  try {
    build_table({p});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewDots);
  }
}

TEST_CASE("subset keys are invariant under nonsingular affine maps") {
  const auto p = setting_sheet();
  const DescriptorParams params;
  Rng rng(21);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::Matrix2d a;
    a << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2);
    if (std::abs(a.determinant()) < 0.2) continue;
    const Vec2 shift{rng.uniform(-500, 500), rng.uniform(-500, 500)};
    const auto map = [&](Vec2 v) {
      const Eigen::Vector2d r = a * Eigen::Vector2d(v.x, v.y);
      return Vec2{r.x() + shift.x, r.y() + shift.y};
    };
    const auto center = static_cast<std::size_t>(rng.below(p.dots.size()));
    const auto ring = sorted_ring(p.dots, center, 8);
    const std::vector<Vec2> subset(ring.begin(), ring.begin() + 7);

    // The same seven points seen through the map, ordered by bearing about
    // the mapped center; cyclic order survives, the starting point does not.
    const Vec2 c = map(p.dots[center]);
    std::vector<std::pair<double, Vec2>> mapped;
    for (const auto& q : subset) mapped.emplace_back((map(q) - c).bearing(), map(q));
    std::sort(mapped.begin(), mapped.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<Vec2> seen;
    for (const auto& [b, q] : mapped) seen.push_back(q);

    CHECK(subset_key(subset, params) == subset_key(seen, params));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("point keys are invariant under similarity maps, including mirroring") {
  const auto p = setting_sheet();
  const DescriptorParams params;
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const double angle = rng.uniform(-3.1, 3.1);
    const double scale = rng.uniform(0.2, 5.0);
    const bool mirror = trial % 2 == 1;
    std::vector<Vec2> moved;
    for (const auto& d : p.dots) {
      const Vec2 m = mirror ? Vec2{-d.x, d.y} : d;
      moved.push_back(Vec2{std::cos(angle) * m.x - std::sin(angle) * m.y,
                           std::sin(angle) * m.x + std::cos(angle) * m.y} * scale +
                      Vec2{37.0, -12.0});
    }
    for (std::size_t i = 0; i < p.dots.size(); i += 7)
      CHECK(as_multiset(point_keys(p.dots, i, params)) == as_multiset(point_keys(moved, i, params)));
  }
}

TEST_CASE("key collision rate between independent patterns (informational)") {
  const auto a = build_table({generate_pattern(1, 180, kA3, 7)});
  const auto b = build_table({generate_pattern(2, 180, kA3, 8)});
  std::size_t shared = 0;
  for (const auto& [key, entries] : a.index())
    if (!b.lookup(key).empty()) ++shared;
  const double rate = static_cast<double>(shared) / static_cast<double>(a.key_count());
  MESSAGE("key collision rate across tables: " << rate);
  CHECK(rate < 0.2);
}

// ---------------------------------------------------------------------------
// RANSAC

TEST_CASE("homography from four exact correspondences") {
  Eigen::Matrix3d m;
  m << 1.2, 0.1, 30, -0.05, 0.9, 12, 1e-4, -2e-4, 1;
  const Homography truth(m);
  const std::vector<Vec2> src{{0, 0}, {100, 5}, {90, 120}, {-10, 80}};
  std::vector<Correspondence> corr;
  for (const auto& s : src) corr.push_back({s, homography_apply(truth, s)});
  const auto fit = estimate_homography_ransac(corr);
  CHECK(fit.inliers.size() == 4);
  CHECK(fit.homography.approx_equal(truth, 1e-9));
  CHECK(normalized_dlt(corr).approx_equal(truth, 1e-9));
}

TEST_CASE("RANSAC tolerates 40% outliers") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose3D pose = look_at_sheet({200, 150}, rng.uniform(300, 900), rng.uniform(0, 0.6),
                                      rng.uniform(-3, 3), rng.uniform(-3, 3));
    const CameraIntrinsics k;
    const Homography truth = forward_homography(pose, k);
    std::vector<Correspondence> corr;
    std::vector<bool> is_inlier;
    for (int i = 0; i < 100; ++i) {
      const Vec2 s{rng.uniform(0, 400), rng.uniform(0, 300)};
      if (i % 5 < 2) {
        corr.push_back({s, {rng.uniform(0, 1280), rng.uniform(0, 800)}});
        is_inlier.push_back(false);
      } else {
        const Vec2 img = homography_apply(truth, s);
        corr.push_back({s, {img.x + rng.normal(0, 0.5), img.y + rng.normal(0, 0.5)}});
        is_inlier.push_back(true);
      }
    }
    RansacParams params;
    params.seed = static_cast<std::uint64_t>(trial);
    const auto fit = estimate_homography_ransac(corr, params);
    double se = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
      if (!is_inlier[i]) continue;
      se += std::pow(reprojection_error(fit.homography, corr[i]), 2);
      ++n;
    }
    CHECK(std::sqrt(se / n) < 1.5);
    CHECK(fit.inliers.size() >= 55);
    CHECK(fit.iterations <= params.max_iterations);
  }
}

TEST_CASE("RANSAC error cases") {
  const std::vector<Correspondence> three{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  try {
    estimate_homography_ransac(three);
    FAIL("expected InsufficientCorrespondences");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCorrespondences);
  }
  // Collinear data admits no nondegenerate sample.
  std::vector<Correspondence> line;
  for (int i = 0; i < 10; ++i) line.push_back({{double(i), 2.0 * i}, {double(i), 3.0 * i}});
  try {
    estimate_homography_ransac(line);
    FAIL("expected NoConsensus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConsensus);
  }
}

TEST_CASE("RANSAC is deterministic for a fixed seed") {
  Rng rng(9);
  std::vector<Correspondence> corr;
  for (int i = 0; i < 60; ++i) {
    const Vec2 s{rng.uniform(0, 100), rng.uniform(0, 100)};
    corr.push_back({s, i % 3 ? s * 2.0 + Vec2{rng.normal(0, 0.3), rng.normal(0, 0.3)}
                             : Vec2{rng.uniform(0, 200), rng.uniform(0, 200)}});
  }
  const auto a = estimate_homography_ransac(corr, {3.0, 500, 0.99, 17});
  const auto b = estimate_homography_ransac(corr, {3.0, 500, 0.99, 17});
  CHECK(a.inliers == b.inliers);
  CHECK(a.homography.matrix() == b.homography.matrix());
}

// ---------------------------------------------------------------------------
// Rendering

TEST_CASE("render_view counts") {
  const auto p = setting_sheet();
  const CameraIntrinsics k;
  const Pose3D pose = fronto({210, 148}, 500);

  std::size_t oracle = 0;
  for (const auto& d : p.dots) {
    const Eigen::Vector3d c = pose.apply(Eigen::Vector3d(d.x, d.y, 0));
    const double u = k.fx * c.x() / c.z() + k.cx;
    const double v = k.fy * c.y() / c.z() + k.cy;
    if (u >= 0 && u < 1280 && v >= 0 && v < 800) ++oracle;
  }
  const auto full = render_view(p, pose, k);
  CHECK(full.frame.points.size() == oracle);
  CHECK(full.visible_count == oracle);

  for (auto mode : {OcclusionMode::Region, OcclusionMode::Scatter}) {
    RenderParams rp;
    rp.occlusion = 0.3;
    rp.occlusion_mode = mode;
    rp.seed = 5;
    const auto v = render_view(p, pose, k, rp);
    CHECK(v.frame.points.size() == static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(oracle))));
  }
}

TEST_CASE("render_view is seeded and rejects poses behind the sheet") {
  const auto p = setting_sheet();
  const CameraIntrinsics k;
  RenderParams rp;
  rp.noise_sigma_px = 1.0;
  rp.occlusion = 0.3;
  rp.seed = 12;
  const Pose3D pose = look_at_sheet({100, 100}, 700, 0.3, 1.0, 0.5);
  const auto a = render_view(p, pose, k, rp);
  const auto b = render_view(p, pose, k, rp);
  CHECK(a.frame.points == b.frame.points);
  CHECK(a.dot_index == b.dot_index);

  // Camera on the unprinted side (z = +700) looking back at the sheet.
  Pose3D behind;
  behind.rotation = rot_x(std::numbers::pi);
  behind.translation = -behind.rotation * Eigen::Vector3d(210, 148, 700);
  try {
    render_view(p, behind, k);
    FAIL("expected SheetBehindCamera");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SheetBehindCamera);
  }
}

TEST_CASE("frame JSON round-trips exactly") {
  const auto p = setting_sheet();
  RenderParams rp;
  rp.noise_sigma_px = 1.0;
  rp.timestamp_ms = 1234;
  const auto v = render_view(p, fronto({200, 150}, 600), CameraIntrinsics{}, rp);
  const nlohmann::json j = v.frame;
  const auto back = nlohmann::json::parse(j.dump()).get<ObservedFrame>();
  CHECK(back.timestamp_ms == 1234);
  CHECK(back.points == v.frame.points);
}

// ---------------------------------------------------------------------------
// Detection

TEST_CASE("exact render at identity rotation is detected with negligible error") {
  const auto p = setting_sheet();
  const auto table = build_table({p});
  const CameraIntrinsics k;
  Pose3D pose;
  pose.rotation = Eigen::Matrix3d::Identity();
  pose.translation = Eigen::Vector3d(-210, -148, 500);
  const auto v = render_view(p, pose, k);
  const auto dets = detect(v.frame, table, k);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].marker == 1);
  CHECK(dets[0].inlier_count == static_cast<int>(v.frame.points.size()));
  double worst = 0.0;
  for (const auto& [point, dot] : dets[0].inliers) {
    CHECK(v.dot_index[static_cast<std::size_t>(point)] == dot);
    worst = std::max(worst, distance(homography_apply(dets[0].homography, p.dots[static_cast<std::size_t>(dot)]),
                                     v.frame.points[static_cast<std::size_t>(point)]));
  }
  CHECK(worst < 1e-6);
  CHECK((dets[0].pose.translation - pose.translation).norm() < 1e-6);
}

TEST_CASE("half the dots occluded with 1 px noise") {
  const auto p = setting_sheet();
  const auto table = build_table({p, setting_sheet(2, 8)});
  const CameraIntrinsics k;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RenderParams rp;
    rp.noise_sigma_px = 1.0;
    rp.occlusion = 0.5;
    rp.seed = seed;
    const auto v = render_view(p, fronto({210, 148}, 500), k, rp);
    const auto dets = detect(v.frame, table, k);
    REQUIRE(!dets.empty());
    CHECK(dets[0].marker == 1);
  }
}

TEST_CASE("only the rendered pattern is reported over 100 seed pairs") {
  const CameraIntrinsics k;
  Rng rng(77);
  int reported_a = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const auto a = generate_pattern(1, 180, kA3, rng.next_u64());
    const auto b = generate_pattern(2, 180, kA3, rng.next_u64());
    const auto table = build_table({a, b});
    RenderParams rp;
    rp.noise_sigma_px = 1.0;
    rp.occlusion = 0.3;
    rp.seed = static_cast<std::uint64_t>(pair);
    const Pose3D pose = look_at_sheet({rng.uniform(80, 340), rng.uniform(60, 240)}, rng.uniform(300, 1200),
                                      rng.uniform(0, 0.5), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const auto dets = detect(render_view(a, pose, k, rp).frame, table, k);
    for (const auto& d : dets) CHECK(d.marker == 1);
    if (!dets.empty()) ++reported_a;
  }
  CHECK(reported_a >= 95);
}

TEST_CASE("distance sweep from 100 mm to 2 m at 1 px noise") {
  const auto p = setting_sheet();
  const auto table = build_table({p, setting_sheet(2, 8)});
  const CameraIntrinsics k;
  for (int d = 100; d <= 2000; d += 100) {
    RenderParams rp;
    rp.noise_sigma_px = 1.0;
    rp.seed = static_cast<std::uint64_t>(d);
    const auto v = render_view(p, look_at_sheet({210, 148}, d, 0.2, 0.7, 0.3), k, rp);
    const auto dets = detect(v.frame, table, k);
    CAPTURE(d);
    REQUIRE(!dets.empty());
    CHECK(dets[0].marker == 1);
  }
}

TEST_CASE("every detection reprojects its inliers within the threshold") {
  const auto p = setting_sheet();
  const auto q = setting_sheet(2, 8);
  const auto table = build_table({p, q});
  const CameraIntrinsics k;
  Rng rng(3);
  for (int f = 0; f < 60; ++f) {
    RenderParams rp;
    rp.noise_sigma_px = rng.uniform(0, 2);
    rp.occlusion = rng.uniform(0, 0.6);
    rp.seed = static_cast<std::uint64_t>(f);
    const Pose3D pose = look_at_sheet({rng.uniform(40, 380), rng.uniform(40, 257)}, rng.uniform(100, 2000),
                                      rng.uniform(0, 0.6), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const auto v = render_view(f % 2 ? p : q, pose, k, rp);
    const auto dets = detect(v.frame, table, k);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& d = dets[i];
      const auto* pat = table.pattern(d.marker);
      REQUIRE(pat != nullptr);
      CHECK(d.inlier_count >= 4);
      CHECK(d.inlier_count == static_cast<int>(d.inliers.size()));
      CHECK(d.inlier_ratio > 0.0);
      CHECK(d.inlier_ratio <= 1.0);
      for (const auto& [point, dot] : d.inliers)
        CHECK(distance(homography_apply(d.homography, pat->dots[static_cast<std::size_t>(dot)]),
                       v.frame.points[static_cast<std::size_t>(point)]) < 3.0);
      if (i > 0) CHECK(dets[i - 1].inlier_count >= d.inlier_count);
    }
  }
}

TEST_CASE("detect is deterministic and tolerates tiny frames") {
  const auto p = setting_sheet();
  const auto table = build_table({p});
  const CameraIntrinsics k;
  RenderParams rp;
  rp.noise_sigma_px = 1.0;
  rp.occlusion = 0.3;
  rp.seed = 2;
  const auto v = render_view(p, look_at_sheet({150, 150}, 800, 0.4, 2.0, 1.0), k, rp);
  const auto a = detect(v.frame, table, k);
  const auto b = detect(v.frame, table, k);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].inliers == b[i].inliers);
    CHECK(a[i].homography.matrix() == b[i].homography.matrix());
  }

  ObservedFrame few;
  few.points = {{1, 1}, {50, 50}, {100, 20}};
  CHECK(detect(few, table, k).empty());
  CHECK(detect(ObservedFrame{}, table, k).empty());
}

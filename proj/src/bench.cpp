#include "riverpilot/markers.hpp"
#include "riverpilot/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace riverpilot::markers {

BenchResult run_bench(const BenchParams& bp, const CameraIntrinsics& k) {
  const auto target = generate_pattern(1, bp.dots, bp.sheet, bp.seed);
  const auto distractor = generate_pattern(2, bp.dots, bp.sheet, bp.seed + 1);
  const auto table = build_table({target, distractor});
  Rng rng(bp.seed);
  BenchResult r;
  r.frames = bp.frames;
  std::vector<double> ms;
  double se = 0.0;
  std::size_t n_inliers = 0;
  const double margin = 0.1 * std::min(bp.sheet.width, bp.sheet.height);
  for (int f = 0; f < bp.frames; ++f) {
    const double dist = rng.uniform(bp.min_distance_mm, bp.max_distance_mm);
    const Vec2 aim{rng.uniform(margin, bp.sheet.width - margin), rng.uniform(margin, bp.sheet.height - margin)};
    const Pose3D pose = look_at_sheet(aim, dist, rng.uniform(0.0, bp.max_tilt), rng.uniform(-M_PI, M_PI),
                                      rng.uniform(-M_PI, M_PI));
    RenderParams rp;
    rp.noise_sigma_px = bp.noise_sigma_px;
    rp.occlusion = bp.occlusion;
    rp.seed = bp.seed * 1'000'003 + static_cast<std::uint64_t>(f);
    const auto view = render_view(target, pose, k, rp);
    const auto t0 = std::chrono::steady_clock::now();
    const auto dets = detect(view.frame, table, k);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    for (const auto& d : dets) r.false_detections += d.marker == distractor.id;
    if (dets.empty() || dets[0].marker != target.id) continue;
    ++r.detected;
    const Homography truth = forward_homography(pose, k);
    for (const auto& [point, dot] : dets[0].inliers) {
      const Vec2& src = target.dots[static_cast<std::size_t>(dot)];
      se += (homography_apply(dets[0].homography, src) - homography_apply(truth, src)).squared_magnitude();
      ++n_inliers;
    }
  }
  r.detection_rate = bp.frames ? static_cast<double>(r.detected) / bp.frames : 0.0;
  r.inlier_rms_px = n_inliers ? std::sqrt(se / static_cast<double>(n_inliers)) : 0.0;
  if (!ms.empty()) {
    std::sort(ms.begin(), ms.end());
    const std::size_t n = ms.size();
    r.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    r.worst_ms = ms.back();
  }
  return r;
}

}  // namespace riverpilot::markers

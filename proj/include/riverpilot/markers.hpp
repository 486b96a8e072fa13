#pragma once

#include "riverpilot/geometry.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace riverpilot::markers {

struct Bounds {
  double width = 0.0;   // mm
  double height = 0.0;  // mm
  bool operator==(const Bounds&) const = default;
};

/// Random-dot fiducial: dot centers in sheet millimeters.
struct DotPattern {
  int id = 0;
  std::uint64_t seed = 0;
  Bounds bounds;
  std::vector<Vec2> dots;

  bool operator==(const DotPattern&) const = default;
};

struct PatternParams {
  double min_distance = 8.0;  // mm
  std::uint64_t rejection_budget = 100000;
};

/// Rejection-sampled dot placement. Throws PlacementExhausted when the draw
/// budget runs out before `n_dots` dots are placed.
DotPattern generate_pattern(int id, std::size_t n_dots, Bounds bounds, std::uint64_t seed,
                            const PatternParams& params = {});

void to_json(nlohmann::json& j, const DotPattern& p);
void from_json(const nlohmann::json& j, DotPattern& p);

// ---------------------------------------------------------------------------
// Descriptors

struct DescriptorParams {
  int neighbors = 8;     // n
  int subset = 7;        // m
  int levels = 16;       // k quantization bins
  double ratio_min = 1.0 / 50.0;
  double ratio_max = 50.0;
};

struct TableEntry {
  int marker = 0;
  int dot = 0;
  std::uint16_t subset = 0;   // which m-subset of the dot's ring
  std::uint8_t rotation = 0;  // canonical start of the digit sequence
  bool mirrored = false;      // canonical form read the ring backwards
};

/// Immutable geometric-hashing index over registered patterns.
class DescriptorTable {
 public:
  DescriptorTable() = default;
  DescriptorTable(DescriptorParams params, std::vector<DotPattern> patterns,
                  std::unordered_map<std::uint64_t, std::vector<TableEntry>> index,
                  std::vector<std::vector<int>> rings);

  const DescriptorParams& params() const { return params_; }
  const std::vector<DotPattern>& patterns() const { return patterns_; }
  const DotPattern* pattern(int marker_id) const;

  std::span<const TableEntry> lookup(std::uint64_t key) const;
  std::size_t entry_count() const { return entries_; }
  std::size_t key_count() const { return index_.size(); }
  const std::unordered_map<std::uint64_t, std::vector<TableEntry>>& index() const { return index_; }
  /// Angularly ordered neighbor indices of a dot of patterns()[pattern_index].
  std::span<const int> ring(std::size_t pattern_index, int dot) const;

 private:
  DescriptorParams params_;
  std::vector<DotPattern> patterns_;
  std::unordered_map<std::uint64_t, std::vector<TableEntry>> index_;
  std::vector<std::vector<int>> rings_;
  std::size_t entries_ = 0;
};

/// Indices of the `n` nearest neighbors of points[center], nearest first.
std::vector<std::size_t> nearest_neighbors(std::span<const Vec2> points, std::size_t center, int n);

/// Quantized key of one ordered neighbor subset (angular order around the
/// center). Invariant to any nonsingular affine map applied to all points.
std::uint64_t subset_key(std::span<const Vec2> ordered_subset, const DescriptorParams& params);

/// All C(n, m) keys for points[center], one per dropped-neighbor subset.
std::vector<std::uint64_t> point_keys(std::span<const Vec2> points, std::size_t center,
                                      const DescriptorParams& params);

/// Throws TooFewDots when a pattern has no more than `neighbors` dots.
DescriptorTable build_table(std::vector<DotPattern> patterns, const DescriptorParams& params = {});

// ---------------------------------------------------------------------------
// Homography estimation

struct Correspondence {
  Vec2 sheet;  // mm
  Vec2 image;  // px
};

struct RansacParams {
  double inlier_threshold_px = 3.0;
  int max_iterations = 500;
  double confidence = 0.99;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Homography homography;  // image <- sheet
  std::vector<std::size_t> inliers;
  int iterations = 0;
};

/// Hartley-normalized direct linear transform over all correspondences.
Homography normalized_dlt(std::span<const Correspondence> corr);

double reprojection_error(const Homography& h, const Correspondence& c);

RansacResult estimate_homography_ransac(std::span<const Correspondence> corr, const RansacParams& params = {});

// ---------------------------------------------------------------------------
// Detection

struct ObservedFrame {
  std::int64_t timestamp_ms = 0;
  std::vector<Vec2> points;  // px
};

struct Detection {
  int marker = 0;
  Homography homography;  // image <- sheet
  Pose3D pose;
  int inlier_count = 0;
  double inlier_ratio = 0.0;
  int votes = 0;
  /// (observed point index, dot index) pairs reprojecting within threshold.
  std::vector<std::pair<int, int>> inliers;
};

struct DetectParams {
  int vote_threshold = 10;
  double min_inlier_ratio = 0.4;
  int min_points = 9;
  /// Query-side tolerance: up to `soft_flips` digits lying within
  /// `soft_margin` bins of a bin edge are also tried in the adjacent bin.
  int soft_flips = 3;
  double soft_margin = 0.25;
  /// Subsets that must agree on a (point, dot) pair for the first,
  /// high-confidence RANSAC pass.
  int min_agreement = 2;
  /// Acceptance after guided matching: at least `min_inliers` matches, and
  /// at least `min_coverage` of the dots the homography puts inside the
  /// observed bounding box.
  int min_inliers = 8;
  double min_coverage = 0.3;
  RansacParams ransac;
};

std::vector<Detection> detect(const ObservedFrame& frame, const DescriptorTable& table, const CameraIntrinsics& k,
                              const DetectParams& params = {});

// ---------------------------------------------------------------------------
// Synthetic rendering

enum class OcclusionMode {
  Region,   // a straight-edged occluder sweeping in from a random side
  Scatter,  // independent random dot dropout
};

struct RenderParams {
  double noise_sigma_px = 0.0;
  double occlusion = 0.0;  // fraction of in-frame dots removed
  OcclusionMode occlusion_mode = OcclusionMode::Region;
  int width = 1280;
  int height = 800;
  std::uint64_t seed = 0;
  std::int64_t timestamp_ms = 0;
};

struct RenderedView {
  ObservedFrame frame;
  std::vector<int> dot_index;   // per observed point: source dot
  std::vector<Vec2> truth_px;   // per observed point: noise-free projection
  std::size_t visible_count = 0;  // in-frame dots before occlusion
};

RenderedView render_view(const DotPattern& pattern, const Pose3D& pose, const CameraIntrinsics& k,
                         const RenderParams& params = {});

void to_json(nlohmann::json& j, const ObservedFrame& f);
void from_json(const nlohmann::json& j, ObservedFrame& f);

// ---------------------------------------------------------------------------
// Benchmark

/// Random views of the velocity-setting sheet with a second registered
/// pattern as distractor.
struct BenchParams {
  int frames = 500;
  std::size_t dots = 180;
  Bounds sheet{420.0, 297.0};  // A3, mm
  double noise_sigma_px = 1.0;
  double occlusion = 0.3;
  double min_distance_mm = 100.0;
  double max_distance_mm = 2000.0;
  double max_tilt = 0.5;  // radians
  std::uint64_t seed = 1;
};

struct BenchResult {
  int frames = 0;
  int detected = 0;         // the rendered marker ranked first
  int false_detections = 0;  // the distractor reported
  double detection_rate = 0.0;
  /// Over all inliers of correct detections, against noise-free projections.
  double inlier_rms_px = 0.0;
  double median_ms = 0.0;
  double worst_ms = 0.0;
};

BenchResult run_bench(const BenchParams& params = {}, const CameraIntrinsics& k = {});

}  // namespace riverpilot::markers

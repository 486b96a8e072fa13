#include "riverpilot/markers.hpp"

#include "riverpilot/error.hpp"
#include "riverpilot/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace riverpilot::markers {

// ---------------------------------------------------------------------------
// Patterns

DotPattern generate_pattern(int id, std::size_t n_dots, Bounds bounds, std::uint64_t seed,
                            const PatternParams& params) {
  const double dmin = params.min_distance;
  const double cell = dmin;
  const int gx = std::max(1, static_cast<int>(std::ceil(bounds.width / cell)));
  const int gy = std::max(1, static_cast<int>(std::ceil(bounds.height / cell)));
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(gx) * gy);

  DotPattern pattern{id, seed, bounds, {}};
  pattern.dots.reserve(n_dots);
  Rng rng(seed);
  std::uint64_t draws = 0;
  while (pattern.dots.size() < n_dots) {
    if (draws++ >= params.rejection_budget) {
      throw Error(ErrorCode::PlacementExhausted,
                  std::to_string(pattern.dots.size()) + " of " + std::to_string(n_dots) + " placed");
    }
    const Vec2 p{rng.uniform(0.0, bounds.width), rng.uniform(0.0, bounds.height)};
    const int cx = std::min(gx - 1, static_cast<int>(p.x / cell));
    const int cy = std::min(gy - 1, static_cast<int>(p.y / cell));
    bool ok = true;
    for (int yy = std::max(0, cy - 1); ok && yy <= std::min(gy - 1, cy + 1); ++yy) {
      for (int xx = std::max(0, cx - 1); ok && xx <= std::min(gx - 1, cx + 1); ++xx) {
        for (int other : grid[static_cast<std::size_t>(yy) * gx + xx]) {
          if (distance(pattern.dots[other], p) < dmin) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    grid[static_cast<std::size_t>(cy) * gx + cx].push_back(static_cast<int>(pattern.dots.size()));
    pattern.dots.push_back(p);
  }
  return pattern;
}

void to_json(nlohmann::json& j, const DotPattern& p) {
  nlohmann::json dots = nlohmann::json::array();
  for (const auto& d : p.dots) dots.push_back({d.x, d.y});
  j = {{"id", p.id}, {"seed", p.seed}, {"bounds_mm", {p.bounds.width, p.bounds.height}}, {"dots", dots}};
}

void from_json(const nlohmann::json& j, DotPattern& p) {
  p.id = j.at("id").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  const auto& b = j.at("bounds_mm");
  p.bounds = {b.at(0).get<double>(), b.at(1).get<double>()};
  p.dots.clear();
  for (const auto& d : j.at("dots")) p.dots.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
}

void to_json(nlohmann::json& j, const ObservedFrame& f) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : f.points) pts.push_back({p.x, p.y});
  j = {{"timestamp_ms", f.timestamp_ms}, {"points", pts}};
}

void from_json(const nlohmann::json& j, ObservedFrame& f) {
  f.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  f.points.clear();
  for (const auto& p : j.at("points")) f.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
}

// ---------------------------------------------------------------------------
// Descriptors

DescriptorTable::DescriptorTable(DescriptorParams params, std::vector<DotPattern> patterns,
                                 std::unordered_map<std::uint64_t, std::vector<TableEntry>> index,
                                 std::vector<std::vector<int>> rings)
    : params_(params), patterns_(std::move(patterns)), index_(std::move(index)), rings_(std::move(rings)) {
  for (const auto& [key, entries] : index_) entries_ += entries.size();
}

const DotPattern* DescriptorTable::pattern(int marker_id) const {
  for (const auto& p : patterns_)
    if (p.id == marker_id) return &p;
  return nullptr;
}

std::span<const TableEntry> DescriptorTable::lookup(std::uint64_t key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return {};
  return it->second;
}

std::span<const int> DescriptorTable::ring(std::size_t pattern_index, int dot) const {
  const auto n = static_cast<std::size_t>(params_.neighbors);
  if (pattern_index >= rings_.size()) return {};
  const auto& r = rings_[pattern_index];
  const std::size_t at = static_cast<std::size_t>(dot) * n;
  if (at + n > r.size()) return {};
  return std::span<const int>(r).subspan(at, n);
}

std::vector<std::size_t> nearest_neighbors(std::span<const Vec2> points, std::size_t center, int n) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == center) continue;
    d.emplace_back((points[i] - points[center]).squared_magnitude(), i);
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

namespace {

constexpr std::size_t kMaxRing = 16;

using Positions = std::array<double, kMaxRing>;
using Digits = std::array<int, kMaxRing>;

// Continuous bin coordinate of each consecutive-triple area ratio: triangle
// i is (q[i], q[i+1], q[i+2]) and digit i compares triangles i and i+1.
template <class At>
void ratio_positions(std::size_t m, At&& at, const DescriptorParams& p, Positions& pos) {
  std::array<double, kMaxRing> log_area{};
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 a = at(i);
    const Vec2 b = at((i + 1) % m);
    const Vec2 c = at((i + 2) % m);
    log_area[i] = std::log(std::abs((b - a).cross(c - a)));
  }
  const double lo = std::log(p.ratio_min);
  const double scale = p.levels / (std::log(p.ratio_max) - lo);
  for (std::size_t i = 0; i < m; ++i) pos[i] = (log_area[i] - log_area[(i + 1) % m] - lo) * scale;
}

int digit_at(double pos, int levels) {
  if (!(pos > 0.0)) return 0;  // also catches NaN from zero-area triangles
  if (!(pos < levels)) return levels - 1;
  return std::min(static_cast<int>(pos), levels - 1);
}

int bits_for(int levels) {
  int bits = 1;
  while ((1 << bits) < levels) ++bits;
  return bits;
}

struct Canonical {
  std::uint64_t key = 0;
  int rotation = 0;
  bool mirrored = false;
};

// Smallest packing over the m rotations of the sequence and of its mirror
// image. Mirroring reverses the ring and inverts every ratio, which the
// symmetric log binning maps to (levels - 1 - digit).
Canonical canonicalize(const Digits& digits, std::size_t m, int levels) {
  const int bits = bits_for(levels);
  const std::uint64_t mask = static_cast<std::size_t>(bits) * m >= 64 ? ~0ull : (1ull << (bits * m)) - 1;
  std::uint64_t fwd = 0, bwd = 0;
  for (std::size_t i = 0; i < m; ++i) {
    fwd = (fwd << bits) | static_cast<std::uint64_t>(digits[i]);
    bwd = (bwd << bits) | static_cast<std::uint64_t>(levels - 1 - digits[m - 1 - i]);
  }
  Canonical best{fwd, 0, false};
  if (bwd < best.key) best = {bwd, 0, true};
  const int top = bits * static_cast<int>(m - 1);
  for (std::size_t r = 1; r < m; ++r) {
    fwd = ((fwd << bits) & mask) | (fwd >> top);
    bwd = ((bwd << bits) & mask) | (bwd >> top);
    if (fwd < best.key) best = {fwd, static_cast<int>(r), false};
    if (bwd < best.key) best = {bwd, static_cast<int>(r), true};
  }
  return best;
}

// Position within the subset of canonical element j. A mirrored sequence
// reads the ring backwards; each digit spans four points, hence the shift.
std::size_t canonical_index(std::size_t j, const Canonical& c, std::size_t m) {
  const auto r = static_cast<std::size_t>(c.rotation);
  if (!c.mirrored) return (j + r) % m;
  return m - 1 - (j + r + m - 3) % m;
}

// m-subsets of n ring positions in lexicographic order of kept positions.
const std::vector<std::vector<int>>& subsets_of(int n, int m) {
  static thread_local std::vector<std::vector<int>> cache;
  static thread_local std::pair<int, int> cached{-1, -1};
  if (cached != std::pair{n, m}) {
    cache.clear();
    std::vector<bool> pick(static_cast<std::size_t>(n), false);
    std::fill(pick.begin(), pick.begin() + m, true);
    do {
      std::vector<int> s;
      for (int i = 0; i < n; ++i)
        if (pick[static_cast<std::size_t>(i)]) s.push_back(i);
      cache.push_back(std::move(s));
    } while (std::prev_permutation(pick.begin(), pick.end()));
    cached = {n, m};
  }
  return cache;
}

bool valid_shape(const DescriptorParams& p) {
  return p.subset >= 4 && p.subset <= p.neighbors && static_cast<std::size_t>(p.neighbors) <= kMaxRing;
}

// Indices of the n nearest neighbors of points[center], sorted by angle about
// the center (clockwise on a y-down sheet). Empty when fewer than n exist.
std::vector<int> angular_ring(std::span<const Vec2> points, std::size_t center, int n) {
  const auto nn = nearest_neighbors(points, center, n);
  if (nn.size() < static_cast<std::size_t>(n)) return {};
  const Vec2 c = points[center];
  std::vector<std::pair<double, int>> by_angle;
  by_angle.reserve(nn.size());
  for (auto i : nn) by_angle.emplace_back((points[i] - c).bearing(), static_cast<int>(i));
  std::sort(by_angle.begin(), by_angle.end());
  std::vector<int> out;
  out.reserve(by_angle.size());
  for (const auto& [angle, i] : by_angle) out.push_back(i);
  return out;
}

Canonical hard_canonical(std::span<const Vec2> points, std::span<const int> ring, const std::vector<int>& subset,
                         const DescriptorParams& params) {
  const std::size_t m = subset.size();
  Positions pos{};
  ratio_positions(m, [&](std::size_t i) { return points[static_cast<std::size_t>(ring[static_cast<std::size_t>(subset[i])])]; },
                  params, pos);
  Digits digits{};
  for (std::size_t i = 0; i < m; ++i) digits[i] = digit_at(pos[i], params.levels);
  return canonicalize(digits, m, params.levels);
}

}  // namespace

std::uint64_t subset_key(std::span<const Vec2> ordered, const DescriptorParams& params) {
  const std::size_t m = ordered.size();
  if (m < 4 || m > kMaxRing) throw Error(ErrorCode::TooFewDots, "subset size outside [4, 16]");
  Positions pos{};
  ratio_positions(m, [&](std::size_t i) { return ordered[i]; }, params, pos);
  Digits digits{};
  for (std::size_t i = 0; i < m; ++i) digits[i] = digit_at(pos[i], params.levels);
  return canonicalize(digits, m, params.levels).key;
}

std::vector<std::uint64_t> point_keys(std::span<const Vec2> points, std::size_t center,
                                      const DescriptorParams& params) {
  std::vector<std::uint64_t> keys;
  if (!valid_shape(params)) return keys;
  const auto ring = angular_ring(points, center, params.neighbors);
  if (ring.empty()) return keys;
  for (const auto& subset : subsets_of(params.neighbors, params.subset))
    keys.push_back(hard_canonical(points, ring, subset, params).key);
  return keys;
}

DescriptorTable build_table(std::vector<DotPattern> patterns, const DescriptorParams& params) {
  if (!valid_shape(params)) throw Error(ErrorCode::ConfigError, "descriptor needs 4 <= m <= n <= 16");
  std::unordered_map<std::uint64_t, std::vector<TableEntry>> index;
  std::vector<std::vector<int>> rings;
  const auto& subsets = subsets_of(params.neighbors, params.subset);
  for (const auto& pattern : patterns) {
    if (pattern.dots.size() <= static_cast<std::size_t>(params.neighbors)) {
      throw Error(ErrorCode::TooFewDots, "pattern " + std::to_string(pattern.id));
    }
    auto& flat = rings.emplace_back();
    flat.reserve(pattern.dots.size() * static_cast<std::size_t>(params.neighbors));
    for (std::size_t i = 0; i < pattern.dots.size(); ++i) {
      const auto ring = angular_ring(pattern.dots, i, params.neighbors);
      flat.insert(flat.end(), ring.begin(), ring.end());
      for (std::size_t s = 0; s < subsets.size(); ++s) {
        const Canonical c = hard_canonical(pattern.dots, ring, subsets[s], params);
        index[c.key].push_back({pattern.id, static_cast<int>(i), static_cast<std::uint16_t>(s),
                                static_cast<std::uint8_t>(c.rotation), c.mirrored});
      }
    }
  }
  return DescriptorTable(params, std::move(patterns), std::move(index), std::move(rings));
}

// ---------------------------------------------------------------------------
// Detection

namespace {

struct Hit {
  int marker;
  int point;
  int dot;
  auto operator<=>(const Hit&) const = default;
};

// Query-side digit sets: the hard digits plus variants that move the most
// ambiguous digits (those within `margin` bins of an edge) to the adjacent bin.
void soft_variants(const Positions& pos, std::size_t m, int levels, int max_flips, double margin,
                   std::vector<std::pair<Canonical, Digits>>& out) {
  out.clear();
  Digits digits{};
  std::array<std::pair<double, std::size_t>, kMaxRing> amb{};
  std::size_t n_amb = 0;
  for (std::size_t i = 0; i < m; ++i) {
    digits[i] = digit_at(pos[i], levels);
    if (!(pos[i] > 0.0) || !(pos[i] < levels)) continue;
    const double frac = pos[i] - std::floor(pos[i]);
    const double d = std::min(frac, 1.0 - frac);
    if (d < margin) amb[n_amb++] = {d, i};
  }
  std::sort(amb.begin(), amb.begin() + static_cast<std::ptrdiff_t>(n_amb));
  const std::size_t flips = std::min<std::size_t>(n_amb, static_cast<std::size_t>(std::clamp(max_flips, 0, 10)));
  std::array<int, kMaxRing> alt{};
  for (std::size_t f = 0; f < flips; ++f) {
    const std::size_t i = amb[f].second;
    const double frac = pos[i] - std::floor(pos[i]);
    alt[f] = std::clamp(digits[i] + (frac < 0.5 ? -1 : 1), 0, levels - 1);
  }
  for (std::uint32_t mask = 0; mask < (1u << flips); ++mask) {
    Digits d = digits;
    for (std::size_t f = 0; f < flips; ++f)
      if (mask & (1u << f)) d[amb[f].second] = alt[f];
    out.emplace_back(canonicalize(d, m, levels), d);
  }
}

// Uniform grid over image points for radius queries.
class PointGrid {
 public:
  PointGrid(std::span<const Vec2> pts, double cell) : pts_(pts), cell_(cell) {
    if (pts.empty()) return;
    min_ = max_ = pts[0];
    for (const auto& p : pts) {
      min_ = {std::min(min_.x, p.x), std::min(min_.y, p.y)};
      max_ = {std::max(max_.x, p.x), std::max(max_.y, p.y)};
    }
    nx_ = static_cast<int>((max_.x - min_.x) / cell_) + 1;
    ny_ = static_cast<int>((max_.y - min_.y) / cell_) + 1;
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[cell_of(pts[i])].push_back(static_cast<int>(i));
  }

  /// Nearest point within `radius`, or -1.
  int nearest(Vec2 q, double radius) const {
    if (cells_.empty()) return -1;
    const int cx = static_cast<int>(std::floor((q.x - min_.x) / cell_));
    const int cy = static_cast<int>(std::floor((q.y - min_.y) / cell_));
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    int best = -1;
    double best_d2 = radius * radius;
    for (int y = cy - reach; y <= cy + reach; ++y) {
      if (y < 0 || y >= ny_) continue;
      for (int x = cx - reach; x <= cx + reach; ++x) {
        if (x < 0 || x >= nx_) continue;
        for (int i : cells_[static_cast<std::size_t>(y) * nx_ + x]) {
          const double d2 = (pts_[static_cast<std::size_t>(i)] - q).squared_magnitude();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
          }
        }
      }
    }
    return best;
  }

 private:
  std::size_t cell_of(Vec2 p) const {
    const int x = std::clamp(static_cast<int>((p.x - min_.x) / cell_), 0, nx_ - 1);
    const int y = std::clamp(static_cast<int>((p.y - min_.y) / cell_), 0, ny_ - 1);
    return static_cast<std::size_t>(y) * nx_ + x;
  }

  std::span<const Vec2> pts_;
  double cell_;
  Vec2 min_, max_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> cells_;
};

// Pairs every projected dot with its nearest unclaimed observed point.
std::vector<std::pair<int, int>> guided_matches(const Homography& h, const DotPattern& pattern,
                                                const PointGrid& grid, std::span<const Vec2> pts,
                                                double radius) {
  std::vector<std::pair<int, int>> matches;  // (point, dot)
  std::vector<double> claim(pts.size(), std::numeric_limits<double>::infinity());
  std::vector<int> owner(pts.size(), -1);
  const auto& m = h.matrix();
  for (std::size_t d = 0; d < pattern.dots.size(); ++d) {
    const Vec2 s = pattern.dots[d];
    const double w = m(2, 0) * s.x + m(2, 1) * s.y + m(2, 2);
    if (std::abs(w) < 1e-12) continue;
    const Vec2 proj{(m(0, 0) * s.x + m(0, 1) * s.y + m(0, 2)) / w, (m(1, 0) * s.x + m(1, 1) * s.y + m(1, 2)) / w};
    const int p = grid.nearest(proj, radius);
    if (p < 0) continue;
    const double d2 = (pts[static_cast<std::size_t>(p)] - proj).squared_magnitude();
    if (d2 < claim[static_cast<std::size_t>(p)]) {
      claim[static_cast<std::size_t>(p)] = d2;
      owner[static_cast<std::size_t>(p)] = static_cast<int>(d);
    }
  }
  for (std::size_t p = 0; p < pts.size(); ++p)
    if (owner[p] >= 0) matches.emplace_back(static_cast<int>(p), owner[p]);
  return matches;
}

// Pattern dots that h places inside the bounding box of the observations.
std::size_t dots_in_view(const Homography& h, const DotPattern& pattern, std::span<const Vec2> pts) {
  Vec2 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  const auto& m = h.matrix();
  std::size_t count = 0;
  for (const auto& s : pattern.dots) {
    const double w = m(2, 0) * s.x + m(2, 1) * s.y + m(2, 2);
    if (!(w > 1e-12)) continue;
    const double u = (m(0, 0) * s.x + m(0, 1) * s.y + m(0, 2)) / w;
    const double v = (m(1, 0) * s.x + m(1, 1) * s.y + m(1, 2)) / w;
    if (u >= lo.x && u <= hi.x && v >= lo.y && v <= hi.y) ++count;
  }
  return count;
}

}  // namespace

std::vector<Detection> detect(const ObservedFrame& frame, const DescriptorTable& table, const CameraIntrinsics& k,
                              const DetectParams& params) {
  std::vector<Detection> out;
  const auto& pts = frame.points;
  const auto& dp = table.params();
  if (!valid_shape(dp)) return out;
  if (pts.size() < static_cast<std::size_t>(std::max(params.min_points, dp.neighbors + 1))) return out;

  const auto m = static_cast<std::size_t>(dp.subset);
  const auto& subsets = subsets_of(dp.neighbors, dp.subset);
  std::unordered_map<int, std::size_t> pattern_index;
  for (std::size_t p = 0; p < table.patterns().size(); ++p) pattern_index[table.patterns()[p].id] = p;

  // Vote: each (point, subset) counts once per marker it hits. A hit aligns
  // the observed subset with the registered one, so it supports the center
  // pair and all m neighbor pairs at once.
  std::vector<Hit> hits;
  std::vector<Hit> local;
  std::unordered_map<int, int> votes;
  std::vector<int> seen_markers;
  std::vector<std::pair<Canonical, Digits>> variants;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto ring = angular_ring(pts, i, dp.neighbors);
    if (ring.empty()) continue;
    for (const auto& subset : subsets) {
      const auto point_at = [&](std::size_t j) {
        return static_cast<int>(ring[static_cast<std::size_t>(subset[j])]);
      };
      Positions pos{};
      ratio_positions(m, [&](std::size_t j) { return pts[static_cast<std::size_t>(point_at(j))]; }, dp, pos);
      soft_variants(pos, m, dp.levels, params.soft_flips, params.soft_margin, variants);

      local.clear();
      for (std::size_t v = 0; v < variants.size(); ++v) {
        const Canonical& qc = variants[v].first;
        bool repeat = false;
        for (std::size_t u = 0; u < v && !repeat; ++u) repeat = variants[u].first.key == qc.key;
        if (repeat) continue;
        for (const auto& e : table.lookup(qc.key)) {
          const auto pit = pattern_index.find(e.marker);
          if (pit == pattern_index.end()) continue;
          const auto dot_ring = table.ring(pit->second, e.dot);
          if (dot_ring.empty() || e.subset >= subsets.size()) continue;
          const auto& dot_subset = subsets[e.subset];
          const Canonical tc{qc.key, e.rotation, e.mirrored};
          local.push_back({e.marker, static_cast<int>(i), e.dot});
          for (std::size_t j = 0; j < m; ++j) {
            const int q = point_at(canonical_index(j, qc, m));
            const int d = dot_ring[static_cast<std::size_t>(dot_subset[canonical_index(j, tc, m)])];
            local.push_back({e.marker, q, d});
          }
        }
      }
      if (local.empty()) continue;
      std::sort(local.begin(), local.end());
      local.erase(std::unique(local.begin(), local.end()), local.end());
      seen_markers.clear();
      for (const auto& h : local) {
        hits.push_back(h);
        if (std::find(seen_markers.begin(), seen_markers.end(), h.marker) == seen_markers.end()) {
          seen_markers.push_back(h.marker);
          ++votes[h.marker];
        }
      }
    }
  }
  std::sort(hits.begin(), hits.end());

  PointGrid grid(pts, 8.0);
  const double thr = params.ransac.inlier_threshold_px;

  for (const auto& pattern : table.patterns()) {
    const int marker = pattern.id;
    const auto vit = votes.find(marker);
    if (vit == votes.end() || vit->second < params.vote_threshold) continue;

    // Per observed point, its most-supported dot; per dot, its strongest point.
    auto [lo, hi] = std::equal_range(hits.begin(), hits.end(), Hit{marker, 0, 0},
                                     [](const Hit& a, const Hit& b) { return a.marker < b.marker; });
    std::unordered_map<int, std::pair<int, int>> best_for_dot;  // dot -> (count, point)
    for (auto it = lo; it != hi;) {
      const int point = it->point;
      int best_dot = -1, best_count = 0;
      while (it != hi && it->point == point) {
        const int dot = it->dot;
        int count = 0;
        while (it != hi && it->point == point && it->dot == dot) {
          ++count;
          ++it;
        }
        if (count > best_count) {
          best_count = count;
          best_dot = dot;
        }
      }
      auto& slot = best_for_dot[best_dot];
      if (best_count > slot.first) slot = {best_count, point};
    }

    // Pairs that several subsets agree on are rarely accidental; try them
    // alone first, then the full voted set.
    std::vector<std::pair<int, int>> all_pairs, strong_pairs;  // (point, dot)
    for (const auto& [dot, cp] : best_for_dot) {
      all_pairs.emplace_back(cp.second, dot);
      if (cp.first >= params.min_agreement) strong_pairs.emplace_back(cp.second, dot);
    }
    std::sort(all_pairs.begin(), all_pairs.end());
    std::sort(strong_pairs.begin(), strong_pairs.end());

    std::vector<std::pair<int, int>> pairs;
    RansacResult fit;
    double ratio = 0.0;
    bool found = false;
    for (const auto* candidate : {&strong_pairs, &all_pairs}) {
      if (candidate->size() < 4 || (candidate == &strong_pairs && strong_pairs.size() == all_pairs.size()))
        continue;
      std::vector<Correspondence> corr;
      corr.reserve(candidate->size());
      for (const auto& [point, dot] : *candidate)
        corr.push_back({pattern.dots[static_cast<std::size_t>(dot)], pts[static_cast<std::size_t>(point)]});
      try {
        fit = estimate_homography_ransac(corr, params.ransac);
      } catch (const Error&) {
        continue;
      }
      ratio = static_cast<double>(fit.inliers.size()) / static_cast<double>(corr.size());
      if (fit.inliers.size() >= 4 && ratio >= params.min_inlier_ratio) {
        pairs = *candidate;
        found = true;
        break;
      }
    }
    if (!found) continue;

    // Guided refinement against every dot of the pattern.
    Homography h = fit.homography;
    std::vector<std::pair<int, int>> inliers;
    for (const auto i : fit.inliers) inliers.push_back(pairs[i]);
    for (int round = 0; round < 3; ++round) {
      auto matches = guided_matches(h, pattern, grid, pts, thr);
      if (matches.size() < 4) break;
      std::vector<Correspondence> sub;
      sub.reserve(matches.size());
      for (const auto& [point, dot] : matches)
        sub.push_back({pattern.dots[static_cast<std::size_t>(dot)], pts[static_cast<std::size_t>(point)]});
      const Homography refit = normalized_dlt(sub);
      std::vector<std::pair<int, int>> kept;
      for (const auto& [point, dot] : matches) {
        const Correspondence c{pattern.dots[static_cast<std::size_t>(dot)], pts[static_cast<std::size_t>(point)]};
        if (reprojection_error(refit, c) < thr) kept.emplace_back(point, dot);
      }
      if (kept.size() < inliers.size()) break;
      const bool converged = kept == inliers;
      h = refit;
      inliers = std::move(kept);
      if (converged) break;
    }
    if (inliers.size() < static_cast<std::size_t>(std::max(4, params.min_inliers))) continue;
    if (static_cast<double>(inliers.size()) < params.min_coverage * static_cast<double>(dots_in_view(h, pattern, pts)))
      continue;

    Detection det;
    det.marker = marker;
    det.homography = h;
    det.inlier_count = static_cast<int>(inliers.size());
    det.inlier_ratio = ratio;
    det.votes = vit->second;
    det.inliers = std::move(inliers);
    try {
      det.pose = pose_from_homography(h, k);
    } catch (const Error&) {
      continue;
    }
    out.push_back(std::move(det));
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.inlier_count > b.inlier_count; });
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

RenderedView render_view(const DotPattern& pattern, const Pose3D& pose, const CameraIntrinsics& k,
                         const RenderParams& params) {
  const Eigen::Vector3d center = pose.camera_center();
  // The printed face looks toward -z of the sheet frame.
  if (center.z() >= 0.0) throw Error(ErrorCode::SheetBehindCamera);

  struct Visible {
    int dot;
    Vec2 px;
  };
  std::vector<Visible> visible;
  for (std::size_t i = 0; i < pattern.dots.size(); ++i) {
    const auto px = project(pose, k, pattern.dots[i]);
    if (!px) continue;
    if (px->x < 0.0 || px->y < 0.0 || px->x >= params.width || px->y >= params.height) continue;
    visible.push_back({static_cast<int>(i), *px});
  }

  Rng rng(params.seed);
  RenderedView view;
  view.visible_count = visible.size();
  const auto keep = static_cast<std::size_t>(
      std::lround((1.0 - std::clamp(params.occlusion, 0.0, 1.0)) * static_cast<double>(visible.size())));

  if (keep < visible.size()) {
    if (params.occlusion_mode == OcclusionMode::Region) {
      const Vec2 dir = Angle(rng.uniform(-std::numbers::pi, std::numbers::pi)).unit();
      std::stable_sort(visible.begin(), visible.end(),
                       [&](const Visible& a, const Visible& b) { return a.px.dot(dir) < b.px.dot(dir); });
    } else {
      for (std::size_t i = 0; i < keep; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(visible.size() - i));
        std::swap(visible[i], visible[j]);
      }
    }
    visible.resize(keep);
  }

  // Observation order carries no information about dot identity.
  for (std::size_t i = visible.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(visible[i - 1], visible[j]);
  }

  view.frame.timestamp_ms = params.timestamp_ms;
  for (const auto& v : visible) {
    Vec2 noisy = v.px;
    if (params.noise_sigma_px > 0.0) {
      noisy.x += rng.normal(0.0, params.noise_sigma_px);
      noisy.y += rng.normal(0.0, params.noise_sigma_px);
    }
    view.frame.points.push_back(noisy);
    view.dot_index.push_back(v.dot);
    view.truth_px.push_back(v.px);
  }
  return view;
}

}  // namespace riverpilot::markers

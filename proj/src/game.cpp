#include "riverpilot/error.hpp"
#include "riverpilot/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace riverpilot::game {

using nlohmann::json;

std::string_view to_string(Stream s) { return s == Stream::Stream1 ? "Stream1" : "Stream2"; }

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Enactive: return "Enactive";
    case Stage::EnactiveIconic: return "EnactiveIconic";
    case Stage::Iconic: return "Iconic";
  }
  return "?";
}

Stream stream_from_string(std::string_view s) {
  if (s == "Stream1") return Stream::Stream1;
  if (s == "Stream2") return Stream::Stream2;
  throw Error(ErrorCode::ParseError, "unknown stream " + std::string(s));
}

Stage stage_from_string(std::string_view s) {
  if (s == "Enactive") return Stage::Enactive;
  if (s == "EnactiveIconic") return Stage::EnactiveIconic;
  if (s == "Iconic") return Stage::Iconic;
  throw Error(ErrorCode::ParseError, "unknown stage " + std::string(s));
}

const std::array<char, 5>& stream_letters(Stream s) {
  static constexpr std::array<char, 5> one{'A', 'C', 'E', 'G', 'I'};
  static constexpr std::array<char, 5> two{'B', 'D', 'F', 'H', 'J'};
  return s == Stream::Stream1 ? one : two;
}

Stream stream_of(char letter) {
  if (letter < 'A' || letter > 'J') throw Error(ErrorCode::InvariantViolation, "letter out of range");
  return (letter - 'A') % 2 == 0 ? Stream::Stream1 : Stream::Stream2;
}

Stage stage_of(char letter) {
  if (letter < 'A' || letter > 'J') throw Error(ErrorCode::InvariantViolation, "letter out of range");
  if (letter <= 'D') return Stage::Enactive;
  if (letter <= 'H') return Stage::EnactiveIconic;
  return Stage::Iconic;
}

StageFlags stage_flags(Stage s) {
  switch (s) {
    case Stage::Enactive: return {.animations = true, .arrows = false, .finish_mark = false, .sounds = true, .canvas = false};
    case Stage::EnactiveIconic: return {.animations = true, .arrows = true, .finish_mark = false, .sounds = true, .canvas = false};
    case Stage::Iconic: return {.animations = false, .arrows = true, .finish_mark = true, .sounds = false, .canvas = true};
  }
  return {};
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Docked: return "Docked";
    case Phase::Sailing: return "Sailing";
    case Phase::Crashed: return "Crashed";
    case Phase::ReachedGold: return "ReachedGold";
    case Phase::TimedOut: return "TimedOut";
  }
  return "?";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Gold: return "Gold";
    case Outcome::Crash: return "Crash";
    case Outcome::Timeout: return "Timeout";
    case Outcome::Reset: return "Reset";
  }
  return "?";
}

Phase phase_from_string(std::string_view s) {
  for (Phase p : {Phase::Docked, Phase::Sailing, Phase::Crashed, Phase::ReachedGold, Phase::TimedOut}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorCode::ParseError, "unknown phase " + std::string(s));
}

Outcome outcome_from_string(std::string_view s) {
  for (Outcome o : {Outcome::Gold, Outcome::Crash, Outcome::Timeout, Outcome::Reset}) {
    if (to_string(o) == s) return o;
  }
  throw Error(ErrorCode::ParseError, "unknown outcome " + std::string(s));
}

namespace detail {

// River boundary bucketed into x columns, so a 10 ms step only tests the
// few nearby edges. Membership casts a vertical ray; points within 1e-6 mm
// of the boundary count as outside, as in point_in_polygon.
class RiverIndex {
 public:
  explicit RiverIndex(const Level& level) : gold_(level.gold), gold_radius_(level.gold_radius) {
    const auto& poly = level.river;
    x_min_ = std::numeric_limits<double>::infinity();
    double x_max = -x_min_;
    for (Vec2 p : poly) {
      x_min_ = std::min(x_min_, p.x);
      x_max = std::max(x_max, p.x);
    }
    columns_.resize(static_cast<std::size_t>(std::max(1.0, std::ceil((x_max - x_min_) / kColumn))) + 1);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2 a = poly[i];
      const Vec2 b = poly[(i + 1) % poly.size()];
      const Edge e{a, b, std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y), std::max(a.y, b.y)};
      const int id = static_cast<int>(edges_.size());
      edges_.push_back(e);
      for (std::size_t c = column(e.x0 - kTol); c <= column(e.x1 + kTol); ++c) columns_[c].push_back(id);
    }
  }

  bool contains(Vec2 p) const {
    if (p.x < x_min_ - kTol || column_of_raw(p.x) >= columns_.size()) return false;
    bool inside = false;
    for (int id : columns_[column(p.x)]) {
      const Edge& e = edges_[static_cast<std::size_t>(id)];
      if (p.x >= e.x0 - kTol && p.x <= e.x1 + kTol && p.y >= e.y0 - kTol && p.y <= e.y1 + kTol &&
          distance_to_segment(p, e.a, e.b) <= kTol) {
        return false;
      }
      if ((e.a.x > p.x) != (e.b.x > p.x)) {
        const double y_cross = (e.b.y - e.a.y) * (p.x - e.a.x) / (e.b.x - e.a.x) + e.a.y;
        if (y_cross < p.y) inside = !inside;
      }
    }
    return inside;
  }

  /// Earliest contact of [p, q] with the boundary outside the gold zone.
  std::optional<Vec2> crash_point(Vec2 p, Vec2 q) const {
    const double x0 = std::min(p.x, q.x), x1 = std::max(p.x, q.x);
    const double y0 = std::min(p.y, q.y), y1 = std::max(p.y, q.y);
    std::optional<double> best;
    const std::size_t c0 = column(x0), c1 = column(x1);
    for (std::size_t c = c0; c <= c1; ++c) {
      for (int id : columns_[c]) {
        const Edge& e = edges_[static_cast<std::size_t>(id)];
        if (e.x1 < x0 || e.x0 > x1 || e.y1 < y0 || e.y0 > y1) continue;
        auto t = segment_intersection(p, q, e.a, e.b);
        if (!t) continue;
        const Vec2 contact = p + (q - p) * *t;
        if (distance(contact, gold_) <= gold_radius_) continue;
        if (!best || *t < *best) best = t;
      }
    }
    if (!best) return std::nullopt;
    return p + (q - p) * *best;
  }

 private:
  static constexpr double kColumn = 40.0;
  static constexpr double kTol = 1e-6;
  struct Edge {
    Vec2 a, b;
    double x0, x1, y0, y1;
  };
  std::size_t column_of_raw(double x) const {
    return static_cast<std::size_t>(std::max(0.0, std::floor((x - x_min_) / kColumn)));
  }
  std::size_t column(double x) const { return std::min(column_of_raw(x), columns_.size() - 1); }

  Vec2 gold_;
  double gold_radius_;
  double x_min_ = 0.0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> columns_;
};

}  // namespace detail

namespace {

using detail::RiverIndex;

struct StepResult {
  Vec2 position;
  Vec2 velocity;
  std::optional<Outcome> outcome;  // Gold or Crash
};

// `base` is ship velocity plus wind.
StepResult advance(const Level& level, const RiverIndex& river, Vec2 base, Vec2 pos, double dt) {
  Vec2 v = base;
  if (river.contains(pos)) v += level.current;
  const Vec2 next = pos + v * dt;
  if (auto hit = river.crash_point(pos, next)) return {*hit, v, Outcome::Crash};
  if (distance(next, level.gold) <= level.gold_radius) return {next, v, Outcome::Gold};
  return {next, v, std::nullopt};
}

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }

}  // namespace

Vec2 total_velocity(const Level& level, Angle heading, Vec2 pos) {
  Vec2 v = heading.unit() * level.ship_speed + level.wind;
  if (RiverIndex(level).contains(pos)) v += level.current;
  return v;
}

// ---------------------------------------------------------------------------
// Session

char SessionState::letter() const { return stream_letters(stream)[static_cast<std::size_t>(level_index)]; }

int SessionState::closed_attempts(char l) const {
  return static_cast<int>(std::count_if(attempts.begin(), attempts.end(),
                                        [&](const AttemptRecord& a) { return a.level == l && a.outcome; }));
}

std::vector<int> stream_order(const std::vector<Level>& levels, Stream stream) {
  std::vector<int> order;
  for (char letter : stream_letters(stream)) {
    auto it = std::find_if(levels.begin(), levels.end(), [&](const Level& l) { return l.letter == letter; });
    if (it == levels.end()) throw Error(ErrorCode::InvariantViolation, std::string("levels: missing ") + letter);
    order.push_back(static_cast<int>(it - levels.begin()));
  }
  return order;
}

Session::Session(std::shared_ptr<const std::vector<Level>> levels, std::string team_id, Stream stream)
    : levels_(std::move(levels)), order_(stream_order(*levels_, stream)) {
  for (int i : order_) rivers_.push_back(std::make_shared<const RiverIndex>((*levels_)[static_cast<std::size_t>(i)]));
  state_.team_id = std::move(team_id);
  state_.stream = stream;
  enter_level(0);
}

Session::Session(std::shared_ptr<const std::vector<Level>> levels, SessionState state)
    : levels_(std::move(levels)), order_(stream_order(*levels_, state.stream)), state_(std::move(state)) {
  for (int i : order_) rivers_.push_back(std::make_shared<const RiverIndex>((*levels_)[static_cast<std::size_t>(i)]));
}

const Level& Session::level() const { return (*levels_)[static_cast<std::size_t>(order_[state_.level_index])]; }

std::vector<GameEvent> Session::drain_events() { return std::exchange(events_, {}); }

void Session::require_active() const {
  if (state_.finished) throw Error(ErrorCode::SessionFinished, state_.team_id);
}

void Session::enter_level(int index) {
  state_.level_index = index;
  state_.level_started_us = state_.clock_us;
  state_.ship = ShipState{level().dock, std::nullopt, Phase::Docked};
  events_.push_back(StageEntered{state_.letter(), state_.stage()});
}

void Session::advance_level(Outcome outcome) {
  state_.results.push_back({state_.letter(), outcome, state_.closed_attempts(state_.letter()),
                            state_.level_started_us / 1000, state_.clock_ms()});
  if (state_.level_index + 1 < static_cast<int>(order_.size())) {
    enter_level(state_.level_index + 1);
  } else {
    state_.finished = true;
    state_.ship.phase = outcome == Outcome::Gold ? Phase::ReachedGold : Phase::TimedOut;
  }
}

void Session::set_velocity(Angle heading) {
  require_active();
  if (state_.ship.phase != Phase::Docked) throw Error(ErrorCode::NotDocked, std::string(to_string(state_.ship.phase)));
  state_.ship.heading = Angle(heading.radians());
  events_.push_back(VelocitySet{*state_.ship.heading});
}

void Session::launch() {
  require_active();
  if (state_.ship.phase != Phase::Docked) throw Error(ErrorCode::NotDocked, std::string(to_string(state_.ship.phase)));
  if (!state_.ship.heading) throw Error(ErrorCode::HeadingUnset, std::string(1, state_.letter()));
  AttemptRecord a;
  a.level = state_.letter();
  a.index = state_.closed_attempts(a.level) + 1;
  a.heading = *state_.ship.heading;
  a.started_ms = state_.clock_ms();
  a.ended_ms = a.started_ms;
  a.trajectory.push_back(state_.ship.position);
  state_.attempts.push_back(std::move(a));
  state_.ship.phase = Phase::Sailing;
  state_.steps_in_attempt = 0;
  events_.push_back(Launched{state_.letter(), state_.attempts.back().index, *state_.ship.heading});
}

void Session::step(double dt) {
  require_active();
  if (state_.ship.phase != Phase::Sailing) throw Error(ErrorCode::NotSailing, std::string(to_string(state_.ship.phase)));
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  const Level& lv = level();
  const RiverIndex& river = *rivers_[static_cast<std::size_t>(state_.level_index)];
  const StepResult r = advance(lv, river, state_.ship.heading->unit() * lv.ship_speed + lv.wind, state_.ship.position, dt);
  state_.clock_us += to_us(dt);
  state_.ship.position = r.position;
  AttemptRecord& a = state_.attempts.back();
  ++state_.steps_in_attempt;
  if (r.outcome || state_.steps_in_attempt % kSampleStride == 0) a.trajectory.push_back(r.position);
  const bool sounds = stage_flags(lv.stage).sounds;
  if (r.outcome == Outcome::Crash) {
    state_.ship.phase = Phase::Crashed;
    a.ended_ms = state_.clock_ms();
    if (sounds) events_.push_back(SoundCue{SoundCue::Kind::Crash});
    check_timeout();
    return;
  }
  if (r.outcome == Outcome::Gold) {
    a.outcome = Outcome::Gold;
    a.ended_ms = state_.clock_ms();
    events_.push_back(OutcomeEvent{a.level, a.index, Outcome::Gold, r.position});
    if (sounds) events_.push_back(SoundCue{SoundCue::Kind::Win});
    advance_level(Outcome::Gold);
    return;
  }
  check_timeout();
}

void Session::check_timeout() {
  if (state_.clock_us - state_.level_started_us <= to_us(level().time_limit)) return;
  const bool open = !state_.attempts.empty() && !state_.attempts.back().outcome &&
                    state_.attempts.back().level == state_.letter();
  if (open) {
    AttemptRecord& a = state_.attempts.back();
    // A crashed run that was never reset still ended in a crash.
    a.outcome = state_.ship.phase == Phase::Crashed ? Outcome::Crash : Outcome::Timeout;
    if (state_.ship.phase != Phase::Crashed) a.ended_ms = state_.clock_ms();
    events_.push_back(OutcomeEvent{a.level, a.index, *a.outcome, state_.ship.position});
  } else {
    events_.push_back(OutcomeEvent{state_.letter(), 0, Outcome::Timeout, state_.ship.position});
  }
  advance_level(Outcome::Timeout);
}

void Session::reset() {
  require_active();
  if (state_.ship.phase != Phase::Crashed) throw Error(ErrorCode::NotCrashed, std::string(to_string(state_.ship.phase)));
  AttemptRecord& a = state_.attempts.back();
  a.outcome = Outcome::Crash;
  events_.push_back(OutcomeEvent{a.level, a.index, Outcome::Crash, state_.ship.position});
  state_.ship = ShipState{level().dock, std::nullopt, Phase::Docked};
  events_.push_back(ShipReset{a.level});
}

void Session::wait(double seconds) {
  require_active();
  if (state_.ship.phase == Phase::Sailing) throw Error(ErrorCode::NotDocked, "Sailing");
  if (!(seconds >= 0.0) || !std::isfinite(seconds)) throw Error(ErrorCode::ConfigError, "wait must be non-negative");
  state_.clock_us += to_us(seconds);
  check_timeout();
}

std::int64_t Session::sail_to_end(double dt) {
  std::int64_t n = 0;
  while (!state_.finished && state_.ship.phase == Phase::Sailing) {
    step(dt);
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vec(Vec2 p) { return json::array({p.x, p.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
std::string letter_str(char c) { return std::string(1, c); }
char letter_from(const json& j) {
  const auto s = j.get<std::string>();
  if (s.size() != 1) throw Error(ErrorCode::ParseError, "letter");
  return s[0];
}

}  // namespace

json to_json(const SessionState& s) {
  json attempts = json::array();
  for (const auto& a : s.attempts) {
    json traj = json::array();
    for (Vec2 p : a.trajectory) traj.push_back(vec(p));
    attempts.push_back({{"level", letter_str(a.level)},
                        {"index", a.index},
                        {"heading", a.heading.radians()},
                        {"outcome", a.outcome ? json(to_string(*a.outcome)) : json(nullptr)},
                        {"started_ms", a.started_ms},
                        {"ended_ms", a.ended_ms},
                        {"trajectory", traj}});
  }
  json results = json::array();
  for (const auto& r : s.results) {
    results.push_back({{"level", letter_str(r.level)},
                       {"outcome", to_string(r.outcome)},
                       {"attempts", r.attempts},
                       {"started_ms", r.started_ms},
                       {"ended_ms", r.ended_ms}});
  }
  return json{{"team_id", s.team_id},
              {"stream", to_string(s.stream)},
              {"level_index", s.level_index},
              {"level", letter_str(s.letter())},
              {"stage", to_string(s.stage())},
              {"attempts", attempts},
              {"results", results},
              {"ship",
               {{"position", vec(s.ship.position)},
                {"heading", s.ship.heading ? json(s.ship.heading->radians()) : json(nullptr)},
                {"phase", to_string(s.ship.phase)}}},
              {"clock_us", s.clock_us},
              {"level_started_us", s.level_started_us},
              {"steps_in_attempt", s.steps_in_attempt},
              {"finished", s.finished}};
}

SessionState session_from_json(const json& j) {
  try {
    SessionState s;
    s.team_id = j.at("team_id").get<std::string>();
    s.stream = stream_from_string(j.at("stream").get<std::string>());
    s.level_index = j.at("level_index").get<int>();
    if (s.level_index < 0 || s.level_index > 4) throw Error(ErrorCode::ParseError, "level_index");
    for (const auto& a : j.at("attempts")) {
      AttemptRecord r;
      r.level = letter_from(a.at("level"));
      r.index = a.at("index").get<int>();
      r.heading = Angle(a.at("heading").get<double>());
      if (!a.at("outcome").is_null()) r.outcome = outcome_from_string(a.at("outcome").get<std::string>());
      r.started_ms = a.at("started_ms").get<std::int64_t>();
      r.ended_ms = a.at("ended_ms").get<std::int64_t>();
      for (const auto& p : a.at("trajectory")) r.trajectory.push_back(vec_from(p));
      s.attempts.push_back(std::move(r));
    }
    for (const auto& r : j.at("results")) {
      s.results.push_back({letter_from(r.at("level")), outcome_from_string(r.at("outcome").get<std::string>()),
                           r.at("attempts").get<int>(), r.at("started_ms").get<std::int64_t>(),
                           r.at("ended_ms").get<std::int64_t>()});
    }
    const json& ship = j.at("ship");
    s.ship.position = vec_from(ship.at("position"));
    if (!ship.at("heading").is_null()) s.ship.heading = Angle(ship.at("heading").get<double>());
    s.ship.phase = phase_from_string(ship.at("phase").get<std::string>());
    s.clock_us = j.at("clock_us").get<std::int64_t>();
    s.level_started_us = j.at("level_started_us").get<std::int64_t>();
    s.steps_in_attempt = j.at("steps_in_attempt").get<std::int64_t>();
    s.finished = j.at("finished").get<bool>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("session: ") + e.what());
  }
}

json event_to_json(const GameEvent& e) {
  return std::visit(
      [](const auto& ev) -> json {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, VelocitySet>) {
          return {{"kind", "VelocitySet"}, {"heading", ev.heading.radians()}};
        } else if constexpr (std::is_same_v<T, Launched>) {
          return {{"kind", "Launched"}, {"level", letter_str(ev.level)}, {"attempt", ev.attempt},
                  {"heading", ev.heading.radians()}};
        } else if constexpr (std::is_same_v<T, OutcomeEvent>) {
          return {{"kind", "Outcome"}, {"level", letter_str(ev.level)}, {"attempt", ev.attempt},
                  {"outcome", to_string(ev.outcome)}, {"position", vec(ev.position)}};
        } else if constexpr (std::is_same_v<T, ShipReset>) {
          return {{"kind", "Reset"}, {"level", letter_str(ev.level)}};
        } else if constexpr (std::is_same_v<T, StageEntered>) {
          return {{"kind", "StageEntered"}, {"level", letter_str(ev.level)}, {"stage", to_string(ev.stage)}};
        } else {
          return {{"kind", "SoundCue"}, {"cue", ev.kind == SoundCue::Kind::Win ? "win" : "crash"}};
        }
      },
      e);
}

// ---------------------------------------------------------------------------
// Analysis

Simulation simulate(const Level& level, Angle heading, double dt, double max_time) {
  const RiverIndex river(level);
  Simulation out;
  Vec2 pos = level.dock;
  std::int64_t clock = 0;
  const std::int64_t step_us = to_us(dt);
  const std::int64_t limit = to_us(max_time);
  const Vec2 base = heading.unit() * level.ship_speed + level.wind;
  while (true) {
    const StepResult r = advance(level, river, base, pos, dt);
    clock += step_us;
    pos = r.position;
    if (r.outcome) {
      out.outcome = *r.outcome;
      if (out.outcome == Outcome::Gold) {
        const double speed = r.velocity.magnitude();
        if (speed > 0.0) out.offset = (r.velocity / speed).cross(level.gold - pos);
      }
      break;
    }
    if (clock > limit) {
      out.outcome = Outcome::Timeout;
      break;
    }
  }
  out.position = pos;
  out.time = static_cast<double>(clock) * 1e-6;
  return out;
}

Angle solve_correct_direction(const Level& level) {
  constexpr int kGrid = 3600;
  constexpr double kStep = 2.0 * std::numbers::pi / kGrid;
  constexpr double kTol = 0.01 * std::numbers::pi / 180.0;
  const double naive = level.naive_heading().radians();
  auto run = [&](double rel) { return simulate(level, Angle(naive + rel)); };

  // Offsets relative to the naive heading, grid anchored on it.
  std::vector<Simulation> grid(kGrid);
  for (int k = 0; k < kGrid; ++k) grid[static_cast<std::size_t>(k)] = run((k - kGrid / 2) * kStep);
  auto rel_of = [&](int k) { return (k - kGrid / 2) * kStep; };
  auto is_gold = [](const Simulation& s) { return s.outcome == Outcome::Gold; };

  std::optional<double> best;
  auto consider = [&](double rel) {
    if (!best || std::abs(rel) < std::abs(*best)) best = rel;
  };
  // Nearest point of a final bracket to the naive heading.
  auto nearest_in = [](double lo, double hi) {
    if (lo <= 0.0 && 0.0 <= hi) return 0.0;
    return std::abs(lo) < std::abs(hi) ? lo : hi;
  };

  bool any_gold = false;
  for (int k = 0; k < kGrid; ++k) {
    const Simulation& s = grid[static_cast<std::size_t>(k)];
    if (!is_gold(s)) continue;
    any_gold = true;
    if (s.offset == 0.0) consider(rel_of(k));
    if (k + 1 >= kGrid) continue;
    const Simulation& t = grid[static_cast<std::size_t>(k + 1)];
    if (!is_gold(t) || (s.offset > 0.0) == (t.offset > 0.0)) continue;
    // Bisect the sign change of the center offset.
    double lo = rel_of(k), hi = rel_of(k + 1);
    const bool lo_positive = s.offset > 0.0;
    bool ok = true;
    while (hi - lo > kTol) {
      const double mid = 0.5 * (lo + hi);
      const Simulation m = run(mid);
      if (!is_gold(m)) {
        ok = false;
        break;
      }
      if ((m.offset > 0.0) == lo_positive) lo = mid; else hi = mid;
    }
    if (ok) consider(nearest_in(lo, hi));
  }
  if (!any_gold) throw Error(ErrorCode::Unsolvable, std::string(1, level.letter));
  if (!best) {
    // No center crossing found: fall back to the Gold boundary nearest naive.
    for (int k = 0; k < kGrid; ++k) {
      if (!is_gold(grid[static_cast<std::size_t>(k)])) continue;
      double gold = rel_of(k);
      const int toward = rel_of(k) > 0.0 ? k - 1 : k + 1;
      if (toward >= 0 && toward < kGrid && !is_gold(grid[static_cast<std::size_t>(toward)])) {
        double miss = rel_of(toward);
        while (std::abs(gold - miss) > kTol) {
          const double mid = 0.5 * (gold + miss);
          if (is_gold(run(mid))) gold = mid; else miss = mid;
        }
      }
      consider(gold);
    }
  }
  return Angle(naive + *best);
}

double level_complexity(const Level& level) {
  return angular_distance(solve_correct_direction(level), level.naive_heading());
}

}  // namespace riverpilot::game

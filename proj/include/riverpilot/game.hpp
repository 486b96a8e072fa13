#pragma once

#include "riverpilot/geometry.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace riverpilot::game {

enum class Stream { Stream1, Stream2 };
enum class Stage { Enactive, EnactiveIconic, Iconic };

/// Fixed integration step, seconds.
inline constexpr double kDt = 0.01;
inline constexpr double kTimeLimit = 480.0;
/// Dock must lie within this distance of its own bank.
inline constexpr double kShoreZone = 60.0;

std::string_view to_string(Stream s);
std::string_view to_string(Stage s);
Stream stream_from_string(std::string_view s);
Stage stage_from_string(std::string_view s);

/// Letters of each stream in play order.
const std::array<char, 5>& stream_letters(Stream s);
Stream stream_of(char letter);
Stage stage_of(char letter);

/// Presentation flags per stage. The webui derives all layer toggles from this.
struct StageFlags {
  bool animations = false;  // leaves and waves
  bool arrows = false;      // wind, current and velocity arrows
  bool finish_mark = false; // replaces the gold
  bool sounds = false;      // win and crash cues
  bool canvas = false;      // virtual canvas available
  bool operator==(const StageFlags&) const = default;
};
StageFlags stage_flags(Stage s);

struct Level {
  char letter = 'A';
  Stream stream = Stream::Stream1;
  Vec2 dock;
  Vec2 gold;
  double gold_radius = 35.0;
  std::array<std::vector<Vec2>, 2> banks;
  /// banks[0] followed by banks[1] reversed. Kept in sync by close_river().
  std::vector<Vec2> river;
  Vec2 current;  // mm/s inside the river
  Vec2 wind;     // mm/s everywhere
  double ship_speed = 30.0;
  Stage stage = Stage::Enactive;
  double time_limit = kTimeLimit;

  void close_river();
  Angle naive_heading() const { return Angle::of(gold - dock); }
};

struct Map {
  double width = 1189.0;
  double height = 841.0;
  std::vector<Level> levels;
};

/// Throws ParseError for malformed JSON or missing fields, InvariantViolation
/// with the offending field path otherwise.
Map parse_map(const nlohmann::json& j);
Map load_map(const std::filesystem::path& path);
std::vector<Level> load_levels(const std::filesystem::path& path);
/// Path of the bundled maps/default.json.
std::filesystem::path default_map_path();

void validate_level(const Level& level, const Map& map, const std::string& path);

nlohmann::json level_to_json(const Level& level);
nlohmann::json map_to_json(const Map& map);

Vec2 total_velocity(const Level& level, Angle heading, Vec2 pos);

namespace detail {
class RiverIndex;
}

// ---------------------------------------------------------------------------
// Session

enum class Phase { Docked, Sailing, Crashed, ReachedGold, TimedOut };
enum class Outcome { Gold, Crash, Timeout, Reset };

std::string_view to_string(Phase p);
std::string_view to_string(Outcome o);
Phase phase_from_string(std::string_view s);
Outcome outcome_from_string(std::string_view s);

struct ShipState {
  Vec2 position;
  std::optional<Angle> heading;  // unset until set_velocity in this attempt
  Phase phase = Phase::Docked;
};

struct AttemptRecord {
  char level = 'A';
  int index = 1;  // 1-based within the level
  Angle heading;
  std::optional<Outcome> outcome;
  std::int64_t started_ms = 0;
  std::int64_t ended_ms = 0;
  std::vector<Vec2> trajectory;  // every kSampleStride steps plus endpoints
};

struct LevelResult {
  char level = 'A';
  Outcome outcome = Outcome::Gold;  // Gold or Timeout
  int attempts = 0;
  std::int64_t started_ms = 0;
  std::int64_t ended_ms = 0;
};

struct SessionState {
  std::string team_id;
  Stream stream = Stream::Stream1;
  int level_index = 0;
  std::vector<AttemptRecord> attempts;
  std::vector<LevelResult> results;
  ShipState ship;
  std::int64_t clock_us = 0;
  std::int64_t level_started_us = 0;
  std::int64_t steps_in_attempt = 0;
  bool finished = false;

  std::int64_t clock_ms() const { return clock_us / 1000; }
  char letter() const;
  Stage stage() const { return stage_of(letter()); }
  /// Closed attempts on the given level.
  int closed_attempts(char letter) const;
};

nlohmann::json to_json(const SessionState& s);
SessionState session_from_json(const nlohmann::json& j);

// Domain events produced by session operations.
struct VelocitySet { Angle heading; };
struct Launched { char level; int attempt; Angle heading; };
struct OutcomeEvent { char level; int attempt; Outcome outcome; Vec2 position; };  // attempt 0: timer ran out while docked
struct ShipReset { char level; };
struct StageEntered { char level; Stage stage; };
struct SoundCue { enum class Kind { Win, Crash } kind; };
using GameEvent = std::variant<VelocitySet, Launched, OutcomeEvent, ShipReset, StageEntered, SoundCue>;

nlohmann::json event_to_json(const GameEvent& e);

inline constexpr int kSampleStride = 10;

/// One team's game. Operations validate the phase, mutate the state and
/// queue domain events, which the caller drains.
class Session {
 public:
  Session(std::shared_ptr<const std::vector<Level>> levels, std::string team_id, Stream stream);
  /// Resumes from a snapshot; no events are queued.
  Session(std::shared_ptr<const std::vector<Level>> levels, SessionState state);

  const SessionState& state() const { return state_; }
  const Level& level() const;
  const std::vector<Level>& levels() const { return *levels_; }

  void set_velocity(Angle heading);
  void launch();
  /// One explicit Euler step of dt seconds. May close the attempt.
  void step(double dt = kDt);
  void reset();
  /// Lets time pass while not sailing; the level may time out.
  void wait(double seconds);
  /// Steps until the attempt closes or the ship stops sailing. Returns steps taken.
  std::int64_t sail_to_end(double dt = kDt);

  std::vector<GameEvent> drain_events();

 private:
  void enter_level(int index);
  void advance_level(Outcome outcome);
  void check_timeout();
  void require_active() const;

  std::shared_ptr<const std::vector<Level>> levels_;
  std::vector<int> order_;  // indices into levels_ for this stream
  std::vector<std::shared_ptr<const detail::RiverIndex>> rivers_;  // per stream level
  SessionState state_;
  std::vector<GameEvent> events_;
};

/// Level index sequence of a stream within a level list.
std::vector<int> stream_order(const std::vector<Level>& levels, Stream stream);

// ---------------------------------------------------------------------------
// Analysis

struct Simulation {
  Outcome outcome = Outcome::Timeout;
  Vec2 position;
  double time = 0.0;
  /// On Gold: signed offset of the gold center from the line of travel at
  /// entry. Zero when the run is aimed through the center.
  double offset = 0.0;
};

/// Runs one attempt from the dock with the session stepping rules.
Simulation simulate(const Level& level, Angle heading, double dt = kDt,
                    double max_time = kTimeLimit);

/// Gold-reaching heading through the gold center nearest the naive heading.
/// Throws Unsolvable when no grid heading reaches the gold.
Angle solve_correct_direction(const Level& level);
double level_complexity(const Level& level);

}  // namespace riverpilot::game

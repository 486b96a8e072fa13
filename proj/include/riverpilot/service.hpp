#pragma once

#include "riverpilot/assessment.hpp"
#include "riverpilot/canvas.hpp"
#include "riverpilot/error.hpp"
#include "riverpilot/game.hpp"
#include "riverpilot/metrics.hpp"
#include "riverpilot/random.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace riverpilot::service {

inline constexpr int kProtocolVersion = 1;

enum class ClockMode { Realtime, Accelerated, Manual };
std::string_view to_string(ClockMode m);
ClockMode clock_mode_from_string(std::string_view s);

struct SessionConfig {
  std::string team_id = "team";
  game::Stream stream = game::Stream::Stream1;
  std::filesystem::path map_path;  // empty: bundled map
  std::optional<std::uint64_t> seed;
  double robot_sigma_xy = 0.5;         // mm
  double robot_sigma_theta_deg = 0.5;  // degrees
  ClockMode clock = ClockMode::Manual;
  double acceleration = 1.0;
  // Cohort metadata carried into the log for analytics.
  int year = 0;
  std::string group = "human";

  /// Throws ConfigError: seed missing, acceleration below 1, negative noise.
  void validate() const;
  std::string session_id() const;
};

nlohmann::json to_json(const SessionConfig& c);
/// Fields absent from `j` keep the values of `base`.
SessionConfig config_from_json(const nlohmann::json& j, SessionConfig base = {});

/// One log line.
struct Event {
  std::int64_t seq = 0;
  std::int64_t ms = 0;
  std::string session;
  std::string kind;
  bool derived = false;  // consequence of the preceding driver event
  nlohmann::json payload;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Hex SHA-256 of the compact serialization. nlohmann objects keep keys
/// sorted, so the dump is canonical.
std::string sha256_hex(const std::string& bytes);
std::string snapshot_hash(const nlohmann::json& snapshot);

/// Append-only JSONL writer; every line is flushed before append returns.
class EventLog {
 public:
  /// Truncates unless `append` is set.
  explicit EventLog(const std::filesystem::path& path, bool append = false);
  void append(const Event& e);
  /// Writes a driver and its consequences with one flush.
  void append(const std::vector<Event>& group);
  /// Final line carrying the snapshot hash.
  void close(std::int64_t last_seq, const std::string& hash);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string log_file_name(const SessionConfig& c);

/// Camera-visible sheets laid out on one table plane, table frame in mm.
struct SheetLayout {
  struct Rect { double x, y, w, h; };
  Rect activity{0, 0, 1189, 841};     // A0 river map
  Rect velocity{1339, 0, 420, 297};   // A3 velocity-setting sheet
};

/// Frustum test through the pinhole model: the sheet hit by the optical
/// axis wins; otherwise the sheet with more sampled points in frame.
analytics::VisibleSheet visible_sheet(const Pose3D& tablet, const CameraIntrinsics& k = {},
                                      const SheetLayout& layout = {}, int width = 1280, int height = 800);

struct RobotPose {
  Vec2 position;
  double theta = 0.0;  // radians
};

/// What a protocol message asks for, before it touches the session.
struct Command {
  std::string kind;  // driver event kind
  nlohmann::json payload;
};

/// Validates a client message. Throws SchemaError with the offending path.
/// `hello` and `get_state` have no command and return nullopt.
std::optional<Command> parse_message(const nlohmann::json& msg);

/// One team's game plus its canvas, tests and telemetry. Every state change
/// goes to the log (when attached) before the call returns.
class ServiceSession {
 public:
  /// Records SessionStarted and the first stage. A null bank loads the bundled one.
  ServiceSession(SessionConfig config, std::shared_ptr<const game::Map> map, std::unique_ptr<EventLog> log = nullptr,
                 std::shared_ptr<const assessment::ItemBank> bank = nullptr);

  const SessionConfig& config() const { return config_; }
  const game::Session& game() const { return game_; }
  const game::Map& map() const { return *map_; }
  std::int64_t last_seq() const { return seq_; }
  /// Events recorded by the constructor.
  const std::vector<Event>& opening_events() const { return opening_; }

  /// Handles one protocol message; returns the events it recorded.
  /// Throws SchemaError or IllegalInState; nothing is recorded then.
  std::vector<Event> handle_message(const nlohmann::json& msg);
  /// Applies a driver command and records driver plus consequences.
  std::vector<Event> apply(const Command& cmd);

  /// Truth plus seeded Gaussian noise, recorded as a RobotPose event.
  RobotPose inject_localization(const RobotPose& truth);

  nlohmann::json snapshot() const;
  std::string hash() const { return snapshot_hash(snapshot()); }
  /// Writes the hash trailer and detaches the log.
  void close();
  void attach_log(std::unique_ptr<EventLog> log) { log_ = std::move(log); }

  // Telemetry and test state, for reports.
  const std::vector<analytics::PoseSample>& pose_samples() const { return poses_; }
  const std::vector<analytics::RobotEvent>& robot_events() const { return robot_events_; }
  const std::vector<std::optional<assessment::DrawnAnswer>>& pre_answers() const { return pre_; }
  const std::vector<std::optional<assessment::DrawnAnswer>>& post_answers() const { return post_; }
  const std::vector<std::optional<int>>& mcq_answers() const { return mcq_; }
  const std::map<char, canvas::Canvas>& canvases() const { return canvases_; }
  double pre_score() const;
  double post_score() const;
  double mcq_score() const;

  /// Items the post-test presents: the pre-test items mirrored.
  const std::vector<assessment::TestItem>& pre_items() const { return bank_->items; }
  const std::vector<assessment::TestItem>& post_items() const { return post_items_; }
  const assessment::ItemBank& bank() const { return *bank_; }

 private:
  struct Pending {
    std::string kind;
    bool derived;
    nlohmann::json payload;
  };

  std::vector<Pending> run(const Command& cmd);
  std::vector<Event> commit(std::vector<Pending> pending);
  void enter_stage_extras(char letter, std::vector<Pending>& out);
  void sync_canvas(std::vector<Pending>& out);
  void translate_game_events(std::vector<Pending>& out);
  [[noreturn]] void illegal(const std::string& what) const;

  SessionConfig config_;
  std::shared_ptr<const game::Map> map_;
  std::shared_ptr<const assessment::ItemBank> bank_;
  std::vector<assessment::TestItem> post_items_;
  game::Session game_;
  std::unique_ptr<EventLog> log_;
  Rng noise_;
  std::int64_t seq_ = 0;
  std::vector<Event> opening_;

  std::map<char, canvas::Canvas> canvases_;
  std::vector<std::optional<assessment::DrawnAnswer>> pre_, post_;
  std::vector<std::optional<int>> mcq_;
  std::vector<analytics::PoseSample> poses_;
  std::vector<analytics::RobotEvent> robot_events_;
  std::optional<RobotPose> robot_pose_;
  bool robot_on_sheet_ = false;
  bool robot_grabbed_ = false;
};

struct ReplayResult {
  std::unique_ptr<ServiceSession> session;
  std::string hash;
  bool verified = false;  // the log carried a trailer and it matched
  std::int64_t last_seq = 0;
  /// Bytes of complete event lines, trailer excluded.
  std::uintmax_t valid_bytes = 0;
  /// Consequences of the last driver that the log lost when its writer died.
  std::vector<Event> missing;
};

/// Rebuilds a session from its log, re-executing every driver event and
/// checking each recorded consequence. A log without a trailer (the writer
/// died) replays up to its last complete line. Throws GapInLog,
/// SnapshotMismatch or ParseError.
ReplayResult replay(const std::filesystem::path& log_path);

/// Replays the log and reopens it for appending.
std::unique_ptr<ServiceSession> recover(const std::filesystem::path& log_path);

/// Loads the configured map (bundled when the path is empty).
std::shared_ptr<const game::Map> load_map_for(const SessionConfig& c);
std::shared_ptr<const assessment::ItemBank> bundled_bank();

nlohmann::json error_message(ErrorCode code, const std::string& detail);
nlohmann::json event_message(const Event& e);
nlohmann::json snapshot_message(const ServiceSession& s);
nlohmann::json hello_message(const ServiceSession& s);

}  // namespace riverpilot::service

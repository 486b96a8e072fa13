#include "riverpilot/service.hpp"

#include "riverpilot/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <mutex>
#include <numbers>
#include <sstream>

namespace riverpilot::service {

using json = nlohmann::json;

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

json vec(Vec2 p) { return json::array({p.x, p.y}); }

Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(ClockMode m) {
  switch (m) {
    case ClockMode::Realtime: return "realtime";
    case ClockMode::Accelerated: return "accelerated";
    case ClockMode::Manual: return "manual";
  }
  return "manual";
}

ClockMode clock_mode_from_string(std::string_view s) {
  if (s == "realtime") return ClockMode::Realtime;
  if (s == "accelerated") return ClockMode::Accelerated;
  if (s == "manual") return ClockMode::Manual;
  throw Error(ErrorCode::ConfigError, "clock: " + std::string(s));
}

void SessionConfig::validate() const {
  if (!seed) throw Error(ErrorCode::ConfigError, "seed");
  if (team_id.empty() || team_id.find_first_of("/\\") != std::string::npos) {
    throw Error(ErrorCode::ConfigError, "team_id");
  }
  if (!(acceleration >= 1.0) || !std::isfinite(acceleration)) throw Error(ErrorCode::ConfigError, "acceleration");
  if (!(robot_sigma_xy >= 0.0)) throw Error(ErrorCode::ConfigError, "robot_sigma_xy");
  if (!(robot_sigma_theta_deg >= 0.0)) throw Error(ErrorCode::ConfigError, "robot_sigma_theta_deg");
}

std::string SessionConfig::session_id() const {
  return team_id + "_" + std::string(game::to_string(stream)) + "_" + (seed ? std::to_string(*seed) : "none");
}

json to_json(const SessionConfig& c) {
  json j{{"team_id", c.team_id},
         {"stream", game::to_string(c.stream)},
         {"map_path", c.map_path.generic_string()},
         {"robot_sigma_xy", c.robot_sigma_xy},
         {"robot_sigma_theta_deg", c.robot_sigma_theta_deg},
         {"clock", to_string(c.clock)},
         {"acceleration", c.acceleration},
         {"year", c.year},
         {"group", c.group}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

SessionConfig config_from_json(const json& j, SessionConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be an object");
  static const std::vector<std::string> known{"team_id", "stream", "map_path", "seed", "robot_sigma_xy",
                                              "robot_sigma_theta_deg", "clock", "acceleration", "year", "group"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw Error(ErrorCode::ConfigError, key);
  }
  std::string field;
  try {
    if (j.contains(field = "team_id")) c.team_id = j.at(field).get<std::string>();
    if (j.contains(field = "stream")) c.stream = game::stream_from_string(j.at(field).get<std::string>());
    if (j.contains(field = "map_path")) c.map_path = j.at(field).get<std::string>();
    if (j.contains(field = "seed")) {
      if (j.at(field).is_null()) {
        c.seed.reset();
      } else {
        c.seed = j.at(field).get<std::uint64_t>();
      }
    }
    if (j.contains(field = "robot_sigma_xy")) c.robot_sigma_xy = j.at(field).get<double>();
    if (j.contains(field = "robot_sigma_theta_deg")) c.robot_sigma_theta_deg = j.at(field).get<double>();
    if (j.contains(field = "clock")) c.clock = clock_mode_from_string(j.at(field).get<std::string>());
    if (j.contains(field = "acceleration")) c.acceleration = j.at(field).get<double>();
    if (j.contains(field = "year")) c.year = j.at(field).get<int>();
    if (j.contains(field = "group")) c.group = j.at(field).get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ConfigError, field);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, field);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Events and log

json to_json(const Event& e) {
  return {{"seq", e.seq},   {"ms", e.ms},           {"session", e.session},
          {"kind", e.kind}, {"derived", e.derived}, {"payload", e.payload}};
}

Event event_from_json(const json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::int64_t>();
    e.ms = j.at("ms").get<std::int64_t>();
    e.session = j.at("session").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.derived = j.at("derived").get<bool>();
    e.payload = j.at("payload");
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("EVP_Digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string snapshot_hash(const json& snapshot) { return sha256_hex(snapshot.dump()); }

EventLog::EventLog(const std::filesystem::path& path, bool append)
    : path_(path), out_(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary) {
  if (!out_) throw Error(ErrorCode::ConfigError, "cannot open log " + path.string());
}

void EventLog::append(const Event& e) { append(std::vector<Event>{e}); }

void EventLog::append(const std::vector<Event>& group) {
  std::string buf;
  for (const auto& e : group) {
    buf += to_json(e).dump();
    buf += '\n';
  }
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out_.flush();
  if (!out_) throw Error(ErrorCode::ConfigError, "log write failed: " + path_.string());
}

void EventLog::close(std::int64_t last_seq, const std::string& hash) {
  const json trailer{{"kind", "SnapshotHash"}, {"seq", last_seq}, {"sha256", hash}};
  out_ << trailer.dump() << '\n';
  out_.flush();
  out_.close();
}

std::string log_file_name(const SessionConfig& c) { return c.session_id() + ".jsonl"; }

// ---------------------------------------------------------------------------
// Localization

analytics::VisibleSheet visible_sheet(const Pose3D& tablet, const CameraIntrinsics& k, const SheetLayout& layout,
                                      int width, int height) {
  using analytics::VisibleSheet;
  const auto inside = [](const SheetLayout::Rect& r, Vec2 p) {
    return p.x >= r.x && p.x <= r.x + r.w && p.y >= r.y && p.y <= r.y + r.h;
  };
  const Eigen::Vector3d c = tablet.camera_center();
  const Eigen::Vector3d axis = tablet.rotation.transpose() * Eigen::Vector3d::UnitZ();
  if (std::abs(axis.z()) > 1e-12) {
    const double s = -c.z() / axis.z();
    if (s > 0) {
      const Eigen::Vector3d hit = c + s * axis;
      const Vec2 p{hit.x(), hit.y()};
      if (inside(layout.activity, p)) return VisibleSheet::ActivitySheet;
      if (inside(layout.velocity, p)) return VisibleSheet::VelocitySheet;
    }
  }
  const auto in_frame = [&](const SheetLayout::Rect& r) {
    constexpr int n = 9;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Vec2 p{r.x + r.w * i / (n - 1), r.y + r.h * j / (n - 1)};
        const auto q = project(tablet, k, p);
        if (q && q->x >= 0 && q->x < width && q->y >= 0 && q->y < height) ++count;
      }
    }
    return count;
  };
  const int a = in_frame(layout.activity);
  const int v = in_frame(layout.velocity);
  if (a == 0 && v == 0) return VisibleSheet::None;
  return a >= v ? VisibleSheet::ActivitySheet : VisibleSheet::VelocitySheet;
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

[[noreturn]] void schema(const std::string& path) { throw Error(ErrorCode::SchemaError, path); }

const json& field(const json& msg, const std::string& name) {
  if (!msg.contains(name)) schema(name);
  return msg.at(name);
}

double number(const json& msg, const std::string& name) {
  const json& v = field(msg, name);
  if (!v.is_number()) schema(name);
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema(name);
  return d;
}

std::int64_t integer(const json& msg, const std::string& name, std::int64_t lo, std::int64_t hi) {
  const json& v = field(msg, name);
  if (!v.is_number_integer()) schema(name);
  const auto i = v.get<std::int64_t>();
  if (i < lo || i > hi) schema(name);
  return i;
}

std::string text(const json& msg, const std::string& name) {
  const json& v = field(msg, name);
  if (!v.is_string()) schema(name);
  return v.get<std::string>();
}

json number_array(const json& msg, const std::string& name, std::size_t n) {
  const json& v = field(msg, name);
  if (!v.is_array() || v.size() != n) schema(name);
  json out = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) schema(name + "/" + std::to_string(i));
    out.push_back(v[i].get<double>());
  }
  return out;
}

json segment(const json& msg, const std::string& name) {
  const json& v = field(msg, name);
  if (v.is_null()) return nullptr;
  if (!v.is_object()) schema(name);
  return {{"start", number_array(v, "start", 2)}, {"end", number_array(v, "end", 2)}};
}

}  // namespace

std::optional<Command> parse_message(const json& msg) {
  if (!msg.is_object()) schema("");
  const std::string type = text(msg, "type");
  if (type == "hello") {
    if (msg.contains("version") && integer(msg, "version", 0, 1 << 30) != kProtocolVersion) schema("version");
    return std::nullopt;
  }
  if (type == "get_state") return std::nullopt;
  if (type == "set_velocity") return Command{"VelocitySet", {{"heading", number(msg, "heading_deg") * kDegree}}};
  if (type == "launch") return Command{"Launched", json::object()};
  if (type == "step") return Command{"Stepped", {{"steps", integer(msg, "steps", 1, 1'000'000)}}};
  if (type == "wait") {
    const double s = number(msg, "seconds");
    if (s < 0) schema("seconds");
    return Command{"Waited", {{"seconds", s}}};
  }
  if (type == "reset") return Command{"Reset", json::object()};
  if (type == "canvas_move") {
    const std::string end = text(msg, "end");
    if (end != "start" && end != "end") schema("end");
    return Command{"EndpointMoved",
                   {{"id", integer(msg, "id", 1, 1 << 20)},
                    {"which", end},
                    {"target", json::array({number(msg, "x"), number(msg, "y")})}}};
  }
  if (type == "test_response") {
    const std::string test = text(msg, "test");
    if (test != "pre" && test != "post") schema("test");
    return Command{"TestResponse",
                   {{"test", test}, {"item", integer(msg, "item", 1, assessment::kTestItems)}, {"answer", segment(msg, "answer")}}};
  }
  if (type == "mcq_response") {
    const json& option = field(msg, "option");
    json opt = nullptr;
    if (!option.is_null()) opt = integer(msg, "option", 0, 1 << 20);
    return Command{"McqResponse", {{"item", integer(msg, "item", 1, assessment::kMcqItems)}, {"option", opt}}};
  }
  if (type == "pose_sample") {
    return Command{"PoseSample",
                   {{"ms", integer(msg, "ms", 0, std::int64_t{1} << 50)},
                    {"rpy", number_array(msg, "rpy", 3)},
                    {"translation", number_array(msg, "translation", 3)}}};
  }
  if (type == "robot") {
    const std::string ev = text(msg, "event");
    if (ev == "grabbed") return Command{"RobotGrabbed", json::object()};
    if (ev == "released") return Command{"RobotReleased", json::object()};
    if (ev == "on_sheet") return Command{"RobotOnSheet", json::object()};
    if (ev == "off_sheet") return Command{"RobotOffSheet", json::object()};
    schema("event");
  }
  if (type == "robot_pose") {
    return Command{"RobotPose", {{"x", number(msg, "x")}, {"y", number(msg, "y")}, {"theta", number(msg, "theta")}}};
  }
  schema("type");
}

// ---------------------------------------------------------------------------
// Session

namespace {

std::shared_ptr<const std::vector<game::Level>> levels_of(const std::shared_ptr<const game::Map>& map) {
  return {map, &map->levels};
}

const SessionConfig& validated(const SessionConfig& c) {
  c.validate();
  return c;
}

const game::Level& level_by_letter(const game::Map& map, char letter) {
  for (const auto& lv : map.levels) {
    if (lv.letter == letter) return lv;
  }
  throw Error(ErrorCode::InvariantViolation, std::string("no level ") + letter);
}

json strip_kind(json j, std::string& kind) {
  kind = j.at("kind").get<std::string>();
  j.erase("kind");
  return j;
}

json pose_json(const RobotPose& p) { return {{"x", p.position.x}, {"y", p.position.y}, {"theta", p.theta}}; }

json answer_json(const std::optional<assessment::DrawnAnswer>& a) {
  if (!a) return nullptr;
  return {{"start", vec(a->start)}, {"end", vec(a->end)}};
}

}  // namespace

std::shared_ptr<const assessment::ItemBank> bundled_bank() {
  static const auto bank = std::make_shared<const assessment::ItemBank>(assessment::load_bank(assessment::default_bank_path()));
  return bank;
}

std::shared_ptr<const game::Map> load_map_for(const SessionConfig& c) {
  const auto path = c.map_path.empty() ? game::default_map_path() : c.map_path;
  return std::make_shared<const game::Map>(game::load_map(path));
}

ServiceSession::ServiceSession(SessionConfig config, std::shared_ptr<const game::Map> map, std::unique_ptr<EventLog> log,
                               std::shared_ptr<const assessment::ItemBank> bank)
    : config_(validated(config)),
      map_(std::move(map)),
      bank_(bank ? std::move(bank) : bundled_bank()),
      game_(levels_of(map_), config_.team_id, config_.stream),
      log_(std::move(log)),
      noise_(*config_.seed) {
  assessment::validate_bank(*bank_);
  for (const auto& item : bank_->items) post_items_.push_back(assessment::mirror_item(item));
  pre_.assign(bank_->items.size(), std::nullopt);
  post_.assign(post_items_.size(), std::nullopt);
  mcq_.assign(bank_->mcq.size(), std::nullopt);
  std::vector<Pending> out;
  out.push_back({"SessionStarted",
                 false,
                 {{"protocol", kProtocolVersion},
                  {"config", to_json(config_)},
                  {"map", game::map_to_json(*map_)},
                  {"bank", assessment::to_json(*bank_)}}});
  translate_game_events(out);
  opening_ = commit(std::move(out));
}

void ServiceSession::illegal(const std::string& what) const { throw Error(ErrorCode::IllegalInState, what); }

void ServiceSession::translate_game_events(std::vector<Pending>& out) {
  for (const auto& ev : game_.drain_events()) {
    std::string kind;
    json payload = strip_kind(game::event_to_json(ev), kind);
    const bool folded = (kind == "VelocitySet" || kind == "Launched" || kind == "Reset");
    if (folded && !out.empty() && out.front().kind == kind) {
      for (auto& [k, v] : payload.items()) out.front().payload[k] = v;
      continue;
    }
    out.push_back({kind, true, payload});
    if (kind == "StageEntered") enter_stage_extras(payload.at("level").get<std::string>().at(0), out);
  }
}

void ServiceSession::enter_stage_extras(char letter, std::vector<Pending>&) {
  const auto& lv = level_by_letter(*map_, letter);
  if (!game::stage_flags(lv.stage).canvas || canvases_.count(letter)) return;
  canvases_.emplace(letter, canvas::make_canvas(lv, lv.naive_heading()));
}

void ServiceSession::sync_canvas(std::vector<Pending>& out) {
  const auto& st = game_.state();
  auto it = canvases_.find(st.letter());
  if (it == canvases_.end() || !st.ship.heading) return;
  canvas::Canvas& c = it->second;
  for (auto& v : c.vectors) {
    if (v.role != canvas::Role::ShipVelocity) continue;
    v.end = v.start + st.ship.heading->unit() * v.delta().magnitude();
  }
  const canvas::SnapGraph before = c.graph;
  c.graph = canvas::derive_graph(c.vectors);
  std::vector<canvas::Connection> gone, added;
  std::set_difference(before.connections.begin(), before.connections.end(), c.graph.connections.begin(),
                      c.graph.connections.end(), std::back_inserter(gone));
  std::set_difference(c.graph.connections.begin(), c.graph.connections.end(), before.connections.begin(),
                      before.connections.end(), std::back_inserter(added));
  std::string kind;
  for (const auto& k : gone) {
    json p = strip_kind(canvas::event_to_json(canvas::Unsnapped{k}), kind);
    out.push_back({kind, true, p});
  }
  for (const auto& k : added) {
    json p = strip_kind(canvas::event_to_json(canvas::Snapped{k}), kind);
    out.push_back({kind, true, p});
  }
}

std::vector<ServiceSession::Pending> ServiceSession::run(const Command& cmd) {
  const json& in = cmd.payload;
  const auto& st = game_.state();
  const auto phase_name = [&] { return st.finished ? std::string("Finished") : std::string(game::to_string(st.ship.phase)); };
  std::vector<Pending> out;
  const auto game_op = [&](auto&& op) {
    try {
      op();
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::NotDocked:
        case ErrorCode::NotSailing:
        case ErrorCode::NotCrashed:
        case ErrorCode::HeadingUnset:
        case ErrorCode::SessionFinished: illegal(phase_name());
        default: throw;
      }
    }
  };
  try {
    const std::string& k = cmd.kind;
    if (k == "VelocitySet") {
      const double heading = in.at("heading").get<double>();
      out.push_back({k, false, {{"heading", heading}}});
      game_op([&] { game_.set_velocity(Angle(heading)); });
      translate_game_events(out);
      sync_canvas(out);
    } else if (k == "Launched") {
      out.push_back({k, false, json::object()});
      game_op([&] { game_.launch(); });
      translate_game_events(out);
    } else if (k == "Stepped") {
      const auto steps = in.at("steps").get<std::int64_t>();
      if (steps < 1) schema("steps");
      std::int64_t taken = 0;
      game_op([&] { game_.step(); });
      ++taken;
      while (taken < steps && !st.finished && st.ship.phase == game::Phase::Sailing) {
        game_.step();
        ++taken;
      }
      out.push_back({k,
                     false,
                     {{"steps", steps}, {"taken", taken}, {"position", vec(st.ship.position)}, {"phase", game::to_string(st.ship.phase)}}});
      translate_game_events(out);
    } else if (k == "Waited") {
      const double seconds = in.at("seconds").get<double>();
      if (!(seconds >= 0.0) || !std::isfinite(seconds)) schema("seconds");
      out.push_back({k, false, {{"seconds", seconds}}});
      game_op([&] { game_.wait(seconds); });
      translate_game_events(out);
    } else if (k == "Reset") {
      out.push_back({k, false, json::object()});
      game_op([&] { game_.reset(); });
      translate_game_events(out);
    } else if (k == "EndpointMoved") {
      const auto id = in.at("id").get<int>();
      const auto which = canvas::end_from_string(in.at("which").get<std::string>());
      const Vec2 target = vec_from(in.at("target"));
      if (st.finished) illegal(phase_name());
      auto it = canvases_.find(st.letter());
      if (it == canvases_.end()) illegal("NoCanvas");
      if (!it->second.find(id)) schema("id");
      json driver{{"id", id}, {"which", canvas::to_string(which)}, {"target", vec(target)}};
      std::vector<Pending> rest;
      for (const auto& ev : canvas::move_endpoint(it->second, id, which, target)) {
        std::string kind;
        json p = strip_kind(canvas::event_to_json(ev), kind);
        if (kind == "EndpointMoved") {
          driver["start"] = p.at("start");
          driver["end"] = p.at("end");
        } else {
          rest.push_back({kind, true, p});
        }
      }
      out.push_back({k, false, driver});
      out.insert(out.end(), rest.begin(), rest.end());
    } else if (k == "TestResponse") {
      const std::string test = in.at("test").get<std::string>();
      const int item = in.at("item").get<int>();
      const bool pre = test == "pre";
      if (!pre && test != "post") schema("test");
      if (pre && !st.attempts.empty()) illegal("PreTestClosed");
      if (!pre && !st.finished) illegal("PostTestNotOpen");
      auto& answers = pre ? pre_ : post_;
      const auto& items = pre ? bank_->items : post_items_;
      if (item < 1 || item > static_cast<int>(items.size())) schema("item");
      std::optional<assessment::DrawnAnswer> answer;
      if (!in.at("answer").is_null()) {
        answer = assessment::DrawnAnswer{vec_from(in.at("answer").at("start")), vec_from(in.at("answer").at("end"))};
      }
      answers[static_cast<std::size_t>(item - 1)] = answer;
      const json score = answer ? json(assessment::score_item(*answer, items[static_cast<std::size_t>(item - 1)])) : json(nullptr);
      out.push_back({k, false, {{"test", test}, {"item", item}, {"answer", answer_json(answer)}, {"score", score}}});
    } else if (k == "McqResponse") {
      const int item = in.at("item").get<int>();
      if (!st.finished) illegal("PostTestNotOpen");
      if (item < 1 || item > static_cast<int>(bank_->mcq.size())) schema("item");
      const auto& q = bank_->mcq[static_cast<std::size_t>(item - 1)];
      std::optional<int> option;
      if (!in.at("option").is_null()) option = in.at("option").get<int>();
      if (option && (*option < 0 || *option >= static_cast<int>(q.options.size()))) schema("option");
      mcq_[static_cast<std::size_t>(item - 1)] = option;
      out.push_back({k,
                     false,
                     {{"item", item},
                      {"option", option ? json(*option) : json(nullptr)},
                      {"correct", option && *option == q.correct}}});
    } else if (k == "PoseSample") {
      const auto ms = in.at("ms").get<std::int64_t>();
      const std::array<double, 3> rpy{in.at("rpy").at(0).get<double>(), in.at("rpy").at(1).get<double>(),
                                      in.at("rpy").at(2).get<double>()};
      analytics::PoseSample s;
      s.ms = ms;
      s.pose.rotation = from_euler_angles(rpy);
      s.pose.translation = {in.at("translation").at(0).get<double>(), in.at("translation").at(1).get<double>(),
                            in.at("translation").at(2).get<double>()};
      s.sheet = visible_sheet(s.pose);
      poses_.push_back(s);
      out.push_back({k,
                     false,
                     {{"ms", ms},
                      {"rpy", json::array({rpy[0], rpy[1], rpy[2]})},
                      {"translation", json::array({s.pose.translation.x(), s.pose.translation.y(), s.pose.translation.z()})},
                      {"sheet", analytics::to_string(s.sheet)}}});
    } else if (k == "RobotPose") {
      const RobotPose truth{{in.at("x").get<double>(), in.at("y").get<double>()}, in.at("theta").get<double>()};
      RobotPose measured = truth;
      if (config_.robot_sigma_xy > 0) {
        measured.position.x += noise_.normal(0, config_.robot_sigma_xy);
        measured.position.y += noise_.normal(0, config_.robot_sigma_xy);
      }
      if (config_.robot_sigma_theta_deg > 0) measured.theta += noise_.normal(0, config_.robot_sigma_theta_deg * kDegree);
      robot_pose_ = measured;
      json p = pose_json(truth);
      p["measured"] = pose_json(measured);
      out.push_back({k, false, p});
    } else if (k == "RobotGrabbed" || k == "RobotReleased" || k == "RobotOnSheet" || k == "RobotOffSheet") {
      using K = analytics::RobotEvent::Kind;
      const K kind = k == "RobotGrabbed"    ? K::Grabbed
                     : k == "RobotReleased" ? K::Released
                     : k == "RobotOnSheet"  ? K::OnSheet
                                            : K::OffSheet;
      robot_events_.push_back({st.clock_ms(), kind});
      if (kind == K::Grabbed || kind == K::Released) robot_grabbed_ = kind == K::Grabbed;
      if (kind == K::OnSheet || kind == K::OffSheet) robot_on_sheet_ = kind == K::OnSheet;
      out.push_back({k, false, json::object()});
    } else {
      schema("kind");
    }
  } catch (const json::exception&) {
    schema("payload");
  }
  return out;
}

std::vector<Event> ServiceSession::commit(std::vector<Pending> pending) {
  std::vector<Event> events;
  events.reserve(pending.size());
  const std::int64_t ms = game_.state().clock_ms();
  for (auto& p : pending) {
    events.push_back({++seq_, ms, config_.session_id(), std::move(p.kind), p.derived, std::move(p.payload)});
  }
  if (log_) log_->append(events);
  return events;
}

std::vector<Event> ServiceSession::apply(const Command& cmd) { return commit(run(cmd)); }

std::vector<Event> ServiceSession::handle_message(const json& msg) {
  const auto cmd = parse_message(msg);
  if (!cmd) return {};
  return apply(*cmd);
}

RobotPose ServiceSession::inject_localization(const RobotPose& truth) {
  apply({"RobotPose", pose_json(truth)});
  return *robot_pose_;
}

double ServiceSession::pre_score() const { return assessment::score_test(pre_, bank_->items); }
double ServiceSession::post_score() const { return assessment::score_test(post_, post_items_); }
double ServiceSession::mcq_score() const { return assessment::mcq_score(mcq_, bank_->mcq); }

json ServiceSession::snapshot() const {
  const auto& st = game_.state();
  const auto flags = game::stage_flags(st.stage());
  json canvases = json::object();
  for (const auto& [letter, c] : canvases_) canvases[std::string(1, letter)] = canvas::to_json(c);
  json pre = json::array(), post = json::array(), mcq = json::array();
  for (const auto& a : pre_) pre.push_back(answer_json(a));
  for (const auto& a : post_) post.push_back(answer_json(a));
  for (const auto& o : mcq_) mcq.push_back(o ? json(*o) : json(nullptr));
  return {{"session", config_.session_id()},
          {"seq", seq_},
          {"game", game::to_json(st)},
          {"stage_flags",
           {{"animations", flags.animations},
            {"arrows", flags.arrows},
            {"finish_mark", flags.finish_mark},
            {"sounds", flags.sounds},
            {"canvas", flags.canvas}}},
          {"canvases", canvases},
          {"tests",
           {{"pre", pre},
            {"post", post},
            {"mcq", mcq},
            {"pre_score", pre_score()},
            {"post_score", post_score()},
            {"mcq_score", mcq_score()}}},
          {"robot",
           {{"pose", robot_pose_ ? pose_json(*robot_pose_) : json(nullptr)},
            {"on_sheet", robot_on_sheet_},
            {"grabbed", robot_grabbed_}}},
          {"telemetry", {{"pose_samples", poses_.size()}, {"robot_events", robot_events_.size()}}}};
}

void ServiceSession::close() {
  if (!log_) return;
  log_->close(seq_, hash());
  log_.reset();
}

// ---------------------------------------------------------------------------
// Replay

ReplayResult replay(const std::filesystem::path& log_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + log_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  std::vector<Event> recorded;
  std::optional<json> trailer;
  std::uintmax_t valid = 0;
  std::size_t pos = 0;
  std::int64_t line_no = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // unterminated: the writer died mid-line
    ++line_no;
    if (trailer) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + " after trailer");
    json j;
    try {
      j = json::parse(data.begin() + static_cast<std::ptrdiff_t>(pos), data.begin() + static_cast<std::ptrdiff_t>(nl));
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no));
    }
    if (j.is_object() && j.value("kind", "") == "SnapshotHash" && !j.contains("payload")) {
      trailer = j;
    } else {
      Event e = event_from_json(j);
      const std::int64_t expected = recorded.empty() ? 1 : recorded.back().seq + 1;
      if (e.seq != expected) throw Error(ErrorCode::GapInLog, std::to_string(expected));
      recorded.push_back(std::move(e));
      valid = nl + 1;
    }
    pos = nl + 1;
  }
  if (recorded.empty() || recorded.front().kind != "SessionStarted") {
    throw Error(ErrorCode::ParseError, "log does not start with SessionStarted");
  }

  ReplayResult r;
  r.valid_bytes = valid;
  std::shared_ptr<const game::Map> map;
  std::shared_ptr<const assessment::ItemBank> bank;
  SessionConfig config;
  try {
    const json& p = recorded.front().payload;
    config = config_from_json(p.at("config"));
    map = std::make_shared<const game::Map>(game::parse_map(p.at("map")));
    bank = std::make_shared<const assessment::ItemBank>(assessment::parse_bank(p.at("bank")));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }

  std::size_t idx = 0;
  const auto check_group = [&](const std::vector<Event>& produced) {
    for (const auto& e : produced) {
      if (idx >= recorded.size()) {
        if (trailer) throw Error(ErrorCode::SnapshotMismatch, std::to_string(e.seq));
        r.missing.push_back(e);
        continue;
      }
      if (to_json(e).dump() != to_json(recorded[idx]).dump()) {
        throw Error(ErrorCode::SnapshotMismatch, std::to_string(recorded[idx].seq));
      }
      ++idx;
    }
  };

  r.session = std::make_unique<ServiceSession>(config, map, nullptr, bank);
  check_group(r.session->opening_events());
  while (idx < recorded.size()) {
    const Event& e = recorded[idx];
    if (e.derived) throw Error(ErrorCode::SnapshotMismatch, std::to_string(e.seq));
    std::vector<Event> produced;
    try {
      produced = r.session->apply({e.kind, e.payload});
    } catch (const Error&) {
      throw Error(ErrorCode::SnapshotMismatch, std::to_string(e.seq));
    }
    check_group(produced);
  }

  r.hash = r.session->hash();
  r.last_seq = r.session->last_seq();
  if (trailer) {
    if (trailer->value("sha256", "") != r.hash || trailer->value("seq", std::int64_t{-1}) != r.last_seq) {
      throw Error(ErrorCode::SnapshotMismatch, "hash");
    }
    r.verified = true;
  }
  return r;
}

std::unique_ptr<ServiceSession> recover(const std::filesystem::path& log_path) {
  ReplayResult r = replay(log_path);
  std::filesystem::resize_file(log_path, r.valid_bytes);
  auto log = std::make_unique<EventLog>(log_path, true);
  if (!r.missing.empty()) log->append(r.missing);
  r.session->attach_log(std::move(log));
  return std::move(r.session);
}

// ---------------------------------------------------------------------------
// Messages

json error_message(ErrorCode code, const std::string& detail) {
  return {{"type", "error"}, {"code", to_string(code)}, {"detail", detail}};
}

json event_message(const Event& e) { return {{"type", "event"}, {"event", to_json(e)}}; }

json snapshot_message(const ServiceSession& s) {
  json snap = s.snapshot();
  const std::string hash = snapshot_hash(snap);
  return {{"type", "state_snapshot"}, {"hash", hash}, {"snapshot", std::move(snap)}};
}

json hello_message(const ServiceSession& s) {
  return {{"type", "hello"}, {"version", kProtocolVersion}, {"session", s.config().session_id()}};
}

}  // namespace riverpilot::service

#include "doctest.h"

#include "riverpilot/bots.hpp"
#include "riverpilot/error.hpp"
#include "riverpilot/pipeline.hpp"
#include "riverpilot/service.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace riverpilot;
using namespace riverpilot::service;
using json = nlohmann::json;

namespace {

ErrorCode code_of(auto&& f, std::string* detail = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (detail) *detail = e.detail();
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::ParseError;
}

std::shared_ptr<const game::Map> bundled_map() {
  static const auto map = std::make_shared<const game::Map>(game::load_map(game::default_map_path()));
  return map;
}

SessionConfig config(const std::string& team, std::uint64_t seed = 7, game::Stream stream = game::Stream::Stream1) {
  SessionConfig c;
  c.team_id = team;
  c.seed = seed;
  c.stream = stream;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "riverpilot_test_service";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json msg(const std::string& type, json fields = json::object()) {
  fields["type"] = type;
  return fields;
}

/// Sails naive headings, resetting after crashes, for a few levels.
std::vector<json> scripted_messages(const game::Map& map, game::Stream stream, int levels) {
  std::vector<json> out;
  // Replayed against a scratch session so the script knows the outcomes.
  ServiceSession probe(config("probe", 1, stream), std::make_shared<const game::Map>(map));
  const auto send = [&](json m) {
    probe.handle_message(m);
    out.push_back(std::move(m));
  };
  const auto& st = probe.game().state();
  while (!st.finished && st.level_index < levels) {
    const auto& lv = probe.game().level();
    const int tries = st.closed_attempts(lv.letter);
    const double heading = tries == 0 ? lv.naive_heading().degrees() : game::solve_correct_direction(lv).degrees();
    send(msg("set_velocity", {{"heading_deg", heading}}));
    send(msg("launch"));
    while (st.ship.phase == game::Phase::Sailing && !st.finished) send(msg("step", {{"steps", 250}}));
    if (st.ship.phase == game::Phase::Crashed) send(msg("reset"));
  }
  return out;
}

}  // namespace

TEST_CASE("config validation and round trip") {
  SessionConfig c;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigError);
  c.seed = 3;
  CHECK_NOTHROW(c.validate());
  c.acceleration = 0.5;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigError);
  c.acceleration = 4;
  c.robot_sigma_xy = -1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigError);
  c.robot_sigma_xy = 0.5;
  c.team_id = "blue";
  c.stream = game::Stream::Stream2;
  c.clock = ClockMode::Accelerated;
  const SessionConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(c.session_id() == "blue_Stream2_3");
  CHECK(log_file_name(c) == "blue_Stream2_3.jsonl");
  std::string detail;
  CHECK(code_of([&] { config_from_json({{"bogus", 1}}); }, &detail) == ErrorCode::ConfigError);
  CHECK(detail == "bogus");
  CHECK(code_of([&] { config_from_json({{"clock", "warp"}}); }) == ErrorCode::ConfigError);
  // Absent fields keep the base.
  CHECK(config_from_json({{"year", 12}}, c).team_id == "blue");
}

TEST_CASE("malformed messages are typed schema errors") {
  std::string detail;
  CHECK(code_of([&] { parse_message(json::array()); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse_message({{"type", "teleport"}}); }, &detail) == ErrorCode::SchemaError);
  CHECK(detail == "type");
  CHECK(code_of([&] { parse_message(msg("set_velocity")); }, &detail) == ErrorCode::SchemaError);
  CHECK(detail == "heading_deg");
  CHECK(code_of([&] { parse_message(msg("set_velocity", {{"heading_deg", "north"}})); }, &detail) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse_message(msg("step", {{"steps", 0}})); }, &detail) == ErrorCode::SchemaError);
  CHECK(detail == "steps");
  CHECK(code_of([&] { parse_message(msg("hello", {{"version", 99}})); }, &detail) == ErrorCode::SchemaError);
  CHECK(detail == "version");
  CHECK(code_of([&] { parse_message(msg("canvas_move", {{"id", 1}, {"end", "middle"}, {"x", 0}, {"y", 0}})); }, &detail) ==
        ErrorCode::SchemaError);
  CHECK(detail == "end");
  CHECK(code_of([&] { parse_message(msg("pose_sample", {{"ms", 0}, {"rpy", {0, 0}}, {"translation", {0, 0, 1}}})); }, &detail) ==
        ErrorCode::SchemaError);
  CHECK(detail == "rpy");
  CHECK_FALSE(parse_message(msg("hello", {{"version", kProtocolVersion}})).has_value());
  CHECK_FALSE(parse_message(msg("get_state")).has_value());
  CHECK(parse_message(msg("robot", {{"event", "grabbed"}}))->kind == "RobotGrabbed");
}

TEST_CASE("protocol drives the game") {
  ServiceSession s(config("p"), bundled_map());
  CHECK(s.opening_events().front().kind == "SessionStarted");
  CHECK(s.opening_events().back().kind == "StageEntered");

  std::string detail;
  CHECK(code_of([&] { s.handle_message(msg("launch")); }, &detail) == ErrorCode::IllegalInState);
  CHECK(detail == "Docked");
  const auto seq_before = s.last_seq();
  CHECK(code_of([&] { s.handle_message(msg("reset")); }) == ErrorCode::IllegalInState);
  CHECK(s.last_seq() == seq_before);  // rejected commands record nothing

  auto ev = s.handle_message(msg("set_velocity", {{"heading_deg", 30.0}}));
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == "VelocitySet");
  CHECK_FALSE(ev[0].derived);
  CHECK(ev[0].payload["heading"].get<double>() == doctest::Approx(30.0 * M_PI / 180));
  ev = s.handle_message(msg("set_velocity", {{"heading_deg", 40.0}}));
  CHECK(s.game().state().ship.heading->degrees() == doctest::Approx(40.0));

  ev = s.handle_message(msg("launch"));
  CHECK(ev[0].payload["attempt"] == 1);
  CHECK(code_of([&] { s.handle_message(msg("set_velocity", {{"heading_deg", 10.0}})); }, &detail) ==
        ErrorCode::IllegalInState);
  CHECK(detail == "Sailing");
  ev = s.handle_message(msg("step", {{"steps", 5}}));
  CHECK(ev[0].kind == "Stepped");
  CHECK(ev[0].payload["taken"] == 5);
  CHECK(ev[0].ms == s.game().state().clock_ms());

  // Tests open only at the right moments.
  CHECK(code_of([&] { s.handle_message(msg("test_response", {{"test", "pre"}, {"item", 1}, {"answer", nullptr}})); }, &detail) ==
        ErrorCode::IllegalInState);
  CHECK(code_of([&] { s.handle_message(msg("test_response", {{"test", "post"}, {"item", 1}, {"answer", nullptr}})); }) ==
        ErrorCode::IllegalInState);
  CHECK(code_of([&] { s.handle_message(msg("mcq_response", {{"item", 1}, {"option", 0}})); }) == ErrorCode::IllegalInState);
  CHECK(code_of([&] { s.handle_message(msg("canvas_move", {{"id", 1}, {"end", "end"}, {"x", 0}, {"y", 0}})); }, &detail) ==
        ErrorCode::IllegalInState);

  const auto snap = snapshot_message(s);
  CHECK(snap["type"] == "state_snapshot");
  CHECK(snap["hash"] == s.hash());
  CHECK(snap["snapshot"]["stage_flags"]["animations"] == true);
  CHECK(hello_message(s)["version"] == kProtocolVersion);
  CHECK(error_message(ErrorCode::SchemaError, "type")["code"] == "SchemaError");
}

TEST_CASE("pre-test responses are scored and last write wins") {
  ServiceSession s(config("t"), bundled_map());
  const auto& item = s.pre_items()[0];
  json truth{{"start", {item.ground_truth.start.x, item.ground_truth.start.y}},
             {"end", {item.ground_truth.end.x, item.ground_truth.end.y}}};
  auto ev = s.handle_message(msg("test_response", {{"test", "pre"}, {"item", 1}, {"answer", truth}}));
  CHECK(ev[0].payload["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.pre_score() == doctest::Approx(1.0));
  s.handle_message(msg("test_response", {{"test", "pre"}, {"item", 1}, {"answer", nullptr}}));
  CHECK(s.pre_score() == 0.0);
  CHECK(code_of([&] { s.handle_message(msg("test_response", {{"test", "pre"}, {"item", 11}, {"answer", nullptr}})); }) ==
        ErrorCode::SchemaError);
}

TEST_CASE("scripted five-level game logs one terminal outcome per attempt") {
  const auto path = scratch("scripted.jsonl");
  {
    ServiceSession s(config("script"), bundled_map(), std::make_unique<EventLog>(path));
    for (const auto& m : scripted_messages(*bundled_map(), game::Stream::Stream1, 5)) s.handle_message(m);
    REQUIRE(s.game().state().finished);
    s.close();
  }
  std::map<std::pair<std::string, int>, int> launched, terminal;
  std::int64_t prev = 0;
  for (const auto& line : read_lines(path)) {
    const json j = json::parse(line);
    if (j["kind"] == "SnapshotHash") continue;
    const Event e = event_from_json(j);
    CHECK(e.seq == prev + 1);
    prev = e.seq;
    if (e.kind == "Launched") ++launched[{e.payload["level"], e.payload["attempt"]}];
    if (e.kind == "Outcome" && e.payload["attempt"] != 0) ++terminal[{e.payload["level"], e.payload["attempt"]}];
  }
  CHECK(launched.size() >= 6);  // some naive runs crash
  CHECK(launched == terminal);
  for (const auto& [key, n] : terminal) CHECK(n == 1);
  const auto r = replay(path);
  CHECK(r.verified);
  CHECK(r.session->game().state().results.size() == 5);
}

TEST_CASE("replay reproduces the hash and rejects tampering") {
  const auto path = scratch("bot.jsonl");
  std::string live_hash;
  {
    ServiceSession s(config("bot", 11, game::Stream::Stream2), bundled_map(), std::make_unique<EventLog>(path));
    bots::BotTeam team;
    team.team = "bot";
    team.stream = game::Stream::Stream2;
    team.seed = 11;
    team.skill = 0.3;
    bots::play(s, team, bots::solve_all(*bundled_map()));
    live_hash = s.hash();
    s.close();
  }
  const auto r = replay(path);
  CHECK(r.verified);
  CHECK(r.hash == live_hash);
  CHECK(r.missing.empty());

  const auto lines = read_lines(path);
  // Deleting an event leaves a gap.
  {
    auto cut = lines;
    const std::size_t k = cut.size() / 2;
    cut.erase(cut.begin() + static_cast<std::ptrdiff_t>(k));
    const auto p = scratch("gap.jsonl");
    write_lines(p, cut);
    std::string detail;
    CHECK(code_of([&] { replay(p); }, &detail) == ErrorCode::GapInLog);
    CHECK(detail == std::to_string(k + 1));
  }
  // Editing a recorded heading no longer matches what the game produces.
  {
    auto edited = lines;
    bool done = false;
    for (auto& l : edited) {
      json j = json::parse(l);
      if (j["kind"] == "VelocitySet" && !done) {
        j["payload"]["heading"] = j["payload"]["heading"].get<double>() + 0.2;
        l = j.dump();
        done = true;
      }
    }
    REQUIRE(done);
    const auto p = scratch("edited.jsonl");
    write_lines(p, edited);
    CHECK(code_of([&] { replay(p); }) == ErrorCode::SnapshotMismatch);
  }
  // A wrong trailer.
  {
    auto bad = lines;
    json t = json::parse(bad.back());
    t["sha256"] = std::string(64, '0');
    bad.back() = t.dump();
    const auto p = scratch("trailer.jsonl");
    write_lines(p, bad);
    CHECK(code_of([&] { replay(p); }) == ErrorCode::SnapshotMismatch);
  }
}

TEST_CASE("kill after acknowledgment recovers the pre-kill state") {
  const auto script = scripted_messages(*bundled_map(), game::Stream::Stream1, 2);
  REQUIRE(script.size() > 10);
  const std::size_t kill_at = script.size() / 2;

  ServiceSession reference(config("ref"), bundled_map());
  for (const auto& m : script) reference.handle_message(m);

  const auto path = scratch("killed.jsonl");
  std::string pre_kill;
  {
    auto s = std::make_unique<ServiceSession>(config("ref"), bundled_map(), std::make_unique<EventLog>(path));
    for (std::size_t i = 0; i < kill_at; ++i) s->handle_message(script[i]);
    pre_kill = s->hash();
  }  // dropped without close: no trailer
  // A half-written line from the dying writer.
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"seq":99999,"ms":)";
  }
  auto recovered = recover(path);
  CHECK(recovered->hash() == pre_kill);
  for (std::size_t i = kill_at; i < script.size(); ++i) recovered->handle_message(script[i]);
  CHECK(recovered->hash() == reference.hash());
  recovered->close();
  const auto r = replay(path);
  CHECK(r.verified);
  CHECK(r.hash == reference.hash());
}

TEST_CASE("recovery restores consequences lost with the writer") {
  const auto path = scratch("lost.jsonl");
  std::string full;
  {
    ServiceSession s(config("lost"), bundled_map(), std::make_unique<EventLog>(path));
    s.handle_message(msg("set_velocity", {{"heading_deg", 90.0}}));  // straight into the bank
    s.handle_message(msg("launch"));
    while (s.game().state().ship.phase == game::Phase::Sailing) s.handle_message(msg("step", {{"steps", 100}}));
    s.handle_message(msg("reset"));  // driver plus its Outcome
    full = s.hash();
  }
  auto lines = read_lines(path);
  REQUIRE(json::parse(lines.back())["kind"] == "Outcome");
  lines.pop_back();
  write_lines(path, lines);
  auto s = recover(path);
  CHECK(s->hash() == full);
  s->close();
  CHECK(replay(path).verified);
}

TEST_CASE("sessions are isolated under interleaving") {
  const auto a = scripted_messages(*bundled_map(), game::Stream::Stream1, 2);
  const auto b = scripted_messages(*bundled_map(), game::Stream::Stream2, 2);
  ServiceSession alone_a(config("a", 1), bundled_map());
  ServiceSession alone_b(config("b", 2, game::Stream::Stream2), bundled_map());
  for (const auto& m : a) alone_a.handle_message(m);
  for (const auto& m : b) alone_b.handle_message(m);

  Rng rng(99);
  ServiceSession mixed_a(config("a", 1), bundled_map());
  ServiceSession mixed_b(config("b", 2, game::Stream::Stream2), bundled_map());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && rng.bernoulli(0.5))) {
      mixed_a.handle_message(a[i++]);
    } else {
      mixed_b.handle_message(b[j++]);
    }
  }
  CHECK(mixed_a.hash() == alone_a.hash());
  CHECK(mixed_b.hash() == alone_b.hash());
}

TEST_CASE("localization noise") {
  SUBCASE("zero noise returns the truth") {
    SessionConfig c = config("n");
    c.robot_sigma_xy = 0;
    c.robot_sigma_theta_deg = 0;
    ServiceSession s(c, bundled_map());
    const RobotPose truth{{120.5, 300.25}, 0.7};
    const RobotPose got = s.inject_localization(truth);
    CHECK(got.position == truth.position);
    CHECK(got.theta == truth.theta);
  }
  SUBCASE("sample deviation within 10% of sigma") {
    ServiceSession s(config("n"), bundled_map());
    const int n = 10000;
    std::vector<double> dx, dy, dt;
    for (int i = 0; i < n; ++i) {
      const RobotPose r = s.inject_localization({{500, 400}, 0.0});
      dx.push_back(r.position.x - 500);
      dy.push_back(r.position.y - 400);
      dt.push_back(r.theta * 180 / M_PI);
    }
    const auto sd = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double ss = 0;
      for (double x : v) ss += (x - m) * (x - m);
      return std::sqrt(ss / (v.size() - 1));
    };
    CHECK(std::abs(sd(dx) - 0.5) < 0.05);
    CHECK(std::abs(sd(dy) - 0.5) < 0.05);
    CHECK(std::abs(sd(dt) - 0.5) < 0.05);
  }
}

TEST_CASE("visible sheet by frustum test") {
  using analytics::VisibleSheet;
  const SheetLayout layout;
  CHECK(visible_sheet(look_at_sheet({594, 420}, 600, 0.2, 1.0, 0.0)) == VisibleSheet::ActivitySheet);
  CHECK(visible_sheet(look_at_sheet({1549, 148}, 400, 0.1, 0.0, 0.3)) == VisibleSheet::VelocitySheet);
  Pose3D away;
  away.translation = {0, 0, -500};
  CHECK(visible_sheet(away) == VisibleSheet::None);
  // Near the table edge the axis misses both sheets but the activity sheet fills part of the frame.
  CHECK(visible_sheet(look_at_sheet({594, 900}, 500, 0.0, 0.0, 0.0)) == VisibleSheet::ActivitySheet);
  CHECK(visible_sheet(look_at_sheet({594, 5000}, 500, 0.0, 0.0, 0.0)) == VisibleSheet::None);
}

TEST_CASE("oracle bots need one attempt per level and ace the post-test") {
  const auto dir = scratch("oracle");
  std::filesystem::remove_all(dir);
  const auto run = bots::run_bot_cohort(bots::make_cohort(2, "oracle", 5), dir);
  REQUIRE(run.logs.size() == 2);
  for (const auto& log : run.logs) {
    const auto r = replay(log);
    CHECK(r.verified);
    const auto& st = r.session->game().state();
    CHECK(st.finished);
    for (const auto& res : st.results) {
      CHECK(res.attempts == 1);
      CHECK(res.outcome == game::Outcome::Gold);
    }
    CHECK(r.session->post_score() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(r.session->mcq_score() == doctest::Approx(1.0));
    for (const auto& [letter, c] : r.session->canvases()) CHECK(canvas::score_canvas(c) == 4);
  }
}

TEST_CASE("same seed gives byte-identical cohorts and reports") {
  const auto a = scratch("cohort_a"), b = scratch("cohort_b");
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
  const auto teams = bots::make_cohort(3, "mixed", 21);
  const auto ra = bots::run_bot_cohort(teams, a);
  const auto rb = bots::run_bot_cohort(teams, b);
  REQUIRE(ra.logs.size() == 3);
  for (std::size_t i = 0; i < ra.logs.size(); ++i) {
    CHECK(ra.logs[i].filename() == rb.logs[i].filename());
    CHECK(slurp(ra.logs[i]) == slurp(rb.logs[i]));
  }
  const auto rep = pipeline::analyze_logs(a);
  pipeline::write_report(rep, a / "out1");
  pipeline::write_report(pipeline::analyze_logs(a), a / "out2");
  CHECK(slurp(a / "out1" / "metrics.csv") == slurp(a / "out2" / "metrics.csv"));
  CHECK(slurp(a / "out1" / "stats.json") == slurp(a / "out2" / "stats.json"));
  CHECK(rep.rows.size() == 3);
  CHECK(code_of([] { bots::make_cohort(1, "mixed", 1); }) == ErrorCode::ConfigError);
}

TEST_CASE("perfect post answers against random pre answers separate significantly") {
  // Oracle teams answer the post-test with the ground truth.
  const auto dir = scratch("oracle14");
  std::filesystem::remove_all(dir);
  bots::run_bot_cohort(bots::make_cohort(14, "oracle", 8), dir);
  const auto rep = pipeline::analyze_logs(dir);
  CHECK(rep.stats["pre_post_wilcoxon"]["p"].get<double>() < 0.05);
  CHECK(rep.stats["n"] == 14);
}

TEST_CASE("protocol document matches the implementation") {
  std::ifstream in(std::filesystem::path(RIVERPILOT_DATA_DIR) / "docs" / "protocol.md");
  REQUIRE(in);
  // First cell of each table row, split into backquoted names.
  std::map<std::string, std::set<std::string>> tables;
  std::string section, line;
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) section = line.substr(3);
    if (line.rfind("| `", 0) != 0) continue;
    const std::string cell = line.substr(1, line.find('|', 1) - 1);
    for (std::size_t p = cell.find('`'); p != std::string::npos; p = cell.find('`', cell.find('`', p + 1) + 1)) {
      tables[section].insert(cell.substr(p + 1, cell.find('`', p + 1) - p - 1));
    }
  }
  const auto& types = tables["Client messages"];
  CHECK(types.size() == 13);
  for (const auto& t : types) {
    std::string detail;
    try {
      parse_message(msg(t));
    } catch (const Error& e) {
      detail = e.detail();
    }
    CAPTURE(t);
    CHECK(detail != "type");
  }
  CHECK(code_of([] { parse_message(msg("shutdown")); }) == ErrorCode::SchemaError);

  bots::BotTeam team;
  team.team = "doc";
  team.seed = 3;
  std::set<std::string> emitted;
  const auto path = scratch("doc.jsonl");
  {
    ServiceSession logged(config("doc", 3), bundled_map(), std::make_unique<EventLog>(path));
    bots::play(logged, team, bots::solve_all(*bundled_map()));
  }
  for (const auto& l : read_lines(path)) emitted.insert(json::parse(l)["kind"].get<std::string>());
  const auto& kinds = tables["Events"];
  for (const auto& k : emitted) {
    CAPTURE(k);
    CHECK(kinds.count(k) == 1);
  }
  CHECK(emitted.size() >= 18);
}

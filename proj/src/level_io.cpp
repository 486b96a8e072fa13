#include "riverpilot/error.hpp"
#include "riverpilot/game.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace riverpilot::game {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path + ": " + what);
}

[[noreturn]] void violation(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvariantViolation, path + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected object");
  auto it = j.find(key);
  if (it == j.end()) parse_fail(path + "." + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected number");
  return j.get<double>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) parse_fail(path, "expected string");
  return j.get<std::string>();
}

Vec2 point(const json& j, const std::string& path) {
  if (j.is_array()) {
    if (j.size() != 2) parse_fail(path, "expected [x, y]");
    return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
  }
  return {number(field(j, "x", path), path + ".x"), number(field(j, "y", path), path + ".y")};
}

json point_json(Vec2 p) { return json{{"x", p.x}, {"y", p.y}}; }

bool finite(Vec2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

Level parse_level(const json& j, const std::string& path) {
  Level l;
  const std::string letter = text(field(j, "letter", path), path + ".letter");
  if (letter.size() != 1) parse_fail(path + ".letter", "expected one character");
  l.letter = letter[0];
  try {
    l.stream = stream_from_string(text(field(j, "stream", path), path + ".stream"));
    l.stage = stage_from_string(text(field(j, "stage", path), path + ".stage"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    parse_fail(path, e.detail());
  }
  l.dock = point(field(j, "dock", path), path + ".dock");
  const json& gold = field(j, "gold", path);
  l.gold = point(gold, path + ".gold");
  l.gold_radius = number(field(gold, "radius", path + ".gold"), path + ".gold.radius");
  const json& banks = field(field(j, "river", path), "banks", path + ".river");
  if (!banks.is_array() || banks.size() != 2) parse_fail(path + ".river.banks", "expected two polylines");
  for (std::size_t b = 0; b < 2; ++b) {
    const std::string bp = path + ".river.banks[" + std::to_string(b) + "]";
    if (!banks[b].is_array()) parse_fail(bp, "expected array");
    for (std::size_t i = 0; i < banks[b].size(); ++i) {
      l.banks[b].push_back(point(banks[b][i], bp + "[" + std::to_string(i) + "]"));
    }
  }
  l.current = point(field(j, "current", path), path + ".current");
  l.wind = point(field(j, "wind", path), path + ".wind");
  l.ship_speed = number(field(j, "ship_speed", path), path + ".ship_speed");
  l.time_limit = number(field(j, "time_limit", path), path + ".time_limit");
  l.close_river();
  return l;
}

}  // namespace

void Level::close_river() {
  river = banks[0];
  river.insert(river.end(), banks[1].rbegin(), banks[1].rend());
}

void validate_level(const Level& l, const Map& map, const std::string& path) {
  if (l.letter < 'A' || l.letter > 'J') violation(path + ".letter", "must be A..J");
  if (l.stream != stream_of(l.letter)) violation(path + ".stream", "does not match letter");
  if (l.stage != stage_of(l.letter)) violation(path + ".stage", "does not match letter group");
  if (l.time_limit != kTimeLimit) violation(path + ".time_limit", "must be 480");
  if (!(l.ship_speed > 0.0) || !std::isfinite(l.ship_speed)) violation(path + ".ship_speed", "must be positive");
  if (!(l.gold_radius > 0.0) || !std::isfinite(l.gold_radius)) violation(path + ".gold.radius", "must be positive");
  if (!finite(l.current)) violation(path + ".current", "not finite");
  if (!finite(l.wind)) violation(path + ".wind", "not finite");
  auto on_sheet = [&](Vec2 p) {
    return finite(p) && p.x >= 0.0 && p.y >= 0.0 && p.x <= map.width && p.y <= map.height;
  };
  if (!on_sheet(l.dock)) violation(path + ".dock", "outside the sheet");
  if (!on_sheet(l.gold)) violation(path + ".gold", "outside the sheet");
  for (std::size_t b = 0; b < 2; ++b) {
    const std::string bp = path + ".river.banks[" + std::to_string(b) + "]";
    if (l.banks[b].size() < 2) violation(bp, "needs at least two points");
    for (std::size_t i = 0; i < l.banks[b].size(); ++i) {
      if (!on_sheet(l.banks[b][i])) violation(bp + "[" + std::to_string(i) + "]", "outside the sheet");
    }
  }
  if (!point_in_polygon(l.dock, l.river)) violation(path + ".dock", "not inside the river");
  if (point_in_polygon(l.gold, l.river)) violation(path + ".gold", "inside the river");
  const double dock_d[2] = {distance_to_polyline(l.dock, l.banks[0]), distance_to_polyline(l.dock, l.banks[1])};
  const double gold_d[2] = {distance_to_polyline(l.gold, l.banks[0]), distance_to_polyline(l.gold, l.banks[1])};
  const int dock_bank = dock_d[0] <= dock_d[1] ? 0 : 1;
  const int gold_bank = gold_d[0] <= gold_d[1] ? 0 : 1;
  if (dock_d[dock_bank] > kShoreZone) violation(path + ".dock", "not in a shore zone");
  if (gold_bank == dock_bank) violation(path + ".gold", "on the same bank as the dock");
  if (!(gold_d[gold_bank] < l.gold_radius)) violation(path + ".gold", "gold zone does not reach the river");
}

Map parse_map(const json& j) {
  Map m;
  const json& sheet = field(j, "sheet", "");
  m.width = number(field(sheet, "width", "sheet"), "sheet.width");
  m.height = number(field(sheet, "height", "sheet"), "sheet.height");
  if (!(m.width > 0.0 && m.height > 0.0)) violation("sheet", "dimensions must be positive");
  const json& levels = field(j, "levels", "");
  if (!levels.is_array()) parse_fail("levels", "expected array");
  std::set<char> letters;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string path = "levels[" + std::to_string(i) + "]";
    m.levels.push_back(parse_level(levels[i], path));
    validate_level(m.levels.back(), m, path);
    if (!letters.insert(m.levels.back().letter).second) violation(path + ".letter", "duplicate");
  }
  if (m.levels.size() != 10) violation("levels", "expected 10 levels A..J");
  return m;
}

Map load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return parse_map(j);
}

std::vector<Level> load_levels(const std::filesystem::path& path) { return load_map(path).levels; }

std::filesystem::path default_map_path() {
  return std::filesystem::path(RIVERPILOT_DATA_DIR) / "maps" / "default.json";
}

json level_to_json(const Level& l) {
  json banks = json::array();
  for (const auto& bank : l.banks) {
    json pts = json::array();
    for (Vec2 p : bank) pts.push_back(json::array({p.x, p.y}));
    banks.push_back(pts);
  }
  json gold = point_json(l.gold);
  gold["radius"] = l.gold_radius;
  return json{{"letter", std::string(1, l.letter)},
              {"stream", to_string(l.stream)},
              {"dock", point_json(l.dock)},
              {"gold", gold},
              {"river", {{"banks", banks}}},
              {"current", point_json(l.current)},
              {"wind", point_json(l.wind)},
              {"ship_speed", l.ship_speed},
              {"stage", to_string(l.stage)},
              {"time_limit", l.time_limit}};
}

json map_to_json(const Map& m) {
  json levels = json::array();
  for (const auto& l : m.levels) levels.push_back(level_to_json(l));
  return json{{"sheet", {{"width", m.width}, {"height", m.height}}}, {"levels", levels}};
}

}  // namespace riverpilot::game

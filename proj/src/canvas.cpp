#include "riverpilot/canvas.hpp"
#include "riverpilot/error.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>

namespace riverpilot::canvas {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::ShipVelocity: return "ShipVelocity";
    case Role::Current: return "Current";
    case Role::Wind: return "Wind";
    case Role::Answer: return "Answer";
  }
  return "?";
}

std::string_view to_string(End e) { return e == End::Start ? "start" : "end"; }

Role role_from_string(std::string_view s) {
  for (Role r : {Role::ShipVelocity, Role::Current, Role::Wind, Role::Answer}) {
    if (to_string(r) == s) return r;
  }
  throw Error(ErrorCode::SchemaError, "unknown role " + std::string(s));
}

End end_from_string(std::string_view s) {
  if (s == "start") return End::Start;
  if (s == "end") return End::Tip;
  throw Error(ErrorCode::SchemaError, "unknown end " + std::string(s));
}

std::vector<Connection> SnapGraph::links() const {
  std::vector<Connection> out;
  for (const auto& c : connections) {
    if (c.kind == Connection::Kind::Link) out.push_back(c);
  }
  return out;
}

const CanvasVector* Canvas::find(int id) const {
  auto it = std::find_if(vectors.begin(), vectors.end(), [&](const CanvasVector& v) { return v.id == id; });
  return it == vectors.end() ? nullptr : &*it;
}

const CanvasVector* Canvas::answer() const {
  auto it = std::find_if(vectors.begin(), vectors.end(), [](const CanvasVector& v) { return v.role == Role::Answer; });
  return it == vectors.end() ? nullptr : &*it;
}

namespace {

bool same_point(Vec2 a, Vec2 b) { return distance(a, b) <= kCoincident; }

Vec2& point_of(CanvasVector& v, End e) { return e == End::Start ? v.start : v.end; }

// True when `to` can reach `from` along accepted links.
bool reaches(const std::vector<Connection>& links, int from, int to) {
  if (from == to) return true;
  for (const auto& c : links) {
    if (c.from == from && reaches(links, c.to, to)) return true;
  }
  return false;
}

// Nearest candidate within the snap radius.
std::optional<Vec2> nearest(Vec2 p, const std::vector<Vec2>& candidates) {
  std::optional<Vec2> best;
  double best_d = kSnapRadius;
  for (Vec2 c : candidates) {
    const double d = distance(p, c);
    if (d <= best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

SnapGraph derive_graph(const std::vector<CanvasVector>& vectors) {
  std::vector<const CanvasVector*> summands;
  const CanvasVector* answer = nullptr;
  for (const auto& v : vectors) {
    if (v.role == Role::Answer) answer = &v; else summands.push_back(&v);
  }
  std::sort(summands.begin(), summands.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<Connection> links;
  for (const auto* a : summands) {
    for (const auto* b : summands) {
      if (a == b || !same_point(a->end, b->start)) continue;
      const bool has_incoming = std::any_of(links.begin(), links.end(), [&](const Connection& c) { return c.to == b->id; });
      if (has_incoming || reaches(links, b->id, a->id)) continue;
      links.push_back({Connection::Kind::Link, a->id, b->id});
    }
  }
  SnapGraph g;
  g.connections = links;
  if (answer) {
    for (const auto* s : summands) {
      if (same_point(answer->start, s->start)) {
        g.connections.push_back({Connection::Kind::AnswerStart, s->id, answer->id});
        break;
      }
    }
    for (const auto* s : summands) {
      if (same_point(answer->end, s->end)) {
        g.connections.push_back({Connection::Kind::AnswerEnd, s->id, answer->id});
        break;
      }
    }
  }
  std::sort(g.connections.begin(), g.connections.end());
  return g;
}

std::vector<CanvasEvent> move_endpoint(Canvas& canvas, int id, End end, Vec2 target) {
  auto it = std::find_if(canvas.vectors.begin(), canvas.vectors.end(), [&](const CanvasVector& v) { return v.id == id; });
  if (it == canvas.vectors.end()) throw Error(ErrorCode::UnknownVector, std::to_string(id));
  CanvasVector& v = *it;

  std::vector<Vec2> starts, ends;
  for (const auto& o : canvas.vectors) {
    if (o.id == id || o.role == Role::Answer) continue;
    starts.push_back(o.start);
    ends.push_back(o.end);
  }

  if (v.locked_direction()) {
    // Place the anchored end exactly and rebuild the other from the fixed delta.
    const Vec2 delta = v.delta();
    auto place = [&](End e, Vec2 p) {
      if (e == End::Start) {
        v.start = p;
        v.end = p + delta;
      } else {
        v.end = p;
        v.start = p - delta;
      }
    };
    place(end, target);
    // Dragged end first; a start meets ends, an end meets starts.
    const End other = end == End::Start ? End::Tip : End::Start;
    if (auto q = nearest(point_of(v, end), end == End::Start ? ends : starts)) {
      place(end, *q);
    } else if (auto r = nearest(point_of(v, other), other == End::Start ? ends : starts)) {
      place(other, *r);
    }
  } else {
    Vec2& p = point_of(v, end);
    p = target;
    std::vector<Vec2> all = starts;
    all.insert(all.end(), ends.begin(), ends.end());
    if (auto q = nearest(p, all)) p = *q;
  }

  std::vector<CanvasEvent> events;
  events.push_back(EndpointMoved{v.id, end, v.start, v.end});
  if (v.role == Role::Answer) events.push_back(AnswerSet{v.start, v.end});
  const SnapGraph before = canvas.graph;
  canvas.graph = derive_graph(canvas.vectors);
  for (const auto& c : before.connections) {
    if (!std::binary_search(canvas.graph.connections.begin(), canvas.graph.connections.end(), c)) {
      events.push_back(Unsnapped{c});
    }
  }
  for (const auto& c : canvas.graph.connections) {
    if (!std::binary_search(before.connections.begin(), before.connections.end(), c)) events.push_back(Snapped{c});
  }
  return events;
}

Vec2 chain_sum(const Canvas& canvas) {
  Vec2 sum;
  for (const auto& v : canvas.vectors) {
    if (v.role != Role::Answer) sum += v.delta();
  }
  return sum;
}

int score_canvas(const Canvas& canvas) {
  const auto links = canvas.graph.links();
  std::function<int(int)> longest_from = [&](int id) {
    int best = 0;
    for (const auto& c : links) {
      if (c.from == id) best = std::max(best, 1 + longest_from(c.to));
    }
    return best;
  };
  int chain = 0;
  for (const auto& v : canvas.vectors) {
    if (v.role != Role::Answer) chain = std::max(chain, longest_from(v.id));
  }
  auto has_in = [&](int id) { return std::any_of(links.begin(), links.end(), [&](const Connection& c) { return c.to == id; }); };
  auto has_out = [&](int id) { return std::any_of(links.begin(), links.end(), [&](const Connection& c) { return c.from == id; }); };
  int score = std::min(chain, 2);
  for (const auto& c : canvas.graph.connections) {
    if (c.kind == Connection::Kind::AnswerStart && !has_in(c.from)) ++score;
    if (c.kind == Connection::Kind::AnswerEnd && !has_out(c.from)) ++score;
  }
  return std::min(score, 4);
}

Canvas make_canvas(const game::Level& level, Angle heading, double scale) {
  Canvas c;
  const Vec2 ship = heading.unit() * (level.ship_speed * scale);
  c.vectors.push_back({1, Role::ShipVelocity, {80, 150}, Vec2{80, 150} + ship});
  c.vectors.push_back({2, Role::Current, {240, 150}, Vec2{240, 150} + level.current * scale});
  c.vectors.push_back({3, Role::Wind, {400, 150}, Vec2{400, 150} + level.wind * scale});
  c.vectors.push_back({4, Role::Answer, {80, 280}, {120, 280}});
  c.graph = derive_graph(c.vectors);
  return c;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vec(Vec2 p) { return json::array({p.x, p.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string_view kind_name(Connection::Kind k) {
  switch (k) {
    case Connection::Kind::Link: return "link";
    case Connection::Kind::AnswerStart: return "answer_start";
    case Connection::Kind::AnswerEnd: return "answer_end";
  }
  return "?";
}

json connection_json(const Connection& c) { return {{"kind", kind_name(c.kind)}, {"from", c.from}, {"to", c.to}}; }

}  // namespace

json event_to_json(const CanvasEvent& e) {
  return std::visit(
      [](const auto& ev) -> json {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, EndpointMoved>) {
          return {{"kind", "EndpointMoved"}, {"id", ev.id}, {"which", to_string(ev.end)},
                  {"start", vec(ev.start)}, {"end", vec(ev.tip)}};
        } else if constexpr (std::is_same_v<T, Snapped>) {
          return {{"kind", "Snapped"}, {"connection", connection_json(ev.connection)}};
        } else if constexpr (std::is_same_v<T, Unsnapped>) {
          return {{"kind", "Unsnapped"}, {"connection", connection_json(ev.connection)}};
        } else {
          return {{"kind", "AnswerSet"}, {"start", vec(ev.start)}, {"end", vec(ev.tip)}};
        }
      },
      e);
}

json to_json(const Canvas& c) {
  json vectors = json::array();
  for (const auto& v : c.vectors) {
    vectors.push_back({{"id", v.id}, {"role", to_string(v.role)}, {"start", vec(v.start)}, {"end", vec(v.end)}});
  }
  json conns = json::array();
  for (const auto& k : c.graph.connections) conns.push_back(connection_json(k));
  return {{"vectors", vectors}, {"connections", conns}, {"score", score_canvas(c)}};
}

Canvas canvas_from_json(const json& j) {
  try {
    Canvas c;
    for (const auto& v : j.at("vectors")) {
      c.vectors.push_back({v.at("id").get<int>(), role_from_string(v.at("role").get<std::string>()),
                           vec_from(v.at("start")), vec_from(v.at("end"))});
    }
    c.graph = derive_graph(c.vectors);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("canvas: ") + e.what());
  }
}

}  // namespace riverpilot::canvas

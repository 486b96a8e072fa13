#pragma once

#include "riverpilot/game.hpp"
#include "riverpilot/geometry.hpp"

#include "json.hpp"

#include <string_view>
#include <variant>
#include <vector>

namespace riverpilot::canvas {

enum class Role { ShipVelocity, Current, Wind, Answer };
enum class End { Start, Tip };

std::string_view to_string(Role r);
std::string_view to_string(End e);
Role role_from_string(std::string_view s);
End end_from_string(std::string_view s);

inline constexpr double kSnapRadius = 8.0;  // mm
/// Two points closer than this are the same point.
inline constexpr double kCoincident = 1e-9;

struct CanvasVector {
  int id = 0;
  Role role = Role::ShipVelocity;
  Vec2 start;
  Vec2 end;
  /// Summands keep direction and length; only the Answer is free.
  bool locked_direction() const { return role != Role::Answer; }
  Vec2 delta() const { return end - start; }
  bool operator==(const CanvasVector&) const = default;
};

struct Connection {
  enum class Kind {
    Link,         // `to`'s start sits on `from`'s end (summands only)
    AnswerStart,  // the Answer's start sits on summand `from`'s start
    AnswerEnd,    // the Answer's end sits on summand `from`'s end
  };
  Kind kind = Kind::Link;
  int from = 0;
  int to = 0;
  auto operator<=>(const Connection&) const = default;
};

/// Connections derived from coincident endpoints. Every start has at most one
/// incoming link, no vector links to itself, and links never form a cycle.
struct SnapGraph {
  std::vector<Connection> connections;  // sorted
  bool operator==(const SnapGraph&) const = default;
  std::vector<Connection> links() const;
};

struct Canvas {
  std::vector<CanvasVector> vectors;
  SnapGraph graph;

  const CanvasVector* find(int id) const;
  const CanvasVector* answer() const;
};

struct EndpointMoved { int id; End end; Vec2 start; Vec2 tip; };
struct Snapped { Connection connection; };
struct Unsnapped { Connection connection; };
struct AnswerSet { Vec2 start; Vec2 tip; };
using CanvasEvent = std::variant<EndpointMoved, Snapped, Unsnapped, AnswerSet>;

nlohmann::json event_to_json(const CanvasEvent& e);

/// The three summands of a level, drawn `scale` mm per mm/s and laid out
/// apart from one another, plus a short unattached Answer.
Canvas make_canvas(const game::Level& level, Angle heading, double scale = 3.0);

/// Recomputes the snap graph from the current coordinates.
SnapGraph derive_graph(const std::vector<CanvasVector>& vectors);

/// Drags one end of a vector to `target`. Summands translate rigidly; the
/// Answer moves only the dragged end. The moved vector then snaps onto a
/// partner point within kSnapRadius. Throws UnknownVector.
std::vector<CanvasEvent> move_endpoint(Canvas& canvas, int id, End end, Vec2 target);

/// Geometric sum of the summands, regardless of connections.
Vec2 chain_sum(const Canvas& canvas);

/// 0..4: links along the longest summand chain (at most 2), plus one each for
/// the Answer's start on a chain head and its end on a chain tail.
int score_canvas(const Canvas& canvas);

nlohmann::json to_json(const Canvas& c);
Canvas canvas_from_json(const nlohmann::json& j);

}  // namespace riverpilot::canvas

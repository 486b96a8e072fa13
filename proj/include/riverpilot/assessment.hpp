#pragma once

#include "riverpilot/geometry.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace riverpilot::assessment {

inline constexpr int kTestItems = 10;
inline constexpr int kMcqItems = 4;
/// Items 1..kEarlyItems show axes and ticks, start operands at the origin and
/// lock the answer start.
inline constexpr int kEarlyItems = 4;

// Item frame: x right, y up, grid units, origin where the axes cross.
struct Segment {
  Vec2 start;
  Vec2 end;
  Vec2 delta() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

enum class Operation { Sum, Difference };

std::string_view to_string(Operation op);
Operation operation_from_string(std::string_view s);

struct TestItem {
  int id = 1;
  std::vector<Segment> operands;  // one or two
  Operation operation = Operation::Sum;
  bool axes_visible = true;
  bool ticks_visible = true;
  bool answer_start_locked = true;
  Segment ground_truth;
  bool operator==(const TestItem&) const = default;
};

using DrawnAnswer = Segment;

enum class McqFocus { Direction, Length, Other };

struct McqItem {
  int id = 1;
  std::string prompt;
  std::vector<std::string> options;
  int correct = 0;
  double weight = 1.0;
  McqFocus focus = McqFocus::Other;
};

struct ItemBank {
  std::vector<TestItem> items;
  std::vector<McqItem> mcq;
};

/// The answer an item expects, anchored at the first operand's start:
/// a + b for Sum, a - b for Difference.
Segment expected_answer(const std::vector<Segment>& operands, Operation op);

/// 1 - (10 * dtheta / pi + min(1, |len error| / len)) / 11. A zero-length
/// answer counts as pointing the opposite way.
double score_item(const DrawnAnswer& answer, const TestItem& item);

/// Sum of item scores, unanswered items scoring 0. Throws ItemCountMismatch
/// unless both lists have kTestItems entries.
double score_test(const std::vector<std::optional<DrawnAnswer>>& answers, const std::vector<TestItem>& items);

/// Horizontal reflection about the item frame's vertical axis.
TestItem mirror_item(const TestItem& item);
Segment mirror(const Segment& s);

/// Weighted share of correct responses in [0, 1]. Throws ItemCountMismatch.
double mcq_score(const std::vector<std::optional<int>>& responses, const std::vector<McqItem>& items);

/// Normalized gain (post - pre) / (10 - pre); 0 when pre is already 10.
double learning_gain(double pre, double post);
inline double raw_gain(double pre, double post) { return post - pre; }

/// Throws InvariantViolation naming the offending field.
void validate_bank(const ItemBank& bank);

ItemBank parse_bank(const nlohmann::json& j);
ItemBank load_bank(const std::filesystem::path& path);
std::filesystem::path default_bank_path();

nlohmann::json to_json(const TestItem& item);
nlohmann::json to_json(const McqItem& item);
nlohmann::json to_json(const ItemBank& bank);

}  // namespace riverpilot::assessment

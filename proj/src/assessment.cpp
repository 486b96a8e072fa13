#include "riverpilot/assessment.hpp"
#include "riverpilot/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace riverpilot::assessment {

using nlohmann::json;

std::string_view to_string(Operation op) { return op == Operation::Sum ? "Sum" : "Difference"; }

Operation operation_from_string(std::string_view s) {
  if (s == "Sum") return Operation::Sum;
  if (s == "Difference") return Operation::Difference;
  throw Error(ErrorCode::ParseError, "unknown operation " + std::string(s));
}

namespace {

std::string_view focus_name(McqFocus f) {
  switch (f) {
    case McqFocus::Direction: return "direction";
    case McqFocus::Length: return "length";
    case McqFocus::Other: return "other";
  }
  return "?";
}

McqFocus focus_from(std::string_view s) {
  for (McqFocus f : {McqFocus::Direction, McqFocus::Length, McqFocus::Other}) {
    if (focus_name(f) == s) return f;
  }
  throw Error(ErrorCode::ParseError, "unknown focus " + std::string(s));
}

[[noreturn]] void violation(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvariantViolation, path + ": " + what);
}

}  // namespace

Segment expected_answer(const std::vector<Segment>& operands, Operation op) {
  if (operands.empty()) return {};
  Vec2 d = operands[0].delta();
  for (std::size_t i = 1; i < operands.size(); ++i) {
    d = op == Operation::Sum ? d + operands[i].delta() : d - operands[i].delta();
  }
  return {operands[0].start, operands[0].start + d};
}

double score_item(const DrawnAnswer& answer, const TestItem& item) {
  const Vec2 a = answer.delta();
  const Vec2 g = item.ground_truth.delta();
  const double g_len = g.magnitude();
  const double a_len = a.magnitude();
  const double dtheta = a_len == 0.0 ? std::numbers::pi : angular_distance(Angle::of(a), Angle::of(g));
  const double e_len = std::min(1.0, std::abs(a_len - g_len) / g_len);
  return std::clamp(1.0 - (10.0 * dtheta / std::numbers::pi + e_len) / 11.0, 0.0, 1.0);
}

double score_test(const std::vector<std::optional<DrawnAnswer>>& answers, const std::vector<TestItem>& items) {
  if (items.size() != kTestItems || answers.size() != items.size()) {
    throw Error(ErrorCode::ItemCountMismatch,
                std::to_string(answers.size()) + " answers for " + std::to_string(items.size()) + " items");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (answers[i]) total += score_item(*answers[i], items[i]);
  }
  return total;
}

Segment mirror(const Segment& s) { return {{-s.start.x, s.start.y}, {-s.end.x, s.end.y}}; }

TestItem mirror_item(const TestItem& item) {
  TestItem m = item;
  for (auto& op : m.operands) op = mirror(op);
  m.ground_truth = mirror(item.ground_truth);
  return m;
}

double mcq_score(const std::vector<std::optional<int>>& responses, const std::vector<McqItem>& items) {
  if (items.size() != kMcqItems || responses.size() != items.size()) {
    throw Error(ErrorCode::ItemCountMismatch,
                std::to_string(responses.size()) + " responses for " + std::to_string(items.size()) + " items");
  }
  double got = 0.0, total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    total += items[i].weight;
    if (responses[i] && *responses[i] == items[i].correct) got += items[i].weight;
  }
  return got / total;
}

double learning_gain(double pre, double post) {
  if (pre >= kTestItems) return 0.0;
  return (post - pre) / (kTestItems - pre);
}

void validate_bank(const ItemBank& bank) {
  if (bank.items.size() != kTestItems) violation("items", "expected " + std::to_string(kTestItems) + " items");
  bool axes = true, ticks = true, locked = true;
  for (std::size_t i = 0; i < bank.items.size(); ++i) {
    const TestItem& it = bank.items[i];
    const std::string path = "items[" + std::to_string(i) + "]";
    if (it.id != static_cast<int>(i) + 1) violation(path + ".id", "expected " + std::to_string(i + 1));
    if (it.operands.empty() || it.operands.size() > 2) violation(path + ".operands", "expected one or two");
    for (std::size_t k = 0; k < it.operands.size(); ++k) {
      if (it.operands[k].delta() == Vec2{}) violation(path + ".operands[" + std::to_string(k) + "]", "zero length");
    }
    if (it.ground_truth.delta().magnitude() < 1e-9) violation(path + ".ground_truth", "zero length");
    const Segment want = expected_answer(it.operands, it.operation);
    if (distance(want.delta(), it.ground_truth.delta()) > 1e-9) {
      violation(path + ".ground_truth", "does not match the operands");
    }
    if (it.answer_start_locked && distance(it.ground_truth.start, want.start) > 1e-9) {
      violation(path + ".ground_truth.start", "locked answer must start at the first operand's start");
    }
    const bool at_origin = std::all_of(it.operands.begin(), it.operands.end(),
                                       [](const Segment& s) { return s.start == Vec2{}; });
    if (it.id <= kEarlyItems) {
      if (!it.axes_visible || !it.ticks_visible) violation(path, "early items show axes and ticks");
      if (!at_origin) violation(path + ".operands", "early operands start at the origin");
      if (!it.answer_start_locked) violation(path + ".answer_start_locked", "early items lock the answer start");
    }
    if (it.id == kTestItems && (at_origin || it.answer_start_locked || it.axes_visible)) {
      violation(path, "the last item has free operands, a free answer start and no axes");
    }
    // Aids only fade: once hidden or freed they stay so.
    if ((it.axes_visible && !axes) || (it.ticks_visible && !ticks) || (it.answer_start_locked && !locked)) {
      violation(path, "display aids reappear after fading");
    }
    axes = it.axes_visible;
    ticks = it.ticks_visible;
    locked = it.answer_start_locked;
  }

  if (bank.mcq.size() != kMcqItems) violation("mcq", "expected " + std::to_string(kMcqItems) + " items");
  double min_direction = INFINITY, max_other = 0.0;
  for (std::size_t i = 0; i < bank.mcq.size(); ++i) {
    const McqItem& q = bank.mcq[i];
    const std::string path = "mcq[" + std::to_string(i) + "]";
    if (q.id != static_cast<int>(i) + 1) violation(path + ".id", "expected " + std::to_string(i + 1));
    if (q.options.size() < 2) violation(path + ".options", "expected at least two");
    if (q.correct < 0 || q.correct >= static_cast<int>(q.options.size())) violation(path + ".correct", "out of range");
    if (!(q.weight > 0.0)) violation(path + ".weight", "must be positive");
    if (q.focus == McqFocus::Direction) min_direction = std::min(min_direction, q.weight);
    else max_other = std::max(max_other, q.weight);
  }
  if (min_direction <= max_other) violation("mcq", "direction questions must outweigh the others");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vec(Vec2 p) { return json::array({p.x, p.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
json seg(const Segment& s) { return {{"start", vec(s.start)}, {"end", vec(s.end)}}; }
Segment seg_from(const json& j) { return {vec_from(j.at("start")), vec_from(j.at("end"))}; }

}  // namespace

json to_json(const TestItem& it) {
  json ops = json::array();
  for (const auto& s : it.operands) ops.push_back(seg(s));
  return {{"id", it.id},
          {"operands", ops},
          {"operation", to_string(it.operation)},
          {"axes_visible", it.axes_visible},
          {"ticks_visible", it.ticks_visible},
          {"answer_start_locked", it.answer_start_locked},
          {"ground_truth", seg(it.ground_truth)}};
}

json to_json(const McqItem& q) {
  return {{"id", q.id}, {"prompt", q.prompt}, {"options", q.options},
          {"correct", q.correct}, {"weight", q.weight}, {"focus", focus_name(q.focus)}};
}

json to_json(const ItemBank& bank) {
  json items = json::array(), mcq = json::array();
  for (const auto& it : bank.items) items.push_back(to_json(it));
  for (const auto& q : bank.mcq) mcq.push_back(to_json(q));
  return {{"items", items}, {"mcq", mcq}};
}

ItemBank parse_bank(const json& j) {
  ItemBank bank;
  try {
    for (const auto& e : j.at("items")) {
      TestItem it;
      it.id = e.at("id").get<int>();
      for (const auto& s : e.at("operands")) it.operands.push_back(seg_from(s));
      it.operation = operation_from_string(e.at("operation").get<std::string>());
      it.axes_visible = e.at("axes_visible").get<bool>();
      it.ticks_visible = e.at("ticks_visible").get<bool>();
      it.answer_start_locked = e.at("answer_start_locked").get<bool>();
      it.ground_truth = seg_from(e.at("ground_truth"));
      bank.items.push_back(std::move(it));
    }
    for (const auto& e : j.at("mcq")) {
      McqItem q;
      q.id = e.at("id").get<int>();
      q.prompt = e.at("prompt").get<std::string>();
      q.options = e.at("options").get<std::vector<std::string>>();
      q.correct = e.at("correct").get<int>();
      q.weight = e.at("weight").get<double>();
      q.focus = focus_from(e.at("focus").get<std::string>());
      bank.mcq.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("item bank: ") + e.what());
  }
  validate_bank(bank);
  return bank;
}

ItemBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return parse_bank(j);
}

std::filesystem::path default_bank_path() {
  return std::filesystem::path(RIVERPILOT_DATA_DIR) / "data" / "items.json";
}

}  // namespace riverpilot::assessment

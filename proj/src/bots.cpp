#include "riverpilot/bots.hpp"

#include "riverpilot/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>

namespace riverpilot::bots {

using json = nlohmann::json;
using service::ServiceSession;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegree = kPi / 180.0;
constexpr double kPoseRateHz = 20.0;
constexpr int kChunkSteps = 100;  // one second of game time
const Vec2 kVelocityCenter{1339.0 + 210.0, 148.5};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

json point(Vec2 p) { return json::array({p.x, p.y}); }

class Bot {
 public:
  Bot(ServiceSession& s, const BotTeam& team, const Solutions& correct)
      : s_(s), team_(team), correct_(correct), rng_(team.seed) {
    alpha_ = team.policy == Policy::Learner ? 0.5 * team.skill : 0.0;
  }

  void run() {
    pre_test();
    while (!state().finished) play_attempt();
    post_test();
    mcq();
  }

 private:
  const game::SessionState& state() const { return s_.game().state(); }

  void send(json msg) { s_.handle_message(msg); }

  // --- tablet poses -------------------------------------------------------

  /// Rotation jitter of the tablet in radians. Confident teams hold it
  /// looser over the velocity sheet; Learners steady down as they learn.
  double jitter(bool velocity_sheet) const {
    if (!velocity_sheet) return 0.004;
    const double base = 0.004 * (0.5 + team_.skill);
    return team_.policy == Policy::Learner ? base * (1.25 - 0.5 * alpha_) : base;
  }

  void pose_at(std::int64_t ms, const Pose3D& base, double sigma) {
    auto rpy = euler_angles(base.rotation);
    for (double& a : rpy) a += rng_.normal(0.0, sigma);
    const Eigen::Vector3d t = base.translation;
    send({{"type", "pose_sample"},
          {"ms", ms},
          {"rpy", json::array({rpy[0], rpy[1], rpy[2]})},
          {"translation", json::array({t.x() + rng_.normal(0, 100 * sigma), t.y() + rng_.normal(0, 100 * sigma),
                                       t.z() + rng_.normal(0, 100 * sigma)})}});
  }

  /// Tablet put down: the sheets are behind the camera.
  void pose_away(std::int64_t ms) {
    send({{"type", "pose_sample"}, {"ms", ms}, {"rpy", json::array({0.0, 0.0, 0.0})}, {"translation", json::array({0.0, 0.0, -500.0})}});
  }

  /// Samples over [t0, t0 + seconds) looking at `target`, then one away.
  void episode(std::int64_t t0_ms, double seconds, Vec2 target, bool velocity_sheet) {
    const Pose3D base = look_at_sheet(target, rng_.uniform(300, 450), rng_.uniform(0.1, 0.35), rng_.uniform(-kPi, kPi), 0.0);
    const int n = std::max(1, static_cast<int>(std::lround(seconds * kPoseRateHz)));
    for (int i = 0; i < n; ++i) {
      pose_at(t0_ms + static_cast<std::int64_t>(std::lround(i * 1000.0 / kPoseRateHz)), base, jitter(velocity_sheet));
    }
    pose_away(t0_ms + static_cast<std::int64_t>(std::lround(seconds * 1000.0)));
  }

  double ar_probability() const {
    switch (team_.policy) {
      case Policy::Learner: return 0.2 + 0.3 * (1.0 - team_.skill);
      case Policy::Random: return 0.35;
      default: return 0.2;
    }
  }

  // --- game ---------------------------------------------------------------

  double think_seconds() {
    switch (team_.policy) {
      case Policy::Learner: return 3.0 + 4.0 * (1.0 - team_.skill) + rng_.uniform(0.0, 2.0);
      case Policy::Random: return 2.0 + rng_.uniform(0.0, 3.0);
      default: return 3.0;
    }
  }

  Angle choose_heading(const game::Level& lv) {
    const Angle naive = lv.naive_heading();
    switch (team_.policy) {
      case Policy::Naive: return naive;
      case Policy::Oracle: return correct_.at(lv.letter);
      case Policy::Random: return Angle(naive.radians() + rng_.uniform(-kRandomSpreadDeg, kRandomSpreadDeg) * kDegree);
      case Policy::Learner: {
        const double diff = Angle::canonicalize(correct_.at(lv.letter).radians() - naive.radians());
        const double sigma = (1.0 * (1.0 - alpha_) + 0.1) * kDegree;
        return Angle(naive.radians() + alpha_ * diff + rng_.normal(0.0, sigma));
      }
    }
    return naive;
  }

  void play_attempt() {
    const char letter = state().letter();
    const game::Level& lv = s_.game().level();
    const double think = think_seconds();
    episode(state().clock_ms(), think, kVelocityCenter, true);
    send({{"type", "wait"}, {"seconds", think}});
    if (state().finished || state().letter() != letter) return;  // timed out while thinking

    const Angle heading = choose_heading(lv);
    send({{"type", "set_velocity"}, {"heading_deg", heading.degrees()}});
    if (s_.canvases().count(letter) && !drawn_.count(letter)) {
      drawn_[letter] = true;
      draw_canvas(letter);
    }
    send({{"type", "launch"}});
    send({{"type", "robot"}, {"event", "on_sheet"}});

    while (!state().finished && state().letter() == letter && state().ship.phase == game::Phase::Sailing) {
      send({{"type", "step"}, {"steps", kChunkSteps}});
      const std::int64_t now = state().clock_ms();
      if (rng_.bernoulli(ar_probability())) episode(now - 1000, 1.0, state().ship.position, false);
      const double theta = state().ship.heading ? state().ship.heading->radians() : heading.radians();
      s_.inject_localization({state().ship.position, theta});
    }
    if (state().ship.phase == game::Phase::Crashed) {
      send({{"type", "robot"}, {"event", "grabbed"}});
      send({{"type", "wait"}, {"seconds", 2.0}});
      if (!state().finished && state().ship.phase == game::Phase::Crashed) send({{"type", "reset"}});
      send({{"type", "robot"}, {"event", "released"}});
    }
    const bool failed = state().attempts.back().outcome != game::Outcome::Gold;
    if (failed && team_.policy == Policy::Learner) alpha_ = std::min(1.0, alpha_ + kLearnerStep);
  }

  // --- canvas -------------------------------------------------------------

  void drag(int id, const char* end, Vec2 target) {
    send({{"type", "canvas_move"}, {"id", id}, {"end", end}, {"x", target.x}, {"y", target.y}});
  }

  void draw_canvas(char letter) {
    const auto& c = s_.canvases().at(letter);
    const auto ship = [&] { return *c.find(1); };
    const auto current = [&] { return *c.find(2); };
    const auto wind = [&] { return *c.find(3); };
    const double p = team_.policy == Policy::Oracle ? 1.0
                     : team_.policy == Policy::Learner ? 0.4 + 0.6 * team_.skill
                                                        : 0.3;
    if (rng_.bernoulli(p)) drag(2, "start", ship().end);
    if (rng_.bernoulli(p)) drag(3, "start", current().end);
    if (rng_.bernoulli(p)) drag(4, "start", ship().start);
    if (rng_.bernoulli(p)) drag(4, "end", wind().end);
  }

  // --- tests --------------------------------------------------------------

  /// Answer quality in [0, 1]; 1 draws the ground truth.
  double pre_quality() const {
    const double year = team_.year >= 12 ? 0.05 : 0.0;
    return clamp01(0.15 + 0.3 * team_.skill + year);
  }

  double post_quality() const {
    switch (team_.policy) {
      case Policy::Oracle: return 1.0;
      case Policy::Learner: return clamp01(pre_quality() + 0.25 + 0.4 * team_.skill);
      default: return pre_quality();
    }
  }

  json answer(const assessment::TestItem& item, double q) {
    if (q >= 1.0) return {{"start", point(item.ground_truth.start)}, {"end", point(item.ground_truth.end)}};
    if (rng_.bernoulli(0.5 * (1.0 - q))) return nullptr;
    const Vec2 d = item.ground_truth.delta();
    const double rot = rng_.normal(0.0, 1.6 * (1.0 - q));
    const double scale = std::exp(rng_.normal(0.0, 0.8 * (1.0 - q)));
    const Vec2 r{(d.x * std::cos(rot) - d.y * std::sin(rot)) * scale, (d.x * std::sin(rot) + d.y * std::cos(rot)) * scale};
    Vec2 start = item.ground_truth.start;
    if (!item.answer_start_locked) start += Vec2{rng_.normal(0.0, 1.0), rng_.normal(0.0, 1.0)};
    return {{"start", point(start)}, {"end", point(start + r)}};
  }

  void test(const char* name, const std::vector<assessment::TestItem>& items, double q) {
    for (const auto& item : items) {
      send({{"type", "test_response"}, {"test", name}, {"item", item.id}, {"answer", answer(item, q)}});
    }
  }

  void pre_test() { test("pre", s_.pre_items(), pre_quality()); }
  void post_test() { test("post", s_.post_items(), post_quality()); }

  void mcq() {
    const double q = post_quality();
    for (const auto& item : s_.bank().mcq) {
      int option = item.correct;
      if (!rng_.bernoulli(q)) {
        const auto n = static_cast<int>(item.options.size());
        option = (item.correct + 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(n - 1)))) % n;
      }
      send({{"type", "mcq_response"}, {"item", item.id}, {"option", option}});
    }
  }

  ServiceSession& s_;
  const BotTeam& team_;
  const Solutions& correct_;
  Rng rng_;
  double alpha_ = 0.0;
  std::map<char, bool> drawn_;
};

}  // namespace

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::Naive: return "Naive";
    case Policy::Oracle: return "Oracle";
    case Policy::Learner: return "Learner";
    case Policy::Random: return "Random";
  }
  return "Naive";
}

Policy policy_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "naive") return Policy::Naive;
  if (lower == "oracle") return Policy::Oracle;
  if (lower == "learner") return Policy::Learner;
  if (lower == "random") return Policy::Random;
  throw Error(ErrorCode::ConfigError, "policy: " + std::string(s));
}

Solutions solve_all(const game::Map& map) {
  // Solving is the slow part of a cohort; maps repeat across calls.
  static std::mutex mu;
  static std::map<std::string, Solutions> cache;
  const std::string key = service::sha256_hex(game::map_to_json(map).dump());
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  Solutions out;
  for (const auto& lv : map.levels) out[lv.letter] = game::solve_correct_direction(lv);
  std::lock_guard lock(mu);
  cache[key] = out;
  return out;
}

void play(ServiceSession& session, const BotTeam& team, const Solutions& correct) {
  Bot(session, team, correct).run();
}

std::vector<BotTeam> make_cohort(int n_teams, std::string_view mix, std::uint64_t seed) {
  if (n_teams < 2) throw Error(ErrorCode::ConfigError, "n_teams");
  Rng rng(seed);
  std::vector<Policy> policies;
  if (mix == "mixed") {
    const int learners = static_cast<int>(std::lround(n_teams * 10.0 / 14.0));
    policies.assign(static_cast<std::size_t>(learners), Policy::Learner);
    policies.resize(static_cast<std::size_t>(n_teams), Policy::Random);
    for (std::size_t i = policies.size() - 1; i > 0; --i) std::swap(policies[i], policies[rng.below(i + 1)]);
  } else {
    policies.assign(static_cast<std::size_t>(n_teams), policy_from_string(mix));
  }
  std::vector<BotTeam> teams;
  for (int i = 0; i < n_teams; ++i) {
    BotTeam t;
    char name[16];
    std::snprintf(name, sizeof name, "team%02d", i + 1);
    t.team = name;
    t.policy = policies[static_cast<std::size_t>(i)];
    t.stream = i % 2 == 0 ? game::Stream::Stream1 : game::Stream::Stream2;
    t.year = (i / 2) % 2 == 0 ? 10 : 12;
    t.seed = rng.fork_seed();
    t.skill = t.policy == Policy::Oracle ? 1.0 : rng.uniform(0.05, 0.95);
    teams.push_back(t);
  }
  return teams;
}

CohortRun run_bot_cohort(const std::vector<BotTeam>& teams, const std::filesystem::path& out_dir,
                         const std::filesystem::path& map_path) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  service::SessionConfig base;
  base.map_path = map_path;
  const auto map = service::load_map_for(base);
  const Solutions correct = solve_all(*map);
  CohortRun run;
  for (const auto& t : teams) {
    service::SessionConfig c = base;
    c.team_id = t.team;
    c.stream = t.stream;
    c.seed = t.seed;
    c.clock = service::ClockMode::Accelerated;
    c.year = t.year;
    c.group = std::string(to_string(t.policy));
    const auto path = out_dir / service::log_file_name(c);
    ServiceSession s(c, map, std::make_unique<service::EventLog>(path));
    play(s, t, correct);
    s.close();
    run.logs.push_back(path);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace riverpilot::bots

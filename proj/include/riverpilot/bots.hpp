#pragma once

#include "riverpilot/service.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace riverpilot::bots {

enum class Policy { Naive, Oracle, Learner, Random };

std::string_view to_string(Policy p);
Policy policy_from_string(std::string_view s);

/// Per-attempt increase of the Learner's blend factor.
inline constexpr double kLearnerStep = 0.25;
/// Random headings are drawn uniformly within this many degrees of naive.
inline constexpr double kRandomSpreadDeg = 75.0;

struct BotTeam {
  std::string team;
  Policy policy = Policy::Learner;
  game::Stream stream = game::Stream::Stream1;
  std::uint64_t seed = 1;
  int year = 10;
  double skill = 0.5;  // latent, in [0, 1]
};

/// Gold-reaching heading of every level, keyed by letter.
using Solutions = std::map<char, Angle>;
Solutions solve_all(const game::Map& map);

/// Plays the whole game, tests included, through the protocol.
void play(service::ServiceSession& session, const BotTeam& team, const Solutions& correct);

/// `mix` is a policy name or "mixed" (10 Learner : 4 Random, rounded).
/// Throws ConfigError for fewer than two teams.
std::vector<BotTeam> make_cohort(int n_teams, std::string_view mix, std::uint64_t seed);

struct CohortRun {
  std::vector<std::filesystem::path> logs;
  double seconds = 0.0;
};

/// One closed log per team under `out_dir`.
CohortRun run_bot_cohort(const std::vector<BotTeam>& teams, const std::filesystem::path& out_dir,
                         const std::filesystem::path& map_path = {});

}  // namespace riverpilot::bots

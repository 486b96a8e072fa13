#include "riverpilot/bots.hpp"
#include "riverpilot/error.hpp"
#include "riverpilot/markers.hpp"
#include "riverpilot/pipeline.hpp"
#include "riverpilot/server.hpp"

#include "CLI11.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace riverpilot;
using json = nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

json pose_json(const Pose3D& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
  return {{"rotation", r}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

std::vector<markers::DotPattern> read_patterns(const std::string& path) {
  json j = read_json(path);
  if (j.is_object()) j = json::array({j});
  std::vector<markers::DotPattern> out;
  for (const auto& p : j) out.push_back(p.get<markers::DotPattern>());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* lvl = std::getenv("RIVERPILOT_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"River navigation vector-addition game: server, bots, replay and analytics."};
  app.set_config("--config", "", "TOML file with option defaults, one [section] per subcommand");
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the WebSocket game server");
  server::ServerOptions so;
  std::string clock = "manual";
  std::string serve_map, serve_logs = "logs";
  serve->add_option("--map", serve_map, "Level map JSON (bundled map when omitted)");
  serve->add_option("--port", so.port, "TCP port, 0 for any free port")->capture_default_str();
  serve->add_option("--address", so.address, "Listen address")->capture_default_str();
  serve->add_option("--logs", serve_logs, "Directory for session logs")->capture_default_str();
  serve->add_option("--threads", so.threads, "Worker threads")->capture_default_str();
  serve->add_option("--clock", clock, "realtime, accelerated or manual")->capture_default_str();
  serve->add_option("--acceleration", so.defaults.acceleration, "Game seconds per wall second (accelerated)")
      ->capture_default_str();
  serve->add_option("--sigma-xy", so.defaults.robot_sigma_xy, "Robot localization noise, mm")->capture_default_str();
  serve->add_option("--sigma-theta", so.defaults.robot_sigma_theta_deg, "Robot heading noise, degrees")
      ->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Play a bot cohort headlessly and write its logs");
  int teams = 14;
  std::string policy = "mixed", sim_out = "logs", sim_map;
  std::uint64_t seed = 1;
  sim->add_option("--teams", teams, "Number of teams")->capture_default_str();
  sim->add_option("--policy", policy, "naive, oracle, learner, random or mixed")->capture_default_str();
  sim->add_option("--seed", seed, "Cohort seed")->capture_default_str();
  sim->add_option("--out", sim_out, "Log directory")->capture_default_str();
  sim->add_option("--map", sim_map, "Level map JSON");

  // replay
  auto* rep = app.add_subcommand("replay", "Replay a session log and check its hash");
  std::string log_path;
  rep->add_option("--log", log_path, "Session log (.jsonl)")->required();

  // metrics
  auto* met = app.add_subcommand("metrics", "Compute metrics.csv and stats.json from a log directory");
  std::string met_logs, met_out = "report";
  met->add_option("--logs", met_logs, "Log directory")->required();
  met->add_option("--out", met_out, "Output directory")->capture_default_str();

  // markers
  auto* mk = app.add_subcommand("markers", "Random-dot marker tools");
  mk->require_subcommand(1);
  auto* gen = mk->add_subcommand("gen", "Generate a dot pattern");
  std::size_t dots = 180;
  int id = 1;
  markers::Bounds bounds{420.0, 297.0};
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  gen->add_option("--dots", dots, "Dot count")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Placement seed")->capture_default_str();
  gen->add_option("--id", id, "Marker id")->capture_default_str();
  gen->add_option("--width", bounds.width, "Sheet width, mm")->capture_default_str();
  gen->add_option("--height", bounds.height, "Sheet height, mm")->capture_default_str();
  gen->add_option("--out", gen_out, "Output file (stdout when omitted)");

  auto* render = mk->add_subcommand("render", "Render a synthetic camera frame of a pattern");
  std::string render_pattern, render_out;
  double distance = 500, tilt = 0, azimuth = 0, roll = 0, sigma = 1.0, occlusion = 0.0;
  std::uint64_t render_seed = 1;
  render->add_option("--pattern", render_pattern, "Pattern file")->required();
  render->add_option("--distance", distance, "Camera distance, mm")->capture_default_str();
  render->add_option("--tilt", tilt, "Tilt off the sheet normal, radians")->capture_default_str();
  render->add_option("--azimuth", azimuth, "Tilt direction, radians")->capture_default_str();
  render->add_option("--roll", roll, "Roll about the optical axis, radians")->capture_default_str();
  render->add_option("--sigma", sigma, "Pixel noise")->capture_default_str();
  render->add_option("--occlusion", occlusion, "Occluded fraction of in-frame dots")->capture_default_str();
  render->add_option("--seed", render_seed, "Noise seed")->capture_default_str();
  render->add_option("--out", render_out, "Output frame file (stdout when omitted)");

  auto* det = mk->add_subcommand("detect", "Detect registered patterns in a frame");
  std::string table_path, frame_path;
  det->add_option("--table", table_path, "Pattern file or array of patterns")->required();
  det->add_option("--frame", frame_path, "Observed frame JSON")->required();

  auto* bench = mk->add_subcommand("bench", "Detection rate, accuracy and latency over synthetic frames");
  markers::BenchParams bp;
  bench->add_option("--frames", bp.frames, "Frame count")->capture_default_str();
  bench->add_option("--seed", bp.seed, "Seed")->capture_default_str();
  bench->add_option("--occlusion", bp.occlusion, "Occluded fraction")->capture_default_str();
  bench->add_option("--sigma", bp.noise_sigma_px, "Pixel noise")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      so.map_path = serve_map;
      so.log_dir = serve_logs;
      so.defaults.clock = service::clock_mode_from_string(clock);
      server::Server srv(so);
      srv.run_until_signal();
    } else if (*sim) {
      const auto cohort = bots::make_cohort(teams, policy, seed);
      const auto run = bots::run_bot_cohort(cohort, sim_out, sim_map);
      std::printf("%zu logs in %s (%.2f s)\n", run.logs.size(), sim_out.c_str(), run.seconds);
    } else if (*rep) {
      const auto r = service::replay(log_path);
      std::printf("seq %lld\nsha256 %s\n%s\n", static_cast<long long>(r.last_seq), r.hash.c_str(),
                  r.verified ? "verified" : "unterminated (no trailer)");
    } else if (*met) {
      const auto report = pipeline::analyze_logs(met_logs);
      pipeline::write_report(report, met_out);
      std::printf("%zu teams -> %s\n", report.rows.size(), met_out.c_str());
    } else if (*gen) {
      write_json(gen_out, markers::generate_pattern(id, dots, bounds, gen_seed));
    } else if (*render) {
      const auto patterns = read_patterns(render_pattern);
      markers::RenderParams rp;
      rp.noise_sigma_px = sigma;
      rp.occlusion = occlusion;
      rp.seed = render_seed;
      const auto& p = patterns.front();
      const Pose3D pose =
          look_at_sheet({p.bounds.width / 2, p.bounds.height / 2}, distance, tilt, azimuth, roll);
      write_json(render_out, markers::render_view(p, pose, {}, rp).frame);
    } else if (*det) {
      const auto table = markers::build_table(read_patterns(table_path));
      const auto frame = read_json(frame_path).get<markers::ObservedFrame>();
      json out = json::array();
      for (const auto& d : markers::detect(frame, table, {})) {
        out.push_back({{"marker", d.marker},
                       {"inliers", d.inlier_count},
                       {"inlier_ratio", d.inlier_ratio},
                       {"votes", d.votes},
                       {"pose", pose_json(d.pose)}});
      }
      write_json("", out);
    } else if (*bench) {
      const auto r = markers::run_bench(bp);
      std::printf("frames %d\ndetection rate %.4f\nfalse detections %d\ninlier rms %.3f px\n"
                  "median latency %.2f ms\nworst latency %.2f ms\n",
                  r.frames, r.detection_rate, r.false_detections, r.inlier_rms_px, r.median_ms, r.worst_ms);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

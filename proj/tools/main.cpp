// Command-line front end: train, faceoff, tournament, replay rendering,
// gradient checks and scenario validation.

#include <cstdio>
#include <tuple>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gamf/config.hpp"
#include "gamf/estimators.hpp"
#include "gamf/evaluator.hpp"
#include "gamf/trainer.hpp"

namespace fs = std::filesystem;
using namespace gamf;

namespace {

int cmd_train(const std::string& config_path, const std::string& alg, uint64_t seed,
              const std::string& out_dir, int epochs_override, int stop_after,
              int checkpoint_interval, const std::string& resume_state) {
  trainer::TrainConfig cfg = trainer::TrainConfig::from_file(
      config_path, learners::kind_from_name(alg), seed, out_dir);
  if (epochs_override > 0) cfg.training.epochs = epochs_override;
  if (stop_after > 0) cfg.stop_after = stop_after;
  if (checkpoint_interval > 0) cfg.training.checkpoint_interval = checkpoint_interval;

  trainer::TrainRun run;
  if (resume_state.empty()) {
    std::cerr << "training " << alg << " on " << engine::kind_name(cfg.scenario.kind) << " for "
              << cfg.training.epochs << " episodes (seed " << seed << ")\n";
    run = trainer::train(cfg);
  } else {
    std::cerr << "resuming " << alg << " from " << resume_state << "\n";
    run = trainer::resume(resume_state, cfg);
  }
  std::cerr << "wrote " << run.metrics_path << " and " << run.checkpoint_paths.size()
            << " checkpoints; state " << run.state_path << "\n";
  return 0;
}

evaluator::ControllerFactory side_factory(const std::string& arg,
                                          const engine::ScenarioSpec& scenario) {
  if (arg == "random") return evaluator::random_controller();
  return evaluator::learner_controller(evaluator::load_policy(arg, scenario));
}

// "ckpt" or "ckpt1,ckpt2" (per-group models) or "random".
std::pair<evaluator::ControllerFactory, evaluator::ControllerFactory> side_factories(
    const std::string& arg, const engine::ScenarioSpec& scenario) {
  const size_t comma = arg.find(',');
  if (comma == std::string::npos) {
    auto f = side_factory(arg, scenario);
    return {f, f};
  }
  return {side_factory(arg.substr(0, comma), scenario),
          side_factory(arg.substr(comma + 1), scenario)};
}

int cmd_faceoff(const std::string& scenario_path, const std::string& a, const std::string& b,
                int rounds, uint64_t seed, int workers, const std::string& out_dir,
                const std::string& replay_path) {
  config::ParsedConfig parsed = config::parse_file(scenario_path);
  evaluator::FaceoffPlan plan;
  plan.scenario = parsed.scenario;
  plan.name_a = "a";
  plan.name_b = "b";
  std::tie(plan.a1, plan.a2) = side_factories(a, parsed.scenario);
  std::tie(plan.b1, plan.b2) = side_factories(b, parsed.scenario);
  plan.rounds = rounds;
  plan.seed_base = seed;
  plan.workers = workers;
  plan.replay_path = replay_path;
  evaluator::FaceoffResult result = evaluator::faceoff(plan);

  std::printf("rounds %d: a wins %d, draws %d, b wins %d\n", result.rounds, result.wins_a,
              result.draws, result.wins_b);
  std::printf("win rate (a) %.4f  halves %.4f/%.4f  std halves %.4f  std bootstrap %.4f\n",
              result.win_rate_a, result.win_rate_half[0], result.win_rate_half[1],
              result.win_rate_std_halves, result.win_rate_std_bootstrap);
  for (const evaluator::HalfResult& h : result.halves)
    std::printf("elo %s %.2f vs %s %.2f\n", h.first.c_str(), h.rating_first.value,
                h.second.c_str(), h.rating_second.value);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "faceoff.csv").string();
    std::ofstream os(path);
    os << "rounds,wins_a,draws,wins_b,win_rate_a,win_rate_half1,win_rate_half2,"
          "std_halves,std_bootstrap\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f", result.rounds,
                  result.wins_a, result.draws, result.wins_b, result.win_rate_a,
                  result.win_rate_half[0], result.win_rate_half[1], result.win_rate_std_halves,
                  result.win_rate_std_bootstrap);
    os << buf << "\n";
    std::cerr << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_tournament(const std::string& scenario_path, const std::vector<std::string>& ckpt_args,
                   int rounds, uint64_t seed, int workers, const std::string& out_dir) {
  config::ParsedConfig parsed = config::parse_file(scenario_path);
  std::vector<evaluator::TournamentEntry> entries;
  for (const std::string& arg : ckpt_args) {
    // name=path1[,path2]
    evaluator::TournamentEntry entry;
    const size_t eq = arg.find('=');
    std::string paths = arg;
    if (eq != std::string::npos) {
      entry.name = arg.substr(0, eq);
      paths = arg.substr(eq + 1);
    } else {
      entry.name = fs::path(paths.substr(0, paths.find(','))).stem().string();
    }
    const size_t comma = paths.find(',');
    entry.ckpt1 = paths.substr(0, comma);
    if (comma != std::string::npos) entry.ckpt2 = paths.substr(comma + 1);
    entries.push_back(std::move(entry));
  }
  evaluator::TournamentResult result =
      evaluator::tournament(entries, parsed.scenario, rounds, seed, workers, out_dir);
  for (const evaluator::TournamentRow& row : result.rating_rows)
    std::printf("%s %.2f vs %s %.2f\n", row.algorithm1.c_str(), row.score1,
                row.algorithm2.c_str(), row.score2);
  std::cerr << "wrote " << result.ratings_path << " and " << result.win_matrix_path << "\n";
  return 0;
}

int cmd_replay(const std::string& log_path, const std::string& frames_dir) {
  const std::vector<std::string> frames = evaluator::render_replay(log_path, frames_dir);
  std::cerr << "wrote " << frames.size() << " frames to " << frames_dir << "\n";
  return 0;
}

int cmd_gradcheck(int seeds) {
  const auto rows = estimators::gradcheck_suite(seeds);
  bool all_pass = true;
  double worst = 0.0;
  for (const auto& row : rows) {
    const double err = row.report.max_rel_err();
    worst = std::max(worst, err);
    all_pass = all_pass && row.report.pass();
    std::printf("%-16s seed %llu  max_rel_err %.3e  %s\n", row.name.c_str(),
                static_cast<unsigned long long>(row.seed), err,
                row.report.pass() ? "ok" : "FAIL");
  }
  std::printf("gradcheck %s (worst %.3e over %zu checks)\n", all_pass ? "passed" : "FAILED",
              worst, rows.size());
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

int cmd_validate(const std::string& config_path) {
  config::ParsedConfig parsed = config::parse_file(config_path);
  std::printf("%s: ok (%s, %dx%d, teams %s:%d vs %s:%d, L=%d, F=%d)\n", config_path.c_str(),
              engine::kind_name(parsed.scenario.kind).c_str(), parsed.scenario.map_width,
              parsed.scenario.map_height, parsed.scenario.teams[0].name.c_str(),
              parsed.scenario.teams[0].count, parsed.scenario.teams[1].name.c_str(),
              parsed.scenario.teams[1].count, parsed.scenario.action_count(),
              parsed.scenario.feature_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridworld mean-field MARL: training, faceoffs and tooling"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "self-play training run");
  std::string config_path, alg, out_dir, resume_state;
  uint64_t seed = 1;
  int epochs_override = 0, stop_after = 0, checkpoint_interval = 0;
  train->add_option("--config", config_path, "scenario/training config file")->required();
  train->add_option("--alg", alg, "mfq | mfac | pomfq_for | gamfq")->required();
  train->add_option("--seed", seed, "run seed");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--epochs", epochs_override, "override the configured episode count");
  train->add_option("--stop-after", stop_after, "pause after this many episodes");
  train->add_option("--checkpoint-interval", checkpoint_interval,
                    "write checkpoint pairs every N episodes");
  train->add_option("--resume", resume_state, "training-state file to continue from");

  auto* faceoff = app.add_subcommand("faceoff", "pit two checkpoints against each other");
  std::string scenario_path, side_a, side_b, faceoff_out, replay_path;
  int rounds = 1000, workers = 1;
  uint64_t faceoff_seed = 0;
  faceoff->add_option("--scenario", scenario_path, "scenario config file")->required();
  faceoff->add_option("--a", side_a, "checkpoint, 'ckpt1,ckpt2' group pair, or 'random'")
      ->required();
  faceoff->add_option("--b", side_b, "checkpoint, 'ckpt1,ckpt2' group pair, or 'random'")
      ->required();
  faceoff->add_option("--rounds", rounds, "number of rounds (even)");
  faceoff->add_option("--seed", faceoff_seed, "seed base");
  faceoff->add_option("--workers", workers, "parallel rounds");
  faceoff->add_option("--out", faceoff_out, "directory for faceoff.csv");
  faceoff->add_option("--save-replay", replay_path, "write round 0 as a replay log");

  auto* tournament = app.add_subcommand("tournament", "round-robin faceoffs with ELO tables");
  std::string t_scenario, t_out = "tournament_out";
  std::vector<std::string> ckpts;
  int t_rounds = 1000, t_workers = 1;
  uint64_t t_seed = 0;
  tournament->add_option("--scenario", t_scenario, "scenario config file")->required();
  tournament->add_option("--ckpt", ckpts, "name=ckpt1[,ckpt2] (repeatable)")->required();
  tournament->add_option("--rounds", t_rounds, "rounds per pairing (even)");
  tournament->add_option("--seed", t_seed, "seed base");
  tournament->add_option("--workers", t_workers, "parallel rounds");
  tournament->add_option("--out", t_out, "output directory");

  auto* replay = app.add_subcommand("replay", "render a replay log to P6 frames");
  std::string log_path, frames_dir;
  replay->add_option("--log", log_path, "replay log file")->required();
  replay->add_option("--frames", frames_dir, "output frame directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  int gc_seeds = 5;
  gradcheck->add_option("--seeds", gc_seeds, "number of random seeds");

  auto* validate = app.add_subcommand("validate", "parse and validate a config file");
  std::string v_config;
  validate->add_option("--config", v_config, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed())
      return cmd_train(config_path, alg, seed, out_dir, epochs_override, stop_after,
                       checkpoint_interval, resume_state);
    if (faceoff->parsed())
      return cmd_faceoff(scenario_path, side_a, side_b, rounds, faceoff_seed, workers,
                         faceoff_out, replay_path);
    if (tournament->parsed())
      return cmd_tournament(t_scenario, ckpts, t_rounds, t_seed, t_workers, t_out);
    if (replay->parsed()) return cmd_replay(log_path, frames_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seeds);
    if (validate->parsed()) return cmd_validate(v_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

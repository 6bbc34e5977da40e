#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gamf/engine.hpp"
#include "gamf/learners.hpp"

namespace gamf::evaluator {

struct Rating {
  double value = 1000.0;
  int games = 0;
  double k = 32.0;
};

enum class Outcome { win, draw, loss };  // from side 1's point of view

// E1 = 1 / (1 + 10^((R2-R1)/400)), E2 = 1 - E1.
std::pair<double, double> expected_scores(double r1, double r2);
std::pair<Rating, Rating> elo_update(Rating r1, Rating r2, Outcome side1);

// Ordinary least squares fit; needs at least two distinct x values.
std::pair<double, double> fit_least_squares(const std::vector<std::pair<double, double>>& pts);

// A per-round team policy. Observations are computed once per step by the
// driver and shared between both controllers.
class TeamController {
 public:
  virtual ~TeamController() = default;
  virtual void begin_episode(const engine::WorldState& world, int team, uint64_t round_key) = 0;
  virtual void select_actions(const engine::WorldState& world,
                              const std::vector<engine::ObservationView>& obs,
                              std::vector<int>& actions) = 0;
  virtual void after_step(const engine::WorldState& world_after,
                          const std::vector<engine::ObservationView>& obs_before) = 0;
};

using ControllerFactory = std::function<std::unique_ptr<TeamController>()>;

// Greedy (eps = 0, argmax-over-Q) play of a trained learner. The learner is
// shared read-only across rounds.
ControllerFactory learner_controller(std::shared_ptr<learners::Learner> learner);
ControllerFactory random_controller();

struct FaceoffPlan {
  engine::ScenarioSpec scenario;
  std::string name_a = "a";
  std::string name_b = "b";
  // Group models: the first half plays a1 vs b2, the second b1 vs a2.
  ControllerFactory a1, a2, b1, b2;
  int rounds = 1000;
  uint64_t seed_base = 0;
  int workers = 1;
  std::string replay_path;  // when set, round 0 writes a replay log here
};

struct HalfResult {
  std::string first, second;  // participant labels, e.g. "gamfq-1"
  int wins_first = 0, draws = 0, wins_second = 0;
  Rating rating_first, rating_second;  // sequential ELO over the half
};

struct FaceoffResult {
  int rounds = 0;
  int wins_a = 0, draws = 0, wins_b = 0;
  std::vector<int8_t> round_outcome;  // +1 side a, 0 draw, -1 side b
  double win_rate_a = 0.0;
  double win_rate_half[2] = {0.0, 0.0};
  double win_rate_std_halves = 0.0;
  double win_rate_std_bootstrap = 0.0;
  HalfResult halves[2];
};

FaceoffResult faceoff(const FaceoffPlan& plan);

struct TournamentEntry {
  std::string name;
  std::string ckpt1, ckpt2;  // group models; may be the same file
};

struct TournamentRow {
  std::string algorithm1, algorithm2;
  double score1 = 0.0, score2 = 0.0;
};

struct TournamentResult {
  std::vector<std::string> names;
  std::vector<TournamentRow> rating_rows;          // two per pair, table-style
  std::vector<std::vector<double>> win_matrix;     // wins of row vs col (draws = 0.5)
  std::vector<FaceoffResult> faceoffs;             // per unordered pair, (i<j) order
  std::string ratings_path, win_matrix_path;
};

TournamentResult tournament(const std::vector<TournamentEntry>& entries,
                            const engine::ScenarioSpec& scenario, int rounds,
                            uint64_t seed_base, int workers, const std::string& out_dir);

// Loads a learner checkpoint and validates it against the scenario.
std::shared_ptr<learners::Learner> load_policy(const std::string& ckpt_path,
                                               const engine::ScenarioSpec& scenario);

// Informational report: per (episode, step, agent), the L-infinity gap
// between the masked mean over selected neighbours and the full-population
// mean action, plus the neighbour count and the theoretical bound at
// delta = 0.05. No pass/fail semantics.
void mean_action_gap_report(std::shared_ptr<learners::Learner> learner,
                            const engine::ScenarioSpec& scenario, int episodes,
                            uint64_t seed_base, const std::string& out_path);

// Re-simulates a replay log and writes one P6 frame per step plus an
// index file listing them.
std::vector<std::string> render_replay(const std::string& log_path,
                                       const std::string& frames_dir);

}  // namespace gamf::evaluator

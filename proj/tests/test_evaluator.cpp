#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gamf/evaluator.hpp"
#include "gamf/trainer.hpp"

using namespace gamf;
using namespace gamf::evaluator;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

engine::ScenarioSpec tiny_scenario(int per_team = 2) {
  engine::ScenarioSpec s = engine::ScenarioSpec::multibattle_default();
  s.map_width = 12;
  s.map_height = 12;
  s.teams[0].count = per_team;
  s.teams[1].count = per_team;
  s.episode_length = 8;
  s.max_visible_neighbors = 4;
  return s;
}

// Always picks action 0 (stay).
class StayController final : public TeamController {
 public:
  void begin_episode(const engine::WorldState&, int team, uint64_t) override { team_ = team; }
  void select_actions(const engine::WorldState& world,
                      const std::vector<engine::ObservationView>&,
                      std::vector<int>& actions) override {
    for (const engine::AgentState& a : world.agents)
      if (a.alive && a.team_id == team_) actions[a.agent_id] = 0;
  }
  void after_step(const engine::WorldState&, const std::vector<engine::ObservationView>&) override {}

 private:
  int team_ = 0;
};

// Attacks whenever an enemy covers an attack cell, otherwise takes the
// legal move that most reduces the distance to the nearest enemy.
class HunterController final : public TeamController {
 public:
  void begin_episode(const engine::WorldState&, int team, uint64_t) override { team_ = team; }
  void select_actions(const engine::WorldState& world,
                      const std::vector<engine::ObservationView>&,
                      std::vector<int>& actions) override {
    for (const engine::AgentState& a : world.agents) {
      if (!a.alive || a.team_id != team_) continue;
      actions[a.agent_id] = pick(world, a);
    }
  }
  void after_step(const engine::WorldState&, const std::vector<engine::ObservationView>&) override {}

 private:
  int team_ = 0;

  int pick(const engine::WorldState& world, const engine::AgentState& me) const {
    const engine::AgentClass& cls = world.agent_class(me.agent_id);
    for (size_t k = 0; k < cls.attack_offsets.size(); ++k) {
      const int tx = me.x + cls.attack_offsets[k].dx;
      const int ty = me.y + cls.attack_offsets[k].dy;
      if (tx < 0 || ty < 0 || tx >= world.spec.map_width || ty >= world.spec.map_height) continue;
      const int occ = world.cell(tx, ty);
      if (occ >= 0 && world.agents[occ].team_id != team_)
        return static_cast<int>(cls.move_offsets.size() + k);
    }
    // nearest living enemy
    double best_d = 1e18;
    int enemy = -1;
    for (const engine::AgentState& b : world.agents) {
      if (!b.alive || b.team_id == team_) continue;
      const double dx = world.center_x(b.agent_id) - world.center_x(me.agent_id);
      const double dy = world.center_y(b.agent_id) - world.center_y(me.agent_id);
      if (dx * dx + dy * dy < best_d) {
        best_d = dx * dx + dy * dy;
        enemy = b.agent_id;
      }
    }
    if (enemy < 0) return 0;
    int best_action = 0;
    double best_after = 1e18;
    for (size_t k = 0; k < cls.move_offsets.size(); ++k) {
      const int nx = me.x + cls.move_offsets[k].dx;
      const int ny = me.y + cls.move_offsets[k].dy;
      if (nx < 0 || ny < 0 || nx + cls.footprint_side > world.spec.map_width ||
          ny + cls.footprint_side > world.spec.map_height)
        continue;
      bool blocked = false;
      for (int yy = ny; yy < ny + cls.footprint_side && !blocked; ++yy)
        for (int xx = nx; xx < nx + cls.footprint_side && !blocked; ++xx) {
          const int occ = world.cell(xx, yy);
          blocked = occ != -1 && occ != me.agent_id;
        }
      if (blocked) continue;
      const double cx = nx + (cls.footprint_side - 1) * 0.5;
      const double cy = ny + (cls.footprint_side - 1) * 0.5;
      const double dx = world.center_x(enemy) - cx;
      const double dy = world.center_y(enemy) - cy;
      const double d = dx * dx + dy * dy;
      if (d < best_after) {
        best_after = d;
        best_action = static_cast<int>(k);
      }
    }
    return best_action;
  }
};

ControllerFactory stay_factory() {
  return []() { return std::make_unique<StayController>(); };
}
ControllerFactory hunter_factory() {
  return []() { return std::make_unique<HunterController>(); };
}

}  // namespace

TEST_CASE("elo: symmetric expectations and the +-16 equal-rating swing") {
  const auto [e1, e2] = expected_scores(1000.0, 1000.0);
  CHECK(e1 == doctest::Approx(0.5));
  CHECK(e2 == doctest::Approx(0.5));

  Rating r1, r2;  // both 1000, K = 32
  auto [n1, n2] = elo_update(r1, r2, Outcome::win);
  CHECK(n1.value == doctest::Approx(1016.0));
  CHECK(n2.value == doctest::Approx(984.0));
  CHECK(n1.games == 1);
}

TEST_CASE("elo: zero-sum and normalized expectations on random pairs") {
  RngStream rng(3);
  for (int i = 0; i < 10000; ++i) {
    Rating r1, r2;
    r1.value = 400.0 + rng.next_double() * 3000.0;
    r2.value = 400.0 + rng.next_double() * 3000.0;
    const auto [e1, e2] = expected_scores(r1.value, r2.value);
    CHECK(std::abs(e1 + e2 - 1.0) < 1e-12);
    const Outcome o = static_cast<Outcome>(rng.next_below(3));
    auto [n1, n2] = elo_update(r1, r2, o);
    CHECK((n1.value - r1.value) + (n2.value - r2.value) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("fit_least_squares: exact fits and the normal-equation oracle") {
  std::vector<std::pair<double, double>> line;
  for (int x = 0; x <= 5; ++x) line.emplace_back(x, 2.0 * x + 1.0);
  auto [m, b] = fit_least_squares(line);
  CHECK(m == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b == doctest::Approx(1.0).epsilon(1e-12));

  // symmetric residuals around a line recover that line
  std::vector<std::pair<double, double>> sym{{0, 1}, {0, -1}, {2, 3}, {2, 1}};
  auto [ms, bs] = fit_least_squares(sym);
  CHECK(ms == doctest::Approx(1.0));
  CHECK(bs == doctest::Approx(0.0));

  // oracle: closed-form normal equations computed independently
  RngStream rng(7);
  std::vector<std::pair<double, double>> cloud;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_double() * 10.0;
    const double y = 3.0 * x - 2.0 + (rng.next_double() - 0.5);
    cloud.emplace_back(x, y);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double om = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double ob = (sy - om * sx) / n;
  auto [mc, bc] = fit_least_squares(cloud);
  CHECK(std::abs(mc - om) < 1e-10);
  CHECK(std::abs(bc - ob) < 1e-10);

  // residual orthogonality
  double sum_r = 0.0, sum_xr = 0.0;
  for (const auto& [x, y] : cloud) {
    const double r = y - (mc * x + bc);
    sum_r += r;
    sum_xr += x * r;
  }
  CHECK(std::abs(sum_r) < 1e-9);
  CHECK(std::abs(sum_xr) < 1e-9);

  CHECK_THROWS_AS(fit_least_squares({{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_least_squares({{1, 1}, {1, 2}}), std::invalid_argument);
}

TEST_CASE("faceoff: scripted hunter beats the scripted stayer every round") {
  engine::ScenarioSpec s = tiny_scenario(1);
  s.map_width = 14;
  s.map_height = 14;
  s.episode_length = 60;
  FaceoffPlan plan;
  plan.scenario = s;
  plan.name_a = "hunter";
  plan.name_b = "stay";
  plan.a1 = plan.a2 = hunter_factory();
  plan.b1 = plan.b2 = stay_factory();
  plan.rounds = 10;
  plan.seed_base = 3;
  FaceoffResult result = faceoff(plan);
  CHECK(result.wins_a == 10);
  CHECK(result.wins_b == 0);
  CHECK(result.draws == 0);
  CHECK(result.win_rate_a == doctest::Approx(1.0));
  // rating moved in the right direction in both halves
  CHECK(result.halves[0].rating_first.value > result.halves[0].rating_second.value);
  CHECK(result.halves[1].rating_first.value < result.halves[1].rating_second.value);
}

TEST_CASE("faceoff: a policy against itself stays near a half win rate") {
  auto learner = std::make_shared<learners::Learner>(
      [] {
        learners::LearnerConfig cfg;
        engine::ScenarioSpec s = tiny_scenario();
        cfg.kind = learners::LearnerKind::mfq;
        cfg.feature_count = s.feature_count();
        cfg.action_count = s.action_count();
        cfg.hidden = 8;
        return cfg;
      }(),
      /*init_seed=*/42);
  FaceoffPlan plan;
  plan.scenario = tiny_scenario();
  plan.a1 = plan.a2 = learner_controller(learner);
  plan.b1 = plan.b2 = learner_controller(learner);
  plan.rounds = 100;
  plan.seed_base = 11;
  FaceoffResult result = faceoff(plan);
  CHECK(result.win_rate_a >= 0.35);
  CHECK(result.win_rate_a <= 0.65);
  CHECK(result.wins_a + result.draws + result.wins_b == 100);
}

TEST_CASE("faceoff: deterministic across repeats and worker counts") {
  FaceoffPlan plan;
  plan.scenario = tiny_scenario();
  plan.a1 = plan.a2 = random_controller();
  plan.b1 = plan.b2 = random_controller();
  plan.rounds = 24;
  plan.seed_base = 17;
  plan.workers = 1;
  FaceoffResult serial = faceoff(plan);
  FaceoffResult again = faceoff(plan);
  plan.workers = 4;
  FaceoffResult parallel = faceoff(plan);
  CHECK(serial.round_outcome == again.round_outcome);
  CHECK(serial.round_outcome == parallel.round_outcome);
  CHECK(serial.win_rate_a == parallel.win_rate_a);

  // different seeds shuffle the outcomes (entropy check)
  plan.seed_base = 18;
  FaceoffResult other = faceoff(plan);
  CHECK(other.round_outcome != serial.round_outcome);
  bool varied = false;
  for (int8_t o : serial.round_outcome) varied |= o != serial.round_outcome[0];
  CHECK(varied);
}

TEST_CASE("tournament: pair counting and emitted tables") {
  TempDir train_dir("gamf_tourn_train");
  TempDir out_dir("gamf_tourn_out");

  // two tiny checkpoints of different kinds
  trainer::TrainConfig cfg1;
  cfg1.scenario = tiny_scenario();
  cfg1.training.epochs = 1;
  cfg1.training.minibatch = 4;
  cfg1.training.buffer_capacity = 64;
  cfg1.training.hidden = 8;
  cfg1.kind = learners::LearnerKind::mfq;
  cfg1.seed = 31;
  cfg1.out_dir = train_dir.str() + "/mfq";
  trainer::TrainRun r1 = trainer::train(cfg1);

  trainer::TrainConfig cfg2 = cfg1;
  cfg2.kind = learners::LearnerKind::pomfq_for;
  cfg2.seed = 32;
  cfg2.out_dir = train_dir.str() + "/pomfq";
  trainer::TrainRun r2 = trainer::train(cfg2);

  std::vector<TournamentEntry> entries{
      {"mfq", r1.checkpoint_paths[0], r1.checkpoint_paths[1]},
      {"pomfq_for", r2.checkpoint_paths[0], r2.checkpoint_paths[1]},
  };
  TournamentResult result =
      tournament(entries, tiny_scenario(), /*rounds=*/4, /*seed=*/5, /*workers=*/1,
                 out_dir.str());
  CHECK(result.faceoffs.size() == 1);  // C(2,2) pairs
  CHECK(result.rating_rows.size() == 2);
  CHECK(result.rating_rows[0].algorithm1 == "mfq-1");
  CHECK(result.rating_rows[0].algorithm2 == "pomfq_for-2");
  CHECK(result.rating_rows[1].algorithm1 == "pomfq_for-1");
  CHECK(result.rating_rows[1].algorithm2 == "mfq-2");
  // every game lands in the win matrix: wins + 0.5 draws on both sides sum
  // to the number of rounds
  CHECK(result.win_matrix[0][1] + result.win_matrix[1][0] == doctest::Approx(4.0));

  std::ifstream ratings(result.ratings_path);
  std::string line;
  std::getline(ratings, line);
  CHECK(line == "algorithm1,algorithm2,score1,score2");
  int rows = 0;
  while (std::getline(ratings, line)) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(result.win_matrix_path));

  CHECK_THROWS_AS(tournament({entries[0]}, tiny_scenario(), 4, 5, 1, ""),
                  std::invalid_argument);
  // checkpoints from a different scenario are rejected
  engine::ScenarioSpec other = tiny_scenario();
  other.map_width = 16;
  CHECK_THROWS_WITH_AS(load_policy(r1.checkpoint_paths[0], other),
                       doctest::Contains("different scenario"), std::runtime_error);

  // three entrants: C(3,2) = 3 faceoffs, and each participant plays
  // rounds x (n-1) games in total
  std::vector<TournamentEntry> three = entries;
  three.push_back({"mfq2", r1.checkpoint_paths[1], r1.checkpoint_paths[0]});
  TournamentResult t3 = tournament(three, tiny_scenario(), /*rounds=*/2, /*seed=*/6, 1, "");
  CHECK(t3.faceoffs.size() == 3);
  CHECK(t3.rating_rows.size() == 6);
  for (int i = 0; i < 3; ++i) {
    double games = 0.0;
    for (int j = 0; j < 3; ++j) games += t3.win_matrix[i][j] + t3.win_matrix[j][i];
    CHECK(games == doctest::Approx(2.0 * 2));  // rounds x (n-1)
  }
}

TEST_CASE("gap report: row accounting and well-formed columns") {
  TempDir dir("gamf_gap");
  // 2v2 on a 28x28 map with a 4-step horizon: at damage 2 vs 10 hp nobody
  // can die, so every agent reports on every step.
  engine::ScenarioSpec s = engine::ScenarioSpec::multibattle_default();
  s.teams[0].count = 2;
  s.teams[1].count = 2;
  s.episode_length = 4;
  s.max_visible_neighbors = 4;

  learners::LearnerConfig cfg;
  cfg.kind = learners::LearnerKind::gamfq;
  cfg.feature_count = s.feature_count();
  cfg.action_count = s.action_count();
  cfg.hidden = 8;
  cfg.scenario_hash = s.hash();
  auto learner = std::make_shared<learners::Learner>(cfg, 55);

  const std::string path = dir.str() + "/gap.csv";
  mean_action_gap_report(learner, s, /*episodes=*/3, /*seed=*/9, path);

  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "episode,step,agent,neighbors,selected,gap_linf,bound_delta_0.05");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    REQUIRE(cols.size() >= 6);
    const double gap = std::stod(cols[5]);
    CHECK(gap >= 0.0);
    CHECK(gap <= 1.0);
    const int neighbors = std::stoi(cols[3]);
    const int selected = std::stoi(cols[4]);
    CHECK(selected <= neighbors);
    if (neighbors > 0) {
      REQUIRE(cols.size() == 7);
      CHECK(std::stod(cols[6]) > 0.0);
    }
  }
  CHECK(rows == 3 * 4 * 4);  // episodes x steps x agents, no deaths possible

  learners::LearnerConfig not_gamfq = cfg;
  not_gamfq.kind = learners::LearnerKind::mfq;
  CHECK_THROWS_AS(mean_action_gap_report(std::make_shared<learners::Learner>(not_gamfq, 1), s,
                                         1, 9, path),
                  std::invalid_argument);
}

TEST_CASE("render_replay: one frame per step, byte-identical on re-render") {
  TempDir dir("gamf_render");
  engine::ScenarioSpec s = tiny_scenario();
  s.episode_length = 10;

  FaceoffPlan plan;
  plan.scenario = s;
  plan.a1 = plan.a2 = stay_factory();
  plan.b1 = plan.b2 = stay_factory();
  plan.rounds = 2;
  plan.seed_base = 77;
  plan.replay_path = dir.str() + "/round0.rpl";
  faceoff(plan);
  REQUIRE(fs::exists(plan.replay_path));

  const std::string frames1 = dir.str() + "/frames1";
  const std::string frames2 = dir.str() + "/frames2";
  std::vector<std::string> f1 = render_replay(plan.replay_path, frames1);
  std::vector<std::string> f2 = render_replay(plan.replay_path, frames2);
  CHECK(f1.size() == 10);
  REQUIRE(f1.size() == f2.size());
  for (size_t i = 0; i < f1.size(); ++i) {
    std::ifstream a(f1[i], std::ios::binary), b(f2[i], std::ios::binary);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }
  CHECK(fs::exists(fs::path(frames1) / "index.txt"));
}

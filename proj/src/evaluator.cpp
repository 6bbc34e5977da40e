#include "gamf/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "gamf/replay.hpp"

namespace gamf::evaluator {

namespace fs = std::filesystem;
using learners::Learner;
using learners::LearnerKind;

std::pair<double, double> expected_scores(double r1, double r2) {
  const double e1 = 1.0 / (1.0 + std::pow(10.0, (r2 - r1) / 400.0));
  return {e1, 1.0 - e1};
}

std::pair<Rating, Rating> elo_update(Rating r1, Rating r2, Outcome side1) {
  const auto [e1, e2] = expected_scores(r1.value, r2.value);
  const double s1 = side1 == Outcome::win ? 1.0 : side1 == Outcome::draw ? 0.5 : 0.0;
  const double s2 = 1.0 - s1;
  r1.value += r1.k * (s1 - e1);
  r2.value += r2.k * (s2 - e2);
  r1.games += 1;
  r2.games += 1;
  return {r1, r2};
}

std::pair<double, double> fit_least_squares(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) throw std::invalid_argument("fit_least_squares: need at least 2 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double mx = sx / pts.size(), my = sy / pts.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_least_squares: x values are degenerate");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

namespace {

// Greedy learner policy with the full estimator pipeline: per-agent
// recurrent streams, previous mean actions, per-step refresh.
class LearnerController final : public TeamController {
 public:
  explicit LearnerController(std::shared_ptr<Learner> learner) : learner_(std::move(learner)) {}

  void begin_episode(const engine::WorldState& world, int team, uint64_t round_key) override {
    team_ = team;
    round_key_ = round_key;
    step_ = 0;
    const int n = static_cast<int>(world.agents.size());
    const auto& cfg = learner_->config();
    prev_mean_.assign(n, estimators::uniform_mean(cfg.action_count));
    if (cfg.kind == LearnerKind::gamfq)
      recurrent_.assign(n, estimators::RecurrentState(cfg.hidden));
    messages_.clear();
  }

  void select_actions(const engine::WorldState& world,
                      const std::vector<engine::ObservationView>& obs,
                      std::vector<int>& actions) override {
    const bool gamfq = learner_->config().kind == LearnerKind::gamfq;
    if (gamfq) {
      messages_.clear();
      for (const engine::AgentState& a : world.agents) {
        if (!a.alive) continue;
        messages_[a.agent_id] =
            estimators::encode_obs(learner_->graph_net(), learner_->online(),
                                   obs[a.agent_id].features, recurrent_[a.agent_id]);
      }
    }
    for (const engine::AgentState& a : world.agents) {
      if (!a.alive || a.team_id != team_) continue;
      actions[a.agent_id] = learner_->greedy_action(obs[a.agent_id].features,
                                                    prev_mean_[a.agent_id]);
    }
  }

  void after_step(const engine::WorldState& world_after,
                  const std::vector<engine::ObservationView>& obs_before) override {
    const bool gamfq = learner_->config().kind == LearnerKind::gamfq;
    std::vector<int> executed(world_after.agents.size(), -1);
    for (const engine::AgentState& a : world_after.agents) executed[a.agent_id] = a.last_action;
    for (const engine::AgentState& a : world_after.agents) {
      if (a.team_id != team_) continue;
      // agents that acted this step (alive pre-step) refresh their mean
      if (obs_before[a.agent_id].features.empty()) continue;
      RngStream est(derive_key(round_key_, {rng_tag("est"), static_cast<uint64_t>(step_),
                                            static_cast<uint64_t>(a.agent_id)}));
      const uint64_t mask_key = derive_key(round_key_, {rng_tag("mask"),
                                                        static_cast<uint64_t>(step_),
                                                        static_cast<uint64_t>(a.agent_id)});
      learners::MeanResult mr =
          learner_->compute_mean(a.agent_id, obs_before[a.agent_id], executed,
                                 gamfq ? &messages_ : nullptr, mask_key, est);
      prev_mean_[a.agent_id] = std::move(mr.mean);
    }
    ++step_;
  }

 private:
  std::shared_ptr<Learner> learner_;
  int team_ = 0;
  uint64_t round_key_ = 0;
  int step_ = 0;
  std::vector<estimators::MeanAction> prev_mean_;
  std::vector<estimators::RecurrentState> recurrent_;
  learners::MessageMap messages_;
};

class RandomController final : public TeamController {
 public:
  void begin_episode(const engine::WorldState& world, int team, uint64_t round_key) override {
    team_ = team;
    round_key_ = round_key;
    step_ = 0;
    action_count_ = static_cast<uint32_t>(world.spec.action_count());
  }
  void select_actions(const engine::WorldState& world,
                      const std::vector<engine::ObservationView>&,
                      std::vector<int>& actions) override {
    for (const engine::AgentState& a : world.agents) {
      if (!a.alive || a.team_id != team_) continue;
      RngStream rng(derive_key(round_key_, {rng_tag("random_act"),
                                            static_cast<uint64_t>(step_),
                                            static_cast<uint64_t>(a.agent_id)}));
      actions[a.agent_id] = static_cast<int>(rng.next_below(action_count_));
    }
  }
  void after_step(const engine::WorldState&, const std::vector<engine::ObservationView>&) override {
    ++step_;
  }

 private:
  int team_ = 0;
  uint64_t round_key_ = 0;
  int step_ = 0;
  uint32_t action_count_ = 1;
};

// Plays one seeded round to the end; returns the winning team or nullopt.
std::optional<int> play_round(const engine::ScenarioSpec& scenario, uint64_t world_seed,
                              TeamController& team0, TeamController& team1,
                              uint64_t policy_key0, uint64_t policy_key1,
                              replay::Writer* writer) {
  engine::ScenarioSpec spec = scenario;
  spec.rng_seed = world_seed;
  engine::WorldState world = engine::build_scenario(spec);
  team0.begin_episode(world, 0, policy_key0);
  team1.begin_episode(world, 1, policy_key1);

  const int n = static_cast<int>(world.agents.size());
  std::vector<engine::ObservationView> obs(n);
  std::vector<int> actions(n, -1);
  while (!world.terminal) {
    for (int id = 0; id < n; ++id) {
      obs[id] = engine::ObservationView{};
      if (world.agents[id].alive) obs[id] = engine::observe(world, id);
    }
    std::fill(actions.begin(), actions.end(), -1);
    team0.select_actions(world, obs, actions);
    team1.select_actions(world, obs, actions);
    engine::StepOutcome outcome = engine::step(world, actions);
    if (writer) writer->append(world, actions, outcome);
    team0.after_step(world, obs);
    team1.after_step(world, obs);
  }
  return engine::winner(world);
}

double win_rate(const std::vector<int8_t>& outcomes, int from, int count) {
  double score = 0.0;
  for (int i = from; i < from + count; ++i)
    score += outcomes[i] > 0 ? 1.0 : outcomes[i] == 0 ? 0.5 : 0.0;
  return count > 0 ? score / count : 0.0;
}

}  // namespace

ControllerFactory learner_controller(std::shared_ptr<Learner> learner) {
  return [learner]() { return std::make_unique<LearnerController>(learner); };
}

ControllerFactory random_controller() {
  return []() { return std::make_unique<RandomController>(); };
}

FaceoffResult faceoff(const FaceoffPlan& plan) {
  if (plan.rounds < 2 || plan.rounds % 2 != 0)
    throw std::invalid_argument("faceoff: rounds must be even and >= 2");
  if (!plan.a1 || !plan.a2 || !plan.b1 || !plan.b2)
    throw std::invalid_argument("faceoff: all four controller factories are required");

  FaceoffResult result;
  result.rounds = plan.rounds;
  result.round_outcome.assign(plan.rounds, 0);
  const int half = plan.rounds / 2;

  auto run_round = [&](int r) {
    const bool first_half = r < half;
    // first half: A1 on team 0 vs B2 on team 1; second half: B1 vs A2.
    std::unique_ptr<TeamController> t0 = first_half ? plan.a1() : plan.b1();
    std::unique_ptr<TeamController> t1 = first_half ? plan.b2() : plan.a2();
    const uint64_t world_seed = derive_key(plan.seed_base, {rng_tag("round"),
                                                            static_cast<uint64_t>(r)});
    const uint64_t k0 = derive_key(plan.seed_base, {rng_tag("policy"),
                                                    static_cast<uint64_t>(r), 0});
    const uint64_t k1 = derive_key(plan.seed_base, {rng_tag("policy"),
                                                    static_cast<uint64_t>(r), 1});
    std::unique_ptr<replay::Writer> writer;
    if (r == 0 && !plan.replay_path.empty()) {
      engine::ScenarioSpec spec = plan.scenario;
      spec.rng_seed = world_seed;
      writer = std::make_unique<replay::Writer>(plan.replay_path, spec, world_seed);
    }
    const std::optional<int> w = play_round(plan.scenario, world_seed, *t0, *t1, k0, k1,
                                            writer.get());
    int8_t outcome = 0;  // from side A's point of view
    if (w.has_value()) {
      const bool team0_won = *w == 0;
      const bool a_controls_team0 = first_half;
      outcome = (team0_won == a_controls_team0) ? 1 : -1;
    }
    result.round_outcome[r] = outcome;
  };

  const int workers = std::max(1, plan.workers);
  if (workers == 1) {
    for (int r = 0; r < plan.rounds; ++r) run_round(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (int r = w; r < plan.rounds; r += workers) run_round(r);
      });
    for (std::thread& t : pool) t.join();
  }

  for (int8_t o : result.round_outcome) {
    result.wins_a += o > 0;
    result.draws += o == 0;
    result.wins_b += o < 0;
  }
  result.win_rate_a = win_rate(result.round_outcome, 0, plan.rounds);
  result.win_rate_half[0] = win_rate(result.round_outcome, 0, half);
  result.win_rate_half[1] = win_rate(result.round_outcome, half, half);
  {
    const double m = 0.5 * (result.win_rate_half[0] + result.win_rate_half[1]);
    const double d0 = result.win_rate_half[0] - m;
    const double d1 = result.win_rate_half[1] - m;
    result.win_rate_std_halves = std::sqrt(d0 * d0 + d1 * d1);
  }
  {
    // 10 bootstrap resamples of the per-round outcomes.
    RngStream rng(derive_key(plan.seed_base, {rng_tag("bootstrap")}));
    double sum = 0.0, sq = 0.0;
    const int resamples = 10;
    for (int b = 0; b < resamples; ++b) {
      double score = 0.0;
      for (int i = 0; i < plan.rounds; ++i) {
        const int8_t o = result.round_outcome[rng.next_below(
            static_cast<uint32_t>(plan.rounds))];
        score += o > 0 ? 1.0 : o == 0 ? 0.5 : 0.0;
      }
      const double wr = score / plan.rounds;
      sum += wr;
      sq += wr * wr;
    }
    const double mean = sum / resamples;
    result.win_rate_std_bootstrap = std::sqrt(std::max(0.0, sq / resamples - mean * mean));
  }

  // Sequential ELO per half, both participants starting at 1000.
  for (int h = 0; h < 2; ++h) {
    HalfResult& hr = result.halves[h];
    hr.first = h == 0 ? plan.name_a + "-1" : plan.name_b + "-1";
    hr.second = h == 0 ? plan.name_b + "-2" : plan.name_a + "-2";
    for (int r = h * half; r < (h + 1) * half; ++r) {
      const int8_t o = result.round_outcome[r];
      // outcomes are recorded from A's viewpoint; in half 1 the "first"
      // participant is B1.
      const int8_t first_view = h == 0 ? o : static_cast<int8_t>(-o);
      const Outcome out = first_view > 0 ? Outcome::win
                          : first_view == 0 ? Outcome::draw
                                            : Outcome::loss;
      std::tie(hr.rating_first, hr.rating_second) =
          elo_update(hr.rating_first, hr.rating_second, out);
      hr.wins_first += first_view > 0;
      hr.draws += first_view == 0;
      hr.wins_second += first_view < 0;
    }
  }
  return result;
}

std::shared_ptr<Learner> load_policy(const std::string& ckpt_path,
                                     const engine::ScenarioSpec& scenario) {
  nlohmann::json header;
  auto learner = std::make_shared<Learner>(Learner::load_checkpoint(ckpt_path, &header));
  if (learner->config().scenario_hash != scenario.hash())
    throw std::runtime_error("checkpoint " + ckpt_path + " was trained on a different scenario");
  if (learner->config().action_count != scenario.action_count() ||
      learner->config().feature_count != scenario.feature_count())
    throw std::runtime_error("checkpoint " + ckpt_path + " does not match the scenario shapes");
  return learner;
}

TournamentResult tournament(const std::vector<TournamentEntry>& entries,
                            const engine::ScenarioSpec& scenario, int rounds,
                            uint64_t seed_base, int workers, const std::string& out_dir) {
  if (entries.size() < 2) throw std::invalid_argument("tournament: need at least 2 algorithms");
  TournamentResult result;
  const int n = static_cast<int>(entries.size());
  result.win_matrix.assign(n, std::vector<double>(n, 0.0));

  std::vector<std::pair<ControllerFactory, ControllerFactory>> policies;
  for (const TournamentEntry& e : entries) {
    result.names.push_back(e.name);
    auto p1 = load_policy(e.ckpt1, scenario);
    auto p2 = load_policy(e.ckpt2.empty() ? e.ckpt1 : e.ckpt2, scenario);
    policies.emplace_back(learner_controller(p1), learner_controller(p2));
  }

  int pair_index = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++pair_index) {
      FaceoffPlan plan;
      plan.scenario = scenario;
      plan.name_a = entries[i].name;
      plan.name_b = entries[j].name;
      plan.a1 = policies[i].first;
      plan.a2 = policies[i].second;
      plan.b1 = policies[j].first;
      plan.b2 = policies[j].second;
      plan.rounds = rounds;
      plan.workers = workers;
      plan.seed_base = derive_key(seed_base, {rng_tag("pair"),
                                              static_cast<uint64_t>(pair_index)});
      FaceoffResult fr = faceoff(plan);
      result.win_matrix[i][j] = fr.wins_a + 0.5 * fr.draws;
      result.win_matrix[j][i] = fr.wins_b + 0.5 * fr.draws;
      for (const HalfResult& hr : fr.halves)
        result.rating_rows.push_back(
            {hr.first, hr.second, hr.rating_first.value, hr.rating_second.value});
      result.faceoffs.push_back(std::move(fr));
    }
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    result.ratings_path = (fs::path(out_dir) / "ratings.csv").string();
    std::ofstream rs(result.ratings_path);
    rs << "algorithm1,algorithm2,score1,score2\n";
    for (const TournamentRow& row : result.rating_rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f", row.score1, row.score2);
      rs << row.algorithm1 << "," << row.algorithm2 << "," << buf << "\n";
    }
    result.win_matrix_path = (fs::path(out_dir) / "win_matrix.csv").string();
    std::ofstream wm(result.win_matrix_path);
    wm << "algorithm";
    for (const std::string& name : result.names) wm << "," << name;
    wm << "\n";
    for (int i = 0; i < n; ++i) {
      wm << result.names[i];
      for (int j = 0; j < n; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", result.win_matrix[i][j]);
        wm << "," << buf;
      }
      wm << "\n";
    }
  }
  return result;
}

void mean_action_gap_report(std::shared_ptr<Learner> learner,
                            const engine::ScenarioSpec& scenario, int episodes,
                            uint64_t seed_base, const std::string& out_path) {
  if (learner->config().kind != LearnerKind::gamfq)
    throw std::invalid_argument("mean_action_gap_report: needs a gamfq policy");
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("mean_action_gap_report: cannot open " + out_path);
  os << "episode,step,agent,neighbors,selected,gap_linf,bound_delta_0.05\n";

  const int action_count = scenario.action_count();
  for (int e = 0; e < episodes; ++e) {
    engine::ScenarioSpec spec = scenario;
    spec.rng_seed = derive_key(seed_base, {rng_tag("gap_env"), static_cast<uint64_t>(e)});
    engine::WorldState world = engine::build_scenario(spec);
    const int n = static_cast<int>(world.agents.size());
    const uint64_t round_key = derive_key(seed_base, {rng_tag("gap"),
                                                      static_cast<uint64_t>(e)});

    std::vector<estimators::RecurrentState> recurrent(
        n, estimators::RecurrentState(learner->config().hidden));
    std::vector<estimators::MeanAction> prev_mean(n, estimators::uniform_mean(action_count));
    learners::MessageMap messages;
    std::vector<engine::ObservationView> obs(n);
    std::vector<int> actions(n, -1);

    for (int step = 0; !world.terminal; ++step) {
      const uint64_t st = static_cast<uint64_t>(step);
      messages.clear();
      for (int id = 0; id < n; ++id) {
        if (!world.agents[id].alive) continue;
        obs[id] = engine::observe(world, id);
        messages[id] = estimators::encode_obs(learner->graph_net(), learner->online(),
                                              obs[id].features, recurrent[id]);
      }
      std::fill(actions.begin(), actions.end(), -1);
      std::vector<bool> acted(n, false);
      for (int id = 0; id < n; ++id) {
        if (!world.agents[id].alive) continue;
        RngStream rng(derive_key(round_key, {rng_tag("act"), st, static_cast<uint64_t>(id)}));
        actions[id] = learner->act(obs[id].features, prev_mean[id], /*eps=*/0.0, rng);
        acted[id] = true;
      }
      engine::step(world, actions);
      std::vector<int> executed(n, -1);
      for (int id = 0; id < n; ++id)
        if (acted[id]) executed[id] = world.agents[id].last_action;

      for (int id = 0; id < n; ++id) {
        if (!acted[id]) continue;
        RngStream est(derive_key(round_key, {rng_tag("est"), st, static_cast<uint64_t>(id)}));
        const uint64_t mask_key =
            derive_key(round_key, {rng_tag("mask"), st, static_cast<uint64_t>(id)});
        learners::MeanResult mr =
            learner->compute_mean(id, obs[id], executed, &messages, mask_key, est);
        prev_mean[id] = mr.mean;

        // full-population mean over every other agent that acted this step
        estimators::NeighborActions everyone;
        everyone.action_count = action_count;
        for (int other = 0; other < n; ++other)
          if (other != id && acted[other]) everyone.items.push_back({other, executed[other]});
        const estimators::MeanAction global = estimators::global_mean(everyone);
        double gap = 0.0;
        for (int a = 0; a < action_count; ++a)
          gap = std::max(gap, std::abs(mr.mean[a] - global[a]));
        int selected = 0;
        for (int g : mr.mask.selected) selected += g;
        const int neighbors = static_cast<int>(mr.actions.items.size());
        os << e << "," << step << "," << id << "," << neighbors << "," << selected << ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", gap);
        os << buf << ",";
        if (neighbors > 0) {
          std::snprintf(buf, sizeof(buf), "%.9g",
                        std::sqrt(std::log(2.0 / 0.05) / (2.0 * neighbors)));
          os << buf;
        }
        os << "\n";
      }
    }
  }
}

std::vector<std::string> render_replay(const std::string& log_path,
                                       const std::string& frames_dir) {
  replay::Log log = replay::read_log(log_path);
  fs::create_directories(frames_dir);

  engine::ScenarioSpec spec = log.scenario;
  spec.rng_seed = log.seed;
  engine::WorldState world = engine::build_scenario(spec);
  std::vector<std::string> frames;
  for (const replay::StepRecord& rec : log.steps) {
    std::vector<int> actions(world.agents.size(), -1);
    for (const auto& [id, action] : rec.actions) {
      if (id < 0 || id >= static_cast<int>(actions.size()))
        throw std::runtime_error("render_replay: bad agent id at step " +
                                 std::to_string(rec.step));
      actions[id] = action;
    }
    engine::StepOutcome outcome = engine::step(world, actions);
    for (const auto& [id, reward] : rec.rewards) {
      if (outcome.per_agent_reward[id] != reward)
        throw std::runtime_error("render_replay: reward mismatch at step " +
                                 std::to_string(rec.step) +
                                 " (log does not match this engine build)");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.ppm", rec.step);
    const std::string path = (fs::path(frames_dir) / name).string();
    engine::write_ppm(engine::render_frame(world), path);
    frames.push_back(path);
  }
  std::ofstream index((fs::path(frames_dir) / "index.txt").string());
  for (const std::string& f : frames) index << fs::path(f).filename().string() << "\n";
  return frames;
}

}  // namespace gamf::evaluator

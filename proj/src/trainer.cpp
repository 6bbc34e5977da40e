#include "gamf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace gamf::trainer {

namespace fs = std::filesystem;
using learners::Learner;
using learners::LearnerKind;

namespace {

constexpr int kUpdatePeriod = 4;  // environment steps between minibatch updates
constexpr const char* kStateMagic = "gamf-train-state-1";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct PendingTransition {
  bool active = false;
  learners::Transition t;
};

struct TeamRuntime {
  // gamfq: this team's encoder keeps a recurrent stream per agent id (both
  // teams' agents appear as neighbours).
  std::vector<estimators::RecurrentState> recurrent;
  learners::MessageMap messages;
  void reset(int agent_count, int dim) {
    recurrent.assign(agent_count, estimators::RecurrentState(dim));
    messages.clear();
  }
};

struct Trainer {
  TrainConfig config;
  std::unique_ptr<Learner> team[2];
  int64_t episodes_done = 0;

  uint64_t root_key() const { return derive_key(config.seed, {rng_tag("train")}); }

  void init_learners() {
    for (int t = 0; t < 2; ++t)
      team[t] = std::make_unique<Learner>(config.learner_config(),
                                          derive_key(config.seed, {rng_tag("init"),
                                                                   static_cast<uint64_t>(t)}));
  }

  EpisodeMetrics run_episode(int episode);
  void save_checkpoints(TrainRun& run, int episodes_completed);
  void save_state(TrainRun& run, int episodes_completed);
  void load_state(std::istream& is);
  TrainRun run_range(int first_episode);
};

EpisodeMetrics Trainer::run_episode(int episode) {
  const auto t_start = std::chrono::steady_clock::now();
  const engine::ScenarioSpec& spec = config.scenario;
  const bool gamfq = config.kind == LearnerKind::gamfq;
  const int action_count = spec.action_count();

  learners::ExplorationSchedule schedule{config.training.eps_start, config.training.eps_end,
                                         config.training.epochs};
  const double eps = schedule.at_episode(episode);

  engine::ScenarioSpec episode_spec = spec;
  episode_spec.rng_seed = derive_key(spec.rng_seed, {rng_tag("train_env"), config.seed,
                                                     static_cast<uint64_t>(episode)});
  engine::WorldState world = engine::build_scenario(episode_spec);
  const int n = static_cast<int>(world.agents.size());

  TeamRuntime runtime[2];
  if (gamfq)
    for (int t = 0; t < 2; ++t) runtime[t].reset(n, config.training.hidden);

  std::vector<estimators::MeanAction> prev_mean(n, estimators::uniform_mean(action_count));
  std::vector<PendingTransition> pending(n);
  const uint64_t root = root_key();
  const uint64_t ep = static_cast<uint64_t>(episode);

  EpisodeMetrics metrics;
  metrics.episode = episode;
  metrics.epsilon = eps;
  double loss_sum[2] = {0.0, 0.0};
  int update_rounds[2] = {0, 0};

  std::vector<engine::ObservationView> obs(n);
  std::vector<int> actions(n, -1);

  for (int step = 0; !world.terminal; ++step) {
    const uint64_t st = static_cast<uint64_t>(step);
    // Observe all living agents; finalize last step's pending transitions.
    for (int id = 0; id < n; ++id) {
      if (!world.agents[id].alive) continue;
      obs[id] = engine::observe(world, id);
      if (pending[id].active) {
        pending[id].t.next_obs = obs[id].features;
        team[world.agents[id].team_id]->buffer().push(std::move(pending[id].t));
        pending[id].active = false;
      }
    }

    if (gamfq) {
      for (int t = 0; t < 2; ++t) {
        runtime[t].messages.clear();
        for (int id = 0; id < n; ++id) {
          if (!world.agents[id].alive) continue;
          runtime[t].messages[id] =
              estimators::encode_obs(team[t]->graph_net(), team[t]->online(), obs[id].features,
                                     runtime[t].recurrent[id]);
        }
      }
    }

    std::fill(actions.begin(), actions.end(), -1);
    for (int id = 0; id < n; ++id) {
      if (!world.agents[id].alive) continue;
      RngStream act_rng(derive_key(root, {rng_tag("act"), ep, st, static_cast<uint64_t>(id)}));
      actions[id] =
          team[world.agents[id].team_id]->act(obs[id].features, prev_mean[id], eps, act_rng);
    }

    std::vector<bool> acted(n, false);
    for (int id = 0; id < n; ++id) acted[id] = actions[id] >= 0;
    engine::StepOutcome outcome = engine::step(world, actions);

    std::vector<int> executed(n, -1);
    for (int id = 0; id < n; ++id)
      if (acted[id]) executed[id] = world.agents[id].last_action;

    for (const engine::KillEvent& k : outcome.kill_events)
      metrics.kills[world.agents[k.killer_id].team_id]++;

    for (int id = 0; id < n; ++id) {
      if (!acted[id]) continue;
      const int side = world.agents[id].team_id;
      Learner& learner = *team[side];
      RngStream est_rng(derive_key(root, {rng_tag("est"), ep, st, static_cast<uint64_t>(id)}));
      const uint64_t mask_key =
          derive_key(root, {rng_tag("mask"), ep, st, static_cast<uint64_t>(id)});
      learners::MeanResult mr = learner.compute_mean(
          id, obs[id], executed, gamfq ? &runtime[side].messages : nullptr, mask_key, est_rng);

      learners::Transition tr;
      tr.obs = obs[id].features;
      tr.action = actions[id];
      tr.reward = outcome.per_agent_reward[id];
      tr.mean_action = mr.mean;
      if (gamfq) {
        const int dim = config.training.hidden;
        tr.neighbor_ids.reserve(mr.actions.items.size());
        tr.neighbor_actions.reserve(mr.actions.items.size());
        const nn::Tensor& center = runtime[side].messages.at(id);
        tr.center_message.assign(center.data(), center.data() + center.size());
        tr.neighbor_messages.resize(mr.actions.items.size() * size_t(dim));
        for (size_t i = 0; i < mr.actions.items.size(); ++i) {
          const int nb = mr.actions.items[i].agent_id;
          tr.neighbor_ids.push_back(nb);
          tr.neighbor_actions.push_back(mr.actions.items[i].action);
          const nn::Tensor& m = runtime[side].messages.at(nb);
          std::copy(m.data(), m.data() + m.size(), tr.neighbor_messages.data() + i * size_t(dim));
        }
      }
      prev_mean[id] = std::move(mr.mean);

      const bool died = !world.agents[id].alive;
      if (died || outcome.terminal) {
        tr.terminal = true;
        tr.next_obs.assign(tr.obs.size(), 0.0);
        learner.buffer().push(std::move(tr));
      } else {
        pending[id].active = true;
        pending[id].t = std::move(tr);
      }
    }

    const bool do_update = ((step + 1) % kUpdatePeriod == 0) || world.terminal;
    if (do_update) {
      for (int side = 0; side < 2; ++side) {
        Learner& learner = *team[side];
        if (learner.buffer().size() < learner.config().minibatch) continue;
        const uint64_t ucount = static_cast<uint64_t>(learner.update_count());
        RngStream batch_rng(
            derive_key(root, {rng_tag("batch"), static_cast<uint64_t>(side), ucount}));
        const std::vector<int> idx =
            learner.buffer().sample(learner.config().minibatch, batch_rng);
        const uint64_t noise_key =
            derive_key(root, {rng_tag("train_noise"), static_cast<uint64_t>(side), ucount});
        double loss;
        if (config.kind == LearnerKind::mfac) {
          loss = learner.mfac_update(idx, noise_key).first;
        } else {
          loss = learner.q_update(idx, noise_key);
        }
        if (!std::isfinite(loss)) {
          nlohmann::json dump{{"episode", episode},
                              {"step", step},
                              {"team", side},
                              {"indices", idx},
                              {"loss", loss}};
          const std::string dump_path = (fs::path(config.out_dir) / "nan_dump.json").string();
          std::ofstream(dump_path) << dump.dump(2) << "\n";
          throw std::runtime_error("train: non-finite loss; batch dumped to " + dump_path);
        }
        learner.soft_update_target();
        loss_sum[side] += loss;
        update_rounds[side]++;
      }
    }
  }

  for (int side = 0; side < 2; ++side) {
    metrics.team_reward[side] = world.team_reward[side];
    metrics.survivors[side] = world.survivors(side);
    metrics.loss_mean[side] = update_rounds[side] ? loss_sum[side] / update_rounds[side] : 0.0;
  }
  metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return metrics;
}

void Trainer::save_checkpoints(TrainRun& run, int episodes_completed) {
  const char* names[2] = {"a", "b"};
  for (int side = 0; side < 2; ++side) {
    const std::string path =
        (fs::path(config.out_dir) / (learners::kind_name(config.kind) + "_" + names[side] + "_" +
                                     std::to_string(episodes_completed) + ".ckpt"))
            .string();
    nlohmann::json extras{{"scenario_hash", config.scenario.hash()},
                          {"episode", episodes_completed},
                          {"exploration",
                           {{"episodes_done", episodes_completed},
                            {"total_episodes", config.training.epochs}}},
                          {"team", names[side]}};
    team[side]->save_checkpoint(path, extras);
    run.checkpoint_paths.push_back(path);
  }
}

void Trainer::save_state(TrainRun& run, int episodes_completed) {
  const std::string path =
      (fs::path(config.out_dir) / (learners::kind_name(config.kind) + "_state_" +
                                   std::to_string(episodes_completed) + ".state"))
          .string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("train: cannot write state file " + path);
  nlohmann::json header{{"magic", kStateMagic},
                        {"alg", learners::kind_name(config.kind)},
                        {"seed", config.seed},
                        {"scenario_hash", config.scenario.hash()},
                        {"episodes_done", episodes_completed},
                        {"epochs", config.training.epochs}};
  os << header.dump() << "\n";
  for (int side = 0; side < 2; ++side) {
    team[side]->online().write_full(os);
    team[side]->target().write_full(os);
    team[side]->actor_store().write_full(os);
    team[side]->buffer().write(os);
    const int64_t uc = team[side]->update_count();
    os.write(reinterpret_cast<const char*>(&uc), sizeof(uc));
  }
  if (!os) throw std::runtime_error("train: write failed for " + path);
  run.state_path = path;
}

void Trainer::load_state(std::istream& is) {
  for (int side = 0; side < 2; ++side) {
    nn::ParamStore online = nn::ParamStore::read_full(is);
    nn::ParamStore target = nn::ParamStore::read_full(is);
    nn::ParamStore actor = nn::ParamStore::read_full(is);
    if (!online.same_manifest(team[side]->online()))
      throw std::runtime_error("resume: parameter manifest mismatch");
    team[side]->online() = std::move(online);
    team[side]->target() = std::move(target);
    team[side]->actor_store() = std::move(actor);
    team[side]->buffer().load(is);
    int64_t uc = 0;
    is.read(reinterpret_cast<char*>(&uc), sizeof(uc));
    if (!is) throw std::runtime_error("resume: truncated state file");
    team[side]->set_update_count(uc);
  }
}

TrainRun Trainer::run_range(int first_episode) {
  TrainRun run;
  fs::create_directories(config.out_dir);
  run.metrics_path = (fs::path(config.out_dir) / "metrics.csv").string();
  const uint64_t spec_hash_before = config.scenario.hash();
  const int last_episode = config.stop_after > 0
                               ? std::min(config.stop_after, config.training.epochs)
                               : config.training.epochs;

  std::ofstream metrics;
  if (first_episode == 0) {
    metrics.open(run.metrics_path);
    metrics << metrics_header() << "\n";
  } else {
    metrics.open(run.metrics_path, std::ios::app);
  }
  if (!metrics) throw std::runtime_error("train: cannot open " + run.metrics_path);

  for (int e = first_episode; e < last_episode; ++e) {
    EpisodeMetrics m = run_episode(e);
    run.rows.push_back(m);
    metrics << metrics_row(m) << "\n";
    metrics.flush();
    episodes_done = e + 1;
    const int interval = config.training.checkpoint_interval;
    if (interval > 0 && episodes_done % interval == 0 && episodes_done < last_episode)
      save_checkpoints(run, static_cast<int>(episodes_done));
  }
  save_checkpoints(run, last_episode);
  save_state(run, last_episode);
  if (config.scenario.hash() != spec_hash_before)
    throw std::logic_error("train: scenario spec mutated during the run");
  return run;
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& config_path, learners::LearnerKind kind,
                                   uint64_t seed, const std::string& out_dir) {
  config::ParsedConfig parsed = config::parse_file(config_path);
  TrainConfig c;
  c.scenario = parsed.scenario;
  c.training = parsed.training;
  c.kind = kind;
  c.seed = seed;
  c.out_dir = out_dir;
  return c;
}

learners::LearnerConfig TrainConfig::learner_config() const {
  learners::LearnerConfig lc;
  lc.kind = kind;
  lc.feature_count = scenario.feature_count();
  lc.action_count = scenario.action_count();
  lc.hidden = training.hidden;
  lc.lr = training.lr;
  lc.gamma = training.gamma;
  lc.minibatch = training.minibatch;
  lc.buffer_capacity = training.buffer_capacity;
  lc.scenario_hash = scenario.hash();
  return lc;
}

std::string metrics_header() {
  return "episode,team_a_reward,team_b_reward,team_a_survivors,team_b_survivors,"
         "team_a_kills,team_b_kills,wall_time_s,team_a_loss,team_b_loss,epsilon";
}

std::string metrics_row(const EpisodeMetrics& m) {
  std::ostringstream os;
  os << m.episode << "," << fmt(m.team_reward[0]) << "," << fmt(m.team_reward[1]) << ","
     << m.survivors[0] << "," << m.survivors[1] << "," << m.kills[0] << "," << m.kills[1] << ","
     << fmt(m.wall_time_s) << "," << fmt(m.loss_mean[0]) << "," << fmt(m.loss_mean[1]) << ","
     << fmt(m.epsilon);
  return os.str();
}

TrainRun train(const TrainConfig& config) {
  config.scenario.validate();
  Trainer trainer;
  trainer.config = config;
  trainer.init_learners();
  return trainer.run_range(0);
}

TrainRun resume(const std::string& state_path, const TrainConfig& config) {
  std::ifstream is(state_path, std::ios::binary);
  if (!is) throw std::runtime_error("resume: cannot open " + state_path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("resume: missing state header");
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("magic", "") != kStateMagic)
    throw std::runtime_error("resume: not a training-state file");
  if (header.at("alg").get<std::string>() != learners::kind_name(config.kind))
    throw std::runtime_error("resume: learner kind mismatch");
  if (header.at("scenario_hash").get<uint64_t>() != config.scenario.hash())
    throw std::runtime_error("resume: scenario hash mismatch");
  if (header.at("seed").get<uint64_t>() != config.seed)
    throw std::runtime_error("resume: seed mismatch");
  if (header.at("epochs").get<int>() != config.training.epochs)
    throw std::runtime_error("resume: total epoch count mismatch");

  Trainer trainer;
  trainer.config = config;
  trainer.init_learners();
  trainer.load_state(is);
  trainer.episodes_done = header.at("episodes_done").get<int64_t>();
  return trainer.run_range(static_cast<int>(trainer.episodes_done));
}

}  // namespace gamf::trainer

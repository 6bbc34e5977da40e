#include "gamf/replay.hpp"

#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

namespace gamf::replay {

using nlohmann::json;

namespace {

json scenario_to_json(const engine::ScenarioSpec& s) {
  json teams = json::array();
  for (const auto& t : s.teams)
    teams.push_back({{"name", t.name}, {"class", t.agent_class}, {"count", t.count}});
  const engine::RewardTable& r = s.rewards;
  return json{{"kind", engine::kind_name(s.kind)},
              {"map_width", s.map_width},
              {"map_height", s.map_height},
              {"teams", teams},
              {"episode_length", s.episode_length},
              {"obs_radius", s.obs_radius},
              {"max_visible_neighbors", s.max_visible_neighbors},
              {"food_count", s.food_count},
              {"rewards",
               {{"move_cost", r.move_cost},
                {"attack_empty_cost", r.attack_empty_cost},
                {"attack_hit_reward", r.attack_hit_reward},
                {"kill_reward", r.kill_reward},
                {"food_reward", r.food_reward},
                {"attack_space_cost", r.attack_space_cost},
                {"hit_prey_reward", r.hit_prey_reward},
                {"kill_prey_reward", r.kill_prey_reward},
                {"attacked_penalty", r.attacked_penalty},
                {"death_penalty", r.death_penalty}}}};
}

engine::ScenarioSpec scenario_from_json(const json& j) {
  engine::ScenarioSpec s;
  s.kind = engine::kind_from_name(j.at("kind").get<std::string>());
  s.map_width = j.at("map_width").get<int>();
  s.map_height = j.at("map_height").get<int>();
  s.teams.clear();
  for (const auto& t : j.at("teams"))
    s.teams.push_back({t.at("name").get<std::string>(), t.at("class").get<std::string>(),
                       t.at("count").get<int>()});
  s.episode_length = j.at("episode_length").get<int>();
  s.obs_radius = j.at("obs_radius").get<int>();
  s.max_visible_neighbors = j.at("max_visible_neighbors").get<int>();
  s.food_count = j.at("food_count").get<int>();
  const json& r = j.at("rewards");
  s.rewards.move_cost = r.at("move_cost").get<double>();
  s.rewards.attack_empty_cost = r.at("attack_empty_cost").get<double>();
  s.rewards.attack_hit_reward = r.at("attack_hit_reward").get<double>();
  s.rewards.kill_reward = r.at("kill_reward").get<double>();
  s.rewards.food_reward = r.at("food_reward").get<double>();
  s.rewards.attack_space_cost = r.at("attack_space_cost").get<double>();
  s.rewards.hit_prey_reward = r.at("hit_prey_reward").get<double>();
  s.rewards.kill_prey_reward = r.at("kill_prey_reward").get<double>();
  s.rewards.attacked_penalty = r.at("attacked_penalty").get<double>();
  s.rewards.death_penalty = r.at("death_penalty").get<double>();
  s.validate();
  return s;
}

}  // namespace

struct Writer::Impl {
  std::ofstream os;
};

Writer::Writer(const std::string& path, const engine::ScenarioSpec& spec, uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  impl_->os.open(path);
  if (!impl_->os) throw std::runtime_error("replay::Writer: cannot open " + path);
  json header{{"spec_hash", spec.hash()}, {"seed", seed}, {"scenario", scenario_to_json(spec)}};
  impl_->os << header.dump() << "\n";
}

Writer::~Writer() = default;

void Writer::append(const engine::WorldState& world_after, const std::vector<int>& actions,
                    const engine::StepOutcome& outcome) {
  json acts = json::array();
  json rewards = json::array();
  for (size_t id = 0; id < actions.size(); ++id) {
    if (actions[id] < 0) continue;
    acts.push_back({static_cast<int>(id), actions[id]});
    rewards.push_back({static_cast<int>(id), outcome.per_agent_reward[id]});
  }
  json kills = json::array();
  for (const engine::KillEvent& k : outcome.kill_events)
    kills.push_back({k.killer_id, k.victim_id});
  json survivors = json::array();
  for (size_t team = 0; team < world_after.spec.teams.size(); ++team)
    survivors.push_back(world_after.survivors(static_cast<int>(team)));
  json rec{{"step", world_after.step_index - 1},
           {"actions", acts},
           {"rewards", rewards},
           {"kills", kills},
           {"survivors", survivors}};
  impl_->os << rec.dump() << "\n";
}

void Writer::close() {
  if (impl_->os.is_open()) impl_->os.close();
}

Log read_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_log: cannot open " + path);
  Log log;
  std::string line;
  int line_no = 0;

  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
  };

  if (!std::getline(is, line)) {
    line_no = 1;
    fail("missing header line");
  }
  ++line_no;
  try {
    json header = json::parse(line);
    log.spec_hash = header.at("spec_hash").get<uint64_t>();
    log.seed = header.at("seed").get<uint64_t>();
    log.scenario = scenario_from_json(header.at("scenario"));
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (log.scenario.hash() != log.spec_hash) fail("spec hash does not match embedded scenario");

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    StepRecord rec;
    try {
      json j = json::parse(line);
      rec.step = j.at("step").get<int>();
      for (const auto& a : j.at("actions"))
        rec.actions.emplace_back(a.at(0).get<int>(), a.at(1).get<int>());
      for (const auto& r : j.at("rewards"))
        rec.rewards.emplace_back(r.at(0).get<int>(), r.at(1).get<double>());
      for (const auto& k : j.at("kills"))
        rec.kills.emplace_back(k.at(0).get<int>(), k.at(1).get<int>());
      for (const auto& s : j.at("survivors")) rec.survivors.push_back(s.get<int>());
    } catch (const json::exception& e) {
      fail(std::string("bad step record: ") + e.what());
    }
    if (rec.step != static_cast<int>(log.steps.size()))
      fail("step index out of order (expected " + std::to_string(log.steps.size()) + ")");
    log.steps.push_back(std::move(rec));
  }
  return log;
}

}  // namespace gamf::replay

#include "gamf/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gamf::config {

namespace {

struct ParseState {
  std::string origin;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": " + msg);
  }
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const ParseState& ps, const std::string& v) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    ps.fail("expected integer, got '" + v + "'");
  }
}

double to_double(const ParseState& ps, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    ps.fail("expected number, got '" + v + "'");
  }
}

uint64_t to_u64(const ParseState& ps, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    ps.fail("expected unsigned integer, got '" + v + "'");
  }
}

}  // namespace

ParsedConfig parse_string(const std::string& text, const std::string& origin) {
  ParsedConfig out;
  engine::ScenarioSpec& sc = out.scenario;
  sc.teams.clear();

  bool kind_seen = false;
  bool rewards_overridden = false;
  engine::RewardTable reward_overrides;
  std::vector<std::pair<std::string, double>> reward_keys;  // applied after kind is known

  ParseState ps{origin, 0};
  std::istringstream is(text);
  std::string raw;
  std::string section;
  std::string team_name;

  while (std::getline(is, raw)) {
    ++ps.line_no;
    std::string line = raw;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') ps.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.rfind("agents.", 0) == 0) {
        team_name = section.substr(7);
        if (team_name.empty()) ps.fail("empty team name");
        for (const auto& t : sc.teams)
          if (t.name == team_name) ps.fail("duplicate team section '" + team_name + "'");
        sc.teams.push_back({team_name, "", 0});
      } else if (section != "scenario" && section != "rewards" && section != "training") {
        ps.fail("unknown section [" + section + "]");
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) ps.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) ps.fail("empty key or value");
    if (section.empty()) ps.fail("key outside any section");

    if (section == "scenario") {
      if (key == "kind") {
        sc.kind = engine::kind_from_name(val);
        kind_seen = true;
      } else if (key == "map_width") sc.map_width = to_int(ps, val);
      else if (key == "map_height") sc.map_height = to_int(ps, val);
      else if (key == "episode_length") sc.episode_length = to_int(ps, val);
      else if (key == "obs_radius") sc.obs_radius = to_int(ps, val);
      else if (key == "max_visible_neighbors") sc.max_visible_neighbors = to_int(ps, val);
      else if (key == "food_count") sc.food_count = to_int(ps, val);
      else if (key == "rng_seed") sc.rng_seed = to_u64(ps, val);
      else ps.fail("unknown [scenario] key '" + key + "'");
    } else if (section == "rewards") {
      rewards_overridden = true;
      reward_keys.emplace_back(key, to_double(ps, val));
    } else if (section.rfind("agents.", 0) == 0) {
      engine::TeamSpec& team = sc.teams.back();
      if (key == "class") {
        engine::AgentClass::by_name(val);  // validates
        team.agent_class = val;
      } else if (key == "count") team.count = to_int(ps, val);
      else ps.fail("unknown [agents] key '" + key + "'");
    } else if (section == "training") {
      out.has_training = true;
      TrainingSection& tr = out.training;
      if (key == "epochs") tr.epochs = to_int(ps, val);
      else if (key == "lr") tr.lr = to_double(ps, val);
      else if (key == "gamma") tr.gamma = to_double(ps, val);
      else if (key == "buffer") tr.buffer_capacity = to_int(ps, val);
      else if (key == "minibatch") tr.minibatch = to_int(ps, val);
      else if (key == "hidden") tr.hidden = to_int(ps, val);
      else if (key == "eps_start") tr.eps_start = to_double(ps, val);
      else if (key == "eps_end") tr.eps_end = to_double(ps, val);
      else if (key == "checkpoint_interval") tr.checkpoint_interval = to_int(ps, val);
      else ps.fail("unknown [training] key '" + key + "'");
    }
  }

  ps.line_no = 0;
  if (!kind_seen) ps.fail("missing [scenario] kind");
  sc.rewards = engine::RewardTable::defaults_for(sc.kind);
  if (sc.kind == engine::ScenarioKind::gathering && sc.food_count == 0) sc.food_count = 64;
  if (rewards_overridden) {
    engine::RewardTable& rw = sc.rewards;
    for (const auto& [key, v] : reward_keys) {
      if (key == "move_cost") rw.move_cost = v;
      else if (key == "attack_empty_cost") rw.attack_empty_cost = v;
      else if (key == "attack_hit_reward") rw.attack_hit_reward = v;
      else if (key == "kill_reward") rw.kill_reward = v;
      else if (key == "food_reward") rw.food_reward = v;
      else if (key == "attack_space_cost") rw.attack_space_cost = v;
      else if (key == "hit_prey_reward") rw.hit_prey_reward = v;
      else if (key == "kill_prey_reward") rw.kill_prey_reward = v;
      else if (key == "attacked_penalty") rw.attacked_penalty = v;
      else if (key == "death_penalty") rw.death_penalty = v;
      else ps.fail("unknown [rewards] key '" + key + "'");
    }
  }
  for (const auto& t : sc.teams) {
    if (t.agent_class.empty())
      throw std::runtime_error(origin + ": team '" + t.name + "' is missing a class");
    if (t.count <= 0)
      throw std::runtime_error(origin + ": team '" + t.name + "' needs count >= 1");
  }
  sc.validate();
  return out;
}

ParsedConfig parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str(), path);
}

}  // namespace gamf::config

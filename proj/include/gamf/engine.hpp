#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gamf/rng.hpp"

namespace gamf::engine {

enum class ScenarioKind { multibattle, gathering, predator_prey };

std::string kind_name(ScenarioKind k);
ScenarioKind kind_from_name(const std::string& s);

// Signed payouts; each field is the value added to an agent's reward when
// the matching event fires. Defaults follow the scenario descriptions.
struct RewardTable {
  double move_cost = -0.005;
  double attack_empty_cost = -0.1;
  double attack_hit_reward = 0.2;
  double kill_reward = 200.0;
  double food_reward = 5.0;
  // predator side of predator-prey
  double attack_space_cost = -0.3;
  double hit_prey_reward = 1.0;
  double kill_prey_reward = 100.0;
  // prey side of predator-prey
  double attacked_penalty = -1.0;
  double death_penalty = -0.5;

  static RewardTable defaults_for(ScenarioKind kind);
};

struct Offset {
  int dx = 0, dy = 0;
};

// An agent archetype: footprint, health, movement and attack tables.
// Action ids index move_offsets first, then attack_offsets.
struct AgentClass {
  std::string name;
  int footprint_side = 1;
  int max_hp = 1;
  int attack_damage = 0;
  std::vector<Offset> move_offsets;
  std::vector<Offset> attack_offsets;

  int action_count() const {
    return static_cast<int>(move_offsets.size() + attack_offsets.size());
  }
  bool is_attack(int action) const {
    return action >= static_cast<int>(move_offsets.size());
  }

  static const AgentClass& battle();
  static const AgentClass& predator();
  static const AgentClass& prey();
  static const AgentClass& by_name(const std::string& name);
};

struct TeamSpec {
  std::string name;
  std::string agent_class;  // battle | predator | prey
  int count = 0;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::multibattle;
  int map_width = 28;
  int map_height = 28;
  std::vector<TeamSpec> teams;
  int episode_length = 300;
  RewardTable rewards;
  int obs_radius = 6;
  int max_visible_neighbors = 20;
  int food_count = 0;  // gathering only
  uint64_t rng_seed = 0;

  void validate() const;  // throws std::invalid_argument on violations
  int action_count() const;
  int feature_count() const;  // flattened ObservationView length
  bool has_food() const { return kind == ScenarioKind::gathering; }
  std::string canonical_string() const;
  uint64_t hash() const;

  static ScenarioSpec multibattle_default();
  static ScenarioSpec gathering_default();
  static ScenarioSpec predator_prey_default();
};

struct AgentState {
  int agent_id = -1;
  int team_id = -1;
  bool alive = true;
  int x = 0, y = 0;  // anchor cell (top-left of footprint)
  int hp = 0;
  int last_action = 0;
};

enum class TerminalCause { none, time_limit, team_eliminated };

struct WorldState {
  ScenarioSpec spec;
  int step_index = 0;
  bool terminal = false;
  TerminalCause cause = TerminalCause::none;
  std::vector<AgentState> agents;
  std::vector<int> occupancy;   // map_width * map_height, agent_id or -1
  std::vector<uint8_t> food;    // map_width * map_height flags
  RngStream rng;
  std::vector<double> team_reward;  // cumulative per team

  const AgentClass& agent_class(int agent_id) const;
  const AgentClass& team_class(int team_id) const;
  int cell(int x, int y) const { return occupancy[size_t(y) * spec.map_width + x]; }
  int survivors(int team_id) const;
  double center_x(int agent_id) const;
  double center_y(int agent_id) const;
};

struct NeighborInfo {
  int agent_id = -1;
  int last_action = 0;
  bool same_team = false;
  double distance = 0.0;
};

// Fixed-layout partial observation: self features, then
// max_visible_neighbors neighbour rows (present flag, relative offset,
// health, team flag, last-action one-hot), then 8 food rows when the
// scenario has food. Absent slots stay all-zero.
struct ObservationView {
  std::vector<double> features;
  std::vector<NeighborInfo> neighbors;  // present rows, sorted (distance, id)
};

struct KillEvent {
  int killer_id = -1;
  int victim_id = -1;
};

struct StepOutcome {
  std::vector<double> per_agent_reward;  // indexed by agent_id
  std::vector<KillEvent> kill_events;
  bool terminal = false;
  TerminalCause cause = TerminalCause::none;
};

// Thrown when rejection sampling cannot place all agents.
struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

WorldState build_scenario(const ScenarioSpec& spec);

// Fixed placements for tests and scripted micro-worlds; hp < 0 means full.
struct PlacedAgent {
  int team_id = 0;
  int x = 0, y = 0;
  int hp = -1;
};
WorldState build_world_at(const ScenarioSpec& spec, const std::vector<PlacedAgent>& agents);

ObservationView observe(const WorldState& world, int agent_id);

// joint_actions is indexed by agent_id; entries for dead agents are
// ignored, every living agent must have an action in [0, L).
StepOutcome step(WorldState& world, const std::vector<int>& joint_actions);

// nullopt means draw. Throws std::logic_error on a non-terminal world.
std::optional<int> winner(const WorldState& world);

struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major
};
Image render_frame(const WorldState& world);
void write_ppm(const Image& img, const std::string& path);

// Canonical text dump used for determinism checks.
std::string serialize(const WorldState& world);

}  // namespace gamf::engine

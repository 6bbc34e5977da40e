#include "gamf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gamf::engine {

namespace {

constexpr int kMaxPlacementTries = 2000;
constexpr int kFoodRows = 8;

std::vector<Offset> stay_first_offsets(int reach, bool manhattan, double radius_sq) {
  std::vector<Offset> out;
  out.push_back({0, 0});
  for (int dy = -reach; dy <= reach; ++dy)
    for (int dx = -reach; dx <= reach; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const bool in = manhattan ? (std::abs(dx) + std::abs(dy) <= reach)
                                : (dx * dx + dy * dy <= radius_sq);
      if (in) out.push_back({dx, dy});
    }
  return out;
}

// Ring cells at the 8 compass points of a side-s footprint, row-major.
std::vector<Offset> compass_attacks(int side) {
  return {{-1, -1}, {0, -1}, {side, -1}, {-1, 0}, {side, 0}, {-1, side}, {0, side}, {side, side}};
}

AgentClass make_battle() {
  AgentClass c;
  c.name = "battle";
  c.footprint_side = 2;
  c.max_hp = 10;
  c.attack_damage = 2;
  c.move_offsets = stay_first_offsets(2, /*manhattan=*/true, 0.0);
  c.attack_offsets = compass_attacks(2);
  return c;
}

AgentClass make_predator() {
  AgentClass c = make_battle();
  c.name = "predator";
  c.attack_damage = 1;
  return c;
}

AgentClass make_prey() {
  AgentClass c;
  c.name = "prey";
  c.footprint_side = 1;
  c.max_hp = 2;
  c.attack_damage = 0;
  c.move_offsets = stay_first_offsets(2, /*manhattan=*/false, 6.25);
  return c;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::multibattle: return "multibattle";
    case ScenarioKind::gathering: return "gathering";
    case ScenarioKind::predator_prey: return "predator_prey";
  }
  return "?";
}

ScenarioKind kind_from_name(const std::string& s) {
  if (s == "multibattle") return ScenarioKind::multibattle;
  if (s == "gathering") return ScenarioKind::gathering;
  if (s == "predator_prey") return ScenarioKind::predator_prey;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

RewardTable RewardTable::defaults_for(ScenarioKind kind) {
  RewardTable r;
  switch (kind) {
    case ScenarioKind::multibattle:
      break;
    case ScenarioKind::gathering:
      r.attack_hit_reward = 5.0;
      break;
    case ScenarioKind::predator_prey:
      r.move_cost = 0.0;
      break;
  }
  return r;
}

const AgentClass& AgentClass::battle() {
  static const AgentClass c = make_battle();
  return c;
}
const AgentClass& AgentClass::predator() {
  static const AgentClass c = make_predator();
  return c;
}
const AgentClass& AgentClass::prey() {
  static const AgentClass c = make_prey();
  return c;
}
const AgentClass& AgentClass::by_name(const std::string& name) {
  if (name == "battle") return battle();
  if (name == "predator") return predator();
  if (name == "prey") return prey();
  throw std::invalid_argument("unknown agent class: " + name);
}

void ScenarioSpec::validate() const {
  if (map_width < 8 || map_height < 8)
    throw std::invalid_argument("scenario: map must be at least 8x8");
  if (episode_length < 1) throw std::invalid_argument("scenario: episode_length must be >= 1");
  if (obs_radius <= 0) throw std::invalid_argument("scenario: obs_radius must be > 0");
  if (max_visible_neighbors <= 0)
    throw std::invalid_argument("scenario: max_visible_neighbors must be > 0");
  if (teams.size() != 2) throw std::invalid_argument("scenario: exactly 2 teams required");
  for (const TeamSpec& t : teams) {
    if (t.count < 1) throw std::invalid_argument("scenario: team count must be >= 1");
    AgentClass::by_name(t.agent_class);  // throws if unknown
  }
  if (kind == ScenarioKind::predator_prey) {
    const bool ok = (teams[0].agent_class == "predator" && teams[1].agent_class == "prey") ||
                    (teams[0].agent_class == "prey" && teams[1].agent_class == "predator");
    if (!ok)
      throw std::invalid_argument("scenario: predator_prey needs one predator and one prey team");
  } else {
    if (teams[0].agent_class != teams[1].agent_class)
      throw std::invalid_argument("scenario: both teams must share an agent class");
    if (teams[0].agent_class == "predator" || teams[0].agent_class == "prey")
      throw std::invalid_argument("scenario: battle scenarios use the battle class");
  }
  if (food_count < 0) throw std::invalid_argument("scenario: food_count must be >= 0");
  if (food_count > 0 && kind != ScenarioKind::gathering)
    throw std::invalid_argument("scenario: food is gathering-only");
  if (AgentClass::by_name(teams[0].agent_class).action_count() !=
      AgentClass::by_name(teams[1].agent_class).action_count())
    throw std::invalid_argument("scenario: teams must share one action-table size");
}

int ScenarioSpec::action_count() const {
  return AgentClass::by_name(teams.at(0).agent_class).action_count();
}

int ScenarioSpec::feature_count() const {
  const int l = action_count();
  return 5 + max_visible_neighbors * (5 + l) + (has_food() ? kFoodRows * 3 : 0);
}

// rng_seed is intentionally excluded: the hash identifies the scenario
// structure, not a particular episode stream.
std::string ScenarioSpec::canonical_string() const {
  std::ostringstream os;
  os << "kind=" << kind_name(kind) << ";map=" << map_width << "x" << map_height
     << ";T=" << episode_length << ";r=" << obs_radius << ";k=" << max_visible_neighbors
     << ";food=" << food_count << ";teams=";
  for (const TeamSpec& t : teams) os << t.name << ":" << t.agent_class << ":" << t.count << ",";
  os << ";rw=" << fmt_double(rewards.move_cost) << "," << fmt_double(rewards.attack_empty_cost)
     << "," << fmt_double(rewards.attack_hit_reward) << "," << fmt_double(rewards.kill_reward)
     << "," << fmt_double(rewards.food_reward) << "," << fmt_double(rewards.attack_space_cost)
     << "," << fmt_double(rewards.hit_prey_reward) << "," << fmt_double(rewards.kill_prey_reward)
     << "," << fmt_double(rewards.attacked_penalty) << "," << fmt_double(rewards.death_penalty);
  return os.str();
}

uint64_t ScenarioSpec::hash() const { return fnv1a(canonical_string()); }

ScenarioSpec ScenarioSpec::multibattle_default() {
  ScenarioSpec s;
  s.kind = ScenarioKind::multibattle;
  s.teams = {{"red", "battle", 25}, {"blue", "battle", 25}};
  s.rewards = RewardTable::defaults_for(s.kind);
  return s;
}

ScenarioSpec ScenarioSpec::gathering_default() {
  ScenarioSpec s = multibattle_default();
  s.kind = ScenarioKind::gathering;
  s.food_count = 64;
  s.rewards = RewardTable::defaults_for(s.kind);
  return s;
}

ScenarioSpec ScenarioSpec::predator_prey_default() {
  ScenarioSpec s;
  s.kind = ScenarioKind::predator_prey;
  s.teams = {{"predator", "predator", 40}, {"prey", "prey", 20}};
  s.rewards = RewardTable::defaults_for(s.kind);
  return s;
}

const AgentClass& WorldState::agent_class(int agent_id) const {
  return team_class(agents[agent_id].team_id);
}

const AgentClass& WorldState::team_class(int team_id) const {
  return AgentClass::by_name(spec.teams[team_id].agent_class);
}

int WorldState::survivors(int team_id) const {
  int n = 0;
  for (const AgentState& a : agents)
    if (a.alive && a.team_id == team_id) ++n;
  return n;
}

double WorldState::center_x(int agent_id) const {
  return agents[agent_id].x + (agent_class(agent_id).footprint_side - 1) * 0.5;
}

double WorldState::center_y(int agent_id) const {
  return agents[agent_id].y + (agent_class(agent_id).footprint_side - 1) * 0.5;
}

namespace {

bool footprint_fits(const WorldState& w, int x, int y, int side, int self_id) {
  if (x < 0 || y < 0 || x + side > w.spec.map_width || y + side > w.spec.map_height) return false;
  for (int yy = y; yy < y + side; ++yy)
    for (int xx = x; xx < x + side; ++xx) {
      const int occ = w.cell(xx, yy);
      if (occ != -1 && occ != self_id) return false;
    }
  return true;
}

void stamp(WorldState& w, int agent_id, int x, int y, int side, int value) {
  for (int yy = y; yy < y + side; ++yy)
    for (int xx = x; xx < x + side; ++xx) w.occupancy[size_t(yy) * w.spec.map_width + xx] = value;
  (void)agent_id;
}

WorldState empty_world(const ScenarioSpec& spec) {
  spec.validate();
  WorldState w;
  w.spec = spec;
  w.occupancy.assign(size_t(spec.map_width) * spec.map_height, -1);
  w.food.assign(size_t(spec.map_width) * spec.map_height, 0);
  w.rng = RngStream(derive_key(spec.rng_seed, {rng_tag("world")}));
  w.team_reward.assign(spec.teams.size(), 0.0);
  return w;
}

}  // namespace

WorldState build_scenario(const ScenarioSpec& spec) {
  WorldState w = empty_world(spec);
  long long area = 0;
  for (const TeamSpec& t : spec.teams) {
    const AgentClass& cls = AgentClass::by_name(t.agent_class);
    area += 1LL * t.count * cls.footprint_side * cls.footprint_side;
  }
  if (area * 2 > 1LL * spec.map_width * spec.map_height)
    throw PlacementError("build_scenario: requested footprints exceed half the map");

  const bool halves = spec.kind != ScenarioKind::predator_prey;
  int next_id = 0;
  for (size_t team = 0; team < spec.teams.size(); ++team) {
    const AgentClass& cls = AgentClass::by_name(spec.teams[team].agent_class);
    const int side = cls.footprint_side;
    int x0 = 0, x1 = spec.map_width;  // anchor rect is [x0, x1 - side]
    if (halves) {
      if (team == 0) x1 = spec.map_width / 2;
      else x0 = spec.map_width / 2;
    }
    const int xs = x1 - side - x0 + 1;
    const int ys = spec.map_height - side + 1;
    if (xs < 1) throw PlacementError("build_scenario: footprint does not fit a map half");
    for (int i = 0; i < spec.teams[team].count; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
        const int x = x0 + static_cast<int>(w.rng.next_below(xs));
        const int y = static_cast<int>(w.rng.next_below(ys));
        if (!footprint_fits(w, x, y, side, -1)) continue;
        AgentState a;
        a.agent_id = next_id;
        a.team_id = static_cast<int>(team);
        a.x = x;
        a.y = y;
        a.hp = cls.max_hp;
        w.agents.push_back(a);
        stamp(w, next_id, x, y, side, next_id);
        ++next_id;
        placed = true;
      }
      if (!placed)
        throw PlacementError("build_scenario: could not place agent after " +
                             std::to_string(kMaxPlacementTries) + " attempts");
    }
  }

  if (spec.has_food()) {
    int free_cells = 0;
    for (int v : w.occupancy) free_cells += (v == -1);
    if (spec.food_count > free_cells)
      throw PlacementError("build_scenario: not enough free cells for food");
    int placed = 0;
    while (placed < spec.food_count) {
      const int x = static_cast<int>(w.rng.next_below(spec.map_width));
      const int y = static_cast<int>(w.rng.next_below(spec.map_height));
      const size_t idx = size_t(y) * spec.map_width + x;
      if (w.occupancy[idx] != -1 || w.food[idx]) continue;
      w.food[idx] = 1;
      ++placed;
    }
  }
  return w;
}

WorldState build_world_at(const ScenarioSpec& spec, const std::vector<PlacedAgent>& agents) {
  WorldState w = empty_world(spec);
  int next_id = 0;
  for (const PlacedAgent& p : agents) {
    if (p.team_id < 0 || p.team_id >= static_cast<int>(spec.teams.size()))
      throw std::invalid_argument("build_world_at: bad team id");
    const AgentClass& cls = AgentClass::by_name(spec.teams[p.team_id].agent_class);
    if (!footprint_fits(w, p.x, p.y, cls.footprint_side, -1))
      throw PlacementError("build_world_at: placement overlaps or leaves the map");
    AgentState a;
    a.agent_id = next_id;
    a.team_id = p.team_id;
    a.x = p.x;
    a.y = p.y;
    a.hp = p.hp < 0 ? cls.max_hp : p.hp;
    if (a.hp <= 0 || a.hp > cls.max_hp) throw std::invalid_argument("build_world_at: bad hp");
    w.agents.push_back(a);
    stamp(w, next_id, p.x, p.y, cls.footprint_side, next_id);
    ++next_id;
  }
  return w;
}

ObservationView observe(const WorldState& world, int agent_id) {
  if (agent_id < 0 || agent_id >= static_cast<int>(world.agents.size()))
    throw std::invalid_argument("observe: unknown agent id");
  const AgentState& self = world.agents[agent_id];
  if (!self.alive) throw std::invalid_argument("observe: agent is dead");

  const ScenarioSpec& spec = world.spec;
  const int l = spec.action_count();
  const int row_len = 5 + l;
  ObservationView out;
  out.features.assign(spec.feature_count(), 0.0);

  const AgentClass& self_cls = world.agent_class(agent_id);
  const double cx = world.center_x(agent_id);
  const double cy = world.center_y(agent_id);
  out.features[0] = double(self.x) / spec.map_width;
  out.features[1] = double(self.y) / spec.map_height;
  out.features[2] = double(self.hp) / self_cls.max_hp;
  out.features[3] = self.team_id == 0 ? 1.0 : 0.0;
  out.features[4] = self.team_id == 1 ? 1.0 : 0.0;

  struct Cand {
    double dist_sq;
    int id;
  };
  std::vector<Cand> cands;
  const double r_sq = double(spec.obs_radius) * spec.obs_radius;
  for (const AgentState& other : world.agents) {
    if (!other.alive || other.agent_id == agent_id) continue;
    const double dx = world.center_x(other.agent_id) - cx;
    const double dy = world.center_y(other.agent_id) - cy;
    const double d_sq = dx * dx + dy * dy;
    if (d_sq <= r_sq) cands.push_back({d_sq, other.agent_id});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.dist_sq != b.dist_sq ? a.dist_sq < b.dist_sq : a.id < b.id;
  });
  if (static_cast<int>(cands.size()) > spec.max_visible_neighbors)
    cands.resize(spec.max_visible_neighbors);

  for (size_t slot = 0; slot < cands.size(); ++slot) {
    const AgentState& nb = world.agents[cands[slot].id];
    const AgentClass& nb_cls = world.agent_class(nb.agent_id);
    double* row = out.features.data() + 5 + slot * row_len;
    row[0] = 1.0;
    row[1] = (world.center_x(nb.agent_id) - cx) / spec.obs_radius;
    row[2] = (world.center_y(nb.agent_id) - cy) / spec.obs_radius;
    row[3] = double(nb.hp) / nb_cls.max_hp;
    row[4] = nb.team_id == self.team_id ? 1.0 : 0.0;
    row[5 + nb.last_action] = 1.0;
    out.neighbors.push_back({nb.agent_id, nb.last_action, nb.team_id == self.team_id,
                             std::sqrt(cands[slot].dist_sq)});
  }

  if (spec.has_food()) {
    struct FoodCand {
      double dist_sq;
      int idx;
    };
    std::vector<FoodCand> foods;
    for (int y = 0; y < spec.map_height; ++y)
      for (int x = 0; x < spec.map_width; ++x) {
        const int idx = y * spec.map_width + x;
        if (!world.food[idx]) continue;
        const double dx = x - cx, dy = y - cy;
        foods.push_back({dx * dx + dy * dy, idx});
      }
    std::sort(foods.begin(), foods.end(), [](const FoodCand& a, const FoodCand& b) {
      return a.dist_sq != b.dist_sq ? a.dist_sq < b.dist_sq : a.idx < b.idx;
    });
    if (static_cast<int>(foods.size()) > kFoodRows) foods.resize(kFoodRows);
    const int base = 5 + spec.max_visible_neighbors * row_len;
    for (size_t slot = 0; slot < foods.size(); ++slot) {
      const int fx = foods[slot].idx % spec.map_width;
      const int fy = foods[slot].idx / spec.map_width;
      double* row = out.features.data() + base + slot * 3;
      row[0] = 1.0;
      row[1] = (fx - cx) / spec.map_width;
      row[2] = (fy - cy) / spec.map_height;
    }
  }
  return out;
}

StepOutcome step(WorldState& world, const std::vector<int>& joint_actions) {
  if (world.terminal) throw std::logic_error("step: world is terminal");
  const ScenarioSpec& spec = world.spec;
  const int n = static_cast<int>(world.agents.size());
  if (static_cast<int>(joint_actions.size()) != n)
    throw std::invalid_argument("step: joint_actions must cover every agent id");

  const bool pred_prey = spec.kind == ScenarioKind::predator_prey;
  const RewardTable& rw = spec.rewards;
  StepOutcome out;
  out.per_agent_reward.assign(n, 0.0);

  for (AgentState& a : world.agents) {
    if (!a.alive) continue;
    const int act = joint_actions[a.agent_id];
    const AgentClass& cls = world.agent_class(a.agent_id);
    if (act < 0) throw std::invalid_argument("step: missing action for living agent " +
                                             std::to_string(a.agent_id));
    if (act >= cls.action_count())
      throw std::invalid_argument("step: action out of range for agent " +
                                  std::to_string(a.agent_id));
    a.last_action = act;
  }

  // Phase 1: moves, in an RNG-drawn order. Blocked moves no-op but still
  // pay the move cost.
  std::vector<int> movers;
  for (const AgentState& a : world.agents)
    if (a.alive && !world.agent_class(a.agent_id).is_attack(joint_actions[a.agent_id]))
      movers.push_back(a.agent_id);
  for (int i = static_cast<int>(movers.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(world.rng.next_below(static_cast<uint32_t>(i + 1)));
    std::swap(movers[i], movers[j]);
  }
  for (int id : movers) {
    AgentState& a = world.agents[id];
    const AgentClass& cls = world.agent_class(id);
    out.per_agent_reward[id] += rw.move_cost;
    const Offset off = cls.move_offsets[joint_actions[id]];
    if (off.dx == 0 && off.dy == 0) continue;
    const int nx = a.x + off.dx, ny = a.y + off.dy;
    if (!footprint_fits(world, nx, ny, cls.footprint_side, id)) continue;
    stamp(world, id, a.x, a.y, cls.footprint_side, -1);
    a.x = nx;
    a.y = ny;
    stamp(world, id, nx, ny, cls.footprint_side, id);
  }

  // Phase 2: attacks resolve simultaneously against post-move positions.
  std::vector<int> damage(n, 0);
  std::vector<std::pair<int, int>> hits;  // (attacker, victim)
  for (const AgentState& a : world.agents) {
    if (!a.alive) continue;
    const AgentClass& cls = world.agent_class(a.agent_id);
    const int act = joint_actions[a.agent_id];
    if (!cls.is_attack(act)) continue;
    const Offset off = cls.attack_offsets[act - static_cast<int>(cls.move_offsets.size())];
    const int tx = a.x + off.dx, ty = a.y + off.dy;
    int victim = -1;
    if (tx >= 0 && ty >= 0 && tx < spec.map_width && ty < spec.map_height) {
      const int occ = world.cell(tx, ty);
      if (occ >= 0 && world.agents[occ].team_id != a.team_id) victim = occ;
    }
    if (victim < 0) {
      out.per_agent_reward[a.agent_id] += pred_prey ? rw.attack_space_cost : rw.attack_empty_cost;
      continue;
    }
    out.per_agent_reward[a.agent_id] += pred_prey ? rw.hit_prey_reward : rw.attack_hit_reward;
    if (pred_prey) out.per_agent_reward[victim] += rw.attacked_penalty;
    damage[victim] += cls.attack_damage;
    hits.emplace_back(a.agent_id, victim);
  }
  for (AgentState& a : world.agents) {
    if (!a.alive || damage[a.agent_id] == 0) continue;
    a.hp -= damage[a.agent_id];
    if (a.hp > 0) continue;
    a.hp = 0;
    a.alive = false;
    stamp(world, a.agent_id, a.x, a.y, world.agent_class(a.agent_id).footprint_side, -1);
    if (pred_prey) out.per_agent_reward[a.agent_id] += rw.death_penalty;
    for (const auto& [attacker, victim] : hits) {
      if (victim != a.agent_id) continue;
      out.per_agent_reward[attacker] += pred_prey ? rw.kill_prey_reward : rw.kill_reward;
      out.kill_events.push_back({attacker, victim});
    }
  }

  // Phase 3: food, lowest agent id first.
  if (spec.has_food()) {
    for (const AgentState& a : world.agents) {
      if (!a.alive) continue;
      const int side = world.agent_class(a.agent_id).footprint_side;
      for (int yy = a.y; yy < a.y + side; ++yy)
        for (int xx = a.x; xx < a.x + side; ++xx) {
          const size_t idx = size_t(yy) * spec.map_width + xx;
          if (!world.food[idx]) continue;
          world.food[idx] = 0;
          out.per_agent_reward[a.agent_id] += rw.food_reward;
        }
    }
  }

  for (const AgentState& a : world.agents)
    world.team_reward[a.team_id] += out.per_agent_reward[a.agent_id];

  world.step_index += 1;
  bool eliminated = false;
  for (size_t team = 0; team < spec.teams.size(); ++team)
    if (world.survivors(static_cast<int>(team)) == 0) eliminated = true;
  if (eliminated) {
    world.terminal = true;
    world.cause = TerminalCause::team_eliminated;
  } else if (world.step_index >= spec.episode_length) {
    world.terminal = true;
    world.cause = TerminalCause::time_limit;
  }
  out.terminal = world.terminal;
  out.cause = world.cause;
  return out;
}

std::optional<int> winner(const WorldState& world) {
  if (!world.terminal) throw std::logic_error("winner: world is not terminal");
  const int s0 = world.survivors(0);
  const int s1 = world.survivors(1);
  if (s0 != s1) return s0 > s1 ? 0 : 1;
  if (world.spec.kind == ScenarioKind::predator_prey) return std::nullopt;
  if (world.team_reward[0] != world.team_reward[1])
    return world.team_reward[0] > world.team_reward[1] ? 0 : 1;
  return std::nullopt;
}

Image render_frame(const WorldState& world) {
  const int w = world.spec.map_width, h = world.spec.map_height;
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.assign(size_t(w) * h * 3, 0);
  auto put = [&](int x, int y, int r, int g, int b) {
    const size_t i = (size_t(y) * w + x) * 3;
    img.rgb[i] = static_cast<uint8_t>(r);
    img.rgb[i + 1] = static_cast<uint8_t>(g);
    img.rgb[i + 2] = static_cast<uint8_t>(b);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) put(x, y, 24, 24, 24);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (world.food[size_t(y) * w + x]) put(x, y, 40, 160, 40);
  for (const AgentState& a : world.agents) {
    if (!a.alive) continue;
    const AgentClass& cls = world.agent_class(a.agent_id);
    const double lum = 0.35 + 0.65 * double(a.hp) / cls.max_hp;
    const int r = a.team_id == 0 ? int(220 * lum) : int(70 * lum);
    const int g = a.team_id == 0 ? int(60 * lum) : int(110 * lum);
    const int b = a.team_id == 0 ? int(50 * lum) : int(230 * lum);
    for (int yy = a.y; yy < a.y + cls.footprint_side; ++yy)
      for (int xx = a.x; xx < a.x + cls.footprint_side; ++xx) put(xx, yy, r, g, b);
  }
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

std::string serialize(const WorldState& world) {
  std::ostringstream os;
  os << "hash=" << std::hex << world.spec.hash() << std::dec << " step=" << world.step_index
     << " terminal=" << world.terminal << " cause=" << static_cast<int>(world.cause)
     << " rng=" << world.rng.key() << ":" << world.rng.counter() << "\n";
  os << "team_reward=";
  for (double r : world.team_reward) os << fmt_double(r) << ",";
  os << "\n";
  for (const AgentState& a : world.agents)
    os << "agent " << a.agent_id << " t" << a.team_id << " alive=" << a.alive << " x=" << a.x
       << " y=" << a.y << " hp=" << a.hp << " last=" << a.last_action << "\n";
  os << "food=";
  for (size_t i = 0; i < world.food.size(); ++i)
    if (world.food[i]) os << i << ",";
  os << "\n";
  return os.str();
}

}  // namespace gamf::engine

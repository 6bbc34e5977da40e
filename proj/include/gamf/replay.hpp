#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gamf/engine.hpp"

namespace gamf::replay {

// Replay log: a JSON header line (spec hash, seed, embedded scenario so a
// log is self-contained), then one JSON record per step with
// {step, actions, rewards, kills, survivors}.
class Writer {
 public:
  Writer(const std::string& path, const engine::ScenarioSpec& spec, uint64_t seed);
  void append(const engine::WorldState& world_after, const std::vector<int>& actions,
              const engine::StepOutcome& outcome);
  void close();
  ~Writer();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StepRecord {
  int step = 0;
  std::vector<std::pair<int, int>> actions;  // (agent_id, action)
  std::vector<std::pair<int, double>> rewards;
  std::vector<std::pair<int, int>> kills;
  std::vector<int> survivors;
};

struct Log {
  engine::ScenarioSpec scenario;
  uint64_t spec_hash = 0;
  uint64_t seed = 0;
  std::vector<StepRecord> steps;
};

// Throws std::runtime_error naming the offending line on malformed input.
Log read_log(const std::string& path);

}  // namespace gamf::replay

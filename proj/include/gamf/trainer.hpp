#pragma once

#include <string>
#include <vector>

#include "gamf/config.hpp"
#include "gamf/engine.hpp"
#include "gamf/learners.hpp"

namespace gamf::trainer {

struct TrainConfig {
  engine::ScenarioSpec scenario;
  config::TrainingSection training;
  learners::LearnerKind kind = learners::LearnerKind::mfq;
  uint64_t seed = 1;
  std::string out_dir;
  // Stop after this many episodes while keeping the exploration schedule
  // anchored to training.epochs; 0 runs the whole schedule. The run can be
  // continued later with resume().
  int stop_after = 0;

  static TrainConfig from_file(const std::string& config_path, learners::LearnerKind kind,
                               uint64_t seed, const std::string& out_dir);
  learners::LearnerConfig learner_config() const;
};

struct EpisodeMetrics {
  int episode = 0;
  double team_reward[2] = {0.0, 0.0};
  int survivors[2] = {0, 0};
  int kills[2] = {0, 0};
  double wall_time_s = 0.0;
  double loss_mean[2] = {0.0, 0.0};
  double epsilon = 0.0;
};

struct TrainRun {
  std::vector<EpisodeMetrics> rows;
  std::string metrics_path;
  std::vector<std::string> checkpoint_paths;  // grows as <alg>_<team>_<episode>.ckpt
  std::string state_path;
};

// Self-play training: both teams hold independent parameter sets and learn
// simultaneously. Deterministic for a fixed (config, seed).
TrainRun train(const TrainConfig& config);

// Continues a run from a training-state file written next to the
// checkpoints; bitwise-identical to an uninterrupted run.
TrainRun resume(const std::string& state_path, const TrainConfig& config);

std::string metrics_header();
std::string metrics_row(const EpisodeMetrics& m);

}  // namespace gamf::trainer

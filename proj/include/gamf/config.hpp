#pragma once

#include <string>

#include "gamf/engine.hpp"

namespace gamf::config {

// [training] section of a scenario file; defaults match the shipped
// training setup.
struct TrainingSection {
  int epochs = 2000;
  double lr = 1e-4;
  double gamma = 0.95;
  int buffer_capacity = 1024;
  int minibatch = 64;
  int hidden = 64;
  double eps_start = 1.0;
  double eps_end = 0.0;
  int checkpoint_interval = 0;  // 0 = final checkpoint only
};

struct ParsedConfig {
  engine::ScenarioSpec scenario;
  TrainingSection training;
  bool has_training = false;
};

// Nested key-value file with [scenario], [rewards], [agents.<name>] and an
// optional [training] section. Unknown sections or keys are errors.
ParsedConfig parse_file(const std::string& path);
ParsedConfig parse_string(const std::string& text, const std::string& origin);

}  // namespace gamf::config

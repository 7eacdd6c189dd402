#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thinker/pipeline/pipeline.hpp"

namespace thinker::harness {

// One experiment: a trainer configuration run for every seed.
struct ExperimentConfig {
  pipeline::TrainerConfig trainer;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::int64_t total_steps = 300'000;
  std::int64_t eval_every = 50'000;
  int eval_episodes = 128;
  std::string output_dir = "runs";

  ExperimentConfig();
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& config);

// Agent names on the command line: ppo | thinker | cutout | crop.
augment::Kind agent_kind(const std::string& agent);
std::string agent_name(augment::Kind kind);

// Runs root: THINKERLAB_RUNS if set, else config.output_dir.
std::string runs_root(const ExperimentConfig& config);

}  // namespace thinker::harness

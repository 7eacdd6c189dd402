#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thinker/env/color_maze.hpp"
#include "thinker/ppo/policy.hpp"

namespace thinker::harness {

// Linear interpolation between order statistics at h = (n - 1) p.
double quantile(std::vector<double> values, double p);

struct RewardStats {
  std::vector<double> returns;
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

RewardStats summarize(std::vector<double> returns);

struct MetricsRecord {
  std::int64_t step = 0;  // PPO environment steps
  std::int64_t initial_steps = 0;
  std::int64_t iteration = 0;
  double train_reward_mean = 0.0;
  double test_mean = 0.0;
  double test_median = 0.0;
  double test_q25 = 0.0;
  double test_q75 = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double wall_clock = 0.0;  // seconds since the run started

  std::int64_t total_env_steps() const { return step + initial_steps; }
};

// Append-only CSV; step must strictly increase.
class MetricsLog {
 public:
  explicit MetricsLog(std::string path);

  const std::vector<MetricsRecord>& records() const { return records_; }
  void append(const MetricsRecord& record);
  // Drops rows beyond `step` (resume after a crash between log and checkpoint).
  void truncate_after(std::int64_t step);

  static std::vector<MetricsRecord> read(const std::string& path);
  static std::string header();

 private:
  void rewrite() const;

  std::string path_;
  std::vector<MetricsRecord> records_;
};

// Chooses one action per active environment.
using BatchPolicy = std::function<std::vector<int>(const std::vector<const env::ColorMaze*>&, Rng&)>;

// Episodes on uniformly random level seeds from the full distribution.
RewardStats evaluate_zero_shot(const BatchPolicy& policy, const env::EnvConfig& config, int n_episodes, Rng& rng);
// Actions sampled from the policy distribution.
RewardStats evaluate_zero_shot(const ppo::PolicyModel<float>& model, const env::EnvConfig& config, int n_episodes,
                               Rng& rng);

}  // namespace thinker::harness

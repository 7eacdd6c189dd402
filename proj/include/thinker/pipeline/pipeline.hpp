#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "thinker/augment/augment.hpp"
#include "thinker/env/color_maze.hpp"
#include "thinker/percept/gmm.hpp"
#include "thinker/ppo/ppo.hpp"
#include "thinker/styleforge/translator.hpp"

namespace thinker::pipeline {

struct PipelineOptions {
  int n_clusters = 3;
  int initial_observations = 5000;
  int collection_envs = 16;
  double translate_prob = 1.0;
  bool translate = true;  // false skips bootstrap and reduces the thinker agent to plain PPO
  styleforge::TranslatorConfig translator;  // n_clusters and image_size are set from the run
  styleforge::GanTrainConfig gan;

  void validate() const;
};

struct LevelStepKey {
  std::uint64_t seed = 0;
  int step = 0;
  auto operator<=>(const LevelStepKey&) const = default;
};

struct InitialDataset {
  std::vector<Observation> observations;
  std::vector<LevelStepKey> keys;
  std::int64_t env_steps = 0;
};

// Uniform random actions until n_obs distinct (level seed, episode step) observations are stored.
InitialDataset collect_initial_dataset(ppo::VecEnv& envs, int n_obs, Rng& rng);

struct BootstrapArtifacts {
  percept::ClusterModel clusters;
  styleforge::TranslatorModel<float> translator;
  std::vector<int> cluster_counts;  // dataset size per cluster before balancing
  int requested_clusters = 0;
  std::vector<styleforge::LossStats> gan_history;
};

// Fits the cluster model, falling back to fewer clusters (down to 2) while any cluster is empty,
// then trains the translator once on the balanced partition.
BootstrapArtifacts bootstrap_setup(const std::vector<Observation>& dataset, int n_clusters,
                                   const PipelineOptions& options, std::uint64_t seed,
                                   const std::function<void(int, const styleforge::LossStats&)>& on_iteration = {});

struct TranslationRecord {
  std::vector<std::size_t> indices;  // buffer.obs indices that were translated
  std::vector<int> source;
  std::vector<int> target;
  std::size_t bootstrap_translated = 0;
};

// Translates buffer observations in place (each with probability prob). Actions, rewards and dones are untouched.
TranslationRecord translate_rollout(ppo::RolloutBuffer& buffer, const BootstrapArtifacts& artifacts, double prob,
                                    Rng& rng);

// Applies a cutout or crop augmentation to every buffer observation in place.
void augment_rollout(ppo::RolloutBuffer& buffer, augment::Kind kind, Rng& rng);

struct TrainerConfig {
  env::EnvConfig env;
  ppo::PpoHyper ppo = ppo::PpoHyper::desk();
  ppo::PolicyConfig policy;  // obs size and action count are taken from env
  PipelineOptions pipeline;
  augment::Kind augment = augment::Kind::None;

  void validate() const;
};

struct IterationStats {
  std::int64_t ppo_steps = 0;
  double train_reward_mean = 0.0;  // mean return over the most recent finished episodes
  std::size_t episodes = 0;
  std::size_t translated = 0;
  ppo::UpdateStats update;
};

// One seeded run of an agent. Training streams are independent of the bootstrap streams,
// so a run with translation disabled follows the plain PPO trajectory exactly.
class Trainer {
 public:
  static constexpr std::size_t kRewardWindow = 100;

  Trainer(TrainerConfig config, std::uint64_t seed);

  const TrainerConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  bool uses_translation() const;

  // Collects the initial dataset and trains the translator.
  BootstrapArtifacts& bootstrap(const std::function<void(int, const styleforge::LossStats&)>& on_iteration = {});
  void set_artifacts(BootstrapArtifacts artifacts, std::int64_t initial_steps);
  const std::optional<BootstrapArtifacts>& artifacts() const { return artifacts_; }

  IterationStats iterate();

  ppo::PolicyModel<float>& model() { return model_; }
  const ppo::PolicyModel<float>& model() const { return model_; }
  nn::Adam<float>& optimizer() { return *optimizer_; }
  ppo::VecEnv& envs() { return *envs_; }
  std::int64_t ppo_steps() const { return ppo_steps_; }
  std::int64_t initial_steps() const { return initial_steps_; }
  std::int64_t iterations() const { return iterations_; }
  double train_reward_mean() const;

  // Everything except tensors: env, stream and counter state.
  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  TrainerConfig config_;
  std::uint64_t seed_;
  ppo::PolicyModel<float> model_;
  std::unique_ptr<nn::Adam<float>> optimizer_;
  std::unique_ptr<ppo::VecEnv> envs_;
  Rng action_rng_, minibatch_rng_, translate_rng_, augment_rng_;
  std::optional<BootstrapArtifacts> artifacts_;
  std::deque<double> recent_returns_;
  std::int64_t ppo_steps_ = 0;
  std::int64_t initial_steps_ = 0;
  std::int64_t iterations_ = 0;
};

std::unique_ptr<ppo::VecEnv> make_train_envs(const env::EnvConfig& config, int count, std::uint64_t seed);
ppo::PolicyConfig policy_for(const TrainerConfig& config);

}  // namespace thinker::pipeline

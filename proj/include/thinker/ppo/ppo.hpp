#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "thinker/core/image.hpp"
#include "thinker/core/rng.hpp"
#include "thinker/env/color_maze.hpp"
#include "thinker/nn/optim.hpp"
#include "thinker/ppo/policy.hpp"

namespace thinker::ppo {

struct PpoHyper {
  double gamma = 0.999;
  double gae_lambda = 0.95;
  double lr = 5e-4;
  int epochs = 3;
  int minibatch = 2048;
  int train_batch = 16384;
  int rollout_fragment = 256;
  double clip = 0.2;
  double vf_clip = 0.2;
  double vf_coeff = 0.5;
  double ent_coeff = 0.01;
  double kl_coeff = 0.0;  // no penalty term; target_kl acts as an early-stop guard
  double target_kl = 0.01;
  double grad_clip = 0.5;

  // train_batch 4096 / minibatch 512 for 32 x 32 observations.
  static PpoHyper desk();
  int num_envs() const { return train_batch / rollout_fragment; }
  void validate() const;
};

// Environments stepped in lockstep; finished episodes restart on a sampled level.
class VecEnv {
 public:
  using LevelSampler = std::function<std::uint64_t(Rng&)>;

  VecEnv(std::vector<std::unique_ptr<env::Environment>> envs, LevelSampler sampler, std::uint64_t seed);

  void reset_all();
  std::size_t size() const { return envs_.size(); }
  const std::vector<Observation>& observations() const { return obs_; }
  env::Environment& env(std::size_t i) { return *envs_[i]; }
  const std::vector<env::StepInfo>& infos() const { return infos_; }

  struct Step {
    std::vector<float> rewards;
    std::vector<std::uint8_t> dones;
  };
  Step step(const std::vector<int>& actions);

  // Returns of episodes finished since the last call.
  std::vector<double> take_finished_returns();

  Rng& rng() { return rng_; }
  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  void start_episode(std::size_t i);

  std::vector<std::unique_ptr<env::Environment>> envs_;
  LevelSampler sampler_;
  Rng rng_;
  std::vector<Observation> obs_;
  std::vector<env::StepInfo> infos_;
  std::vector<double> running_returns_;
  std::vector<double> finished_;
};

// Transitions of num_envs fragments; transition (e, t) lives at index e * fragment + t.
struct RolloutBuffer {
  int num_envs = 0;
  int fragment = 0;
  FrameStore obs;
  std::vector<int> actions;
  std::vector<double> behavior_logp;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> values;
  std::vector<std::uint64_t> level_seeds;
  std::vector<int> step_counts;  // episode step count at obs
  FrameStore bootstrap_obs;      // observation after each fragment
  std::vector<double> bootstrap_values;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> finished_returns;

  std::size_t size() const { return actions.size(); }
};

RolloutBuffer collect_rollout(VecEnv& envs, const PolicyModel<float>& model, int fragment, Rng& rng);

// Recomputes behavior log-probabilities, values and bootstrap values from the stored observations.
void refresh_estimates(RolloutBuffer& buffer, const PolicyModel<float>& model);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// done[t] marks that the episode ended after transition t.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double bootstrap_value, double gamma, double lambda);

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda);

template <typename S>
struct Minibatch {
  Tensor<S> obs;  // unit convention
  std::vector<int> actions;
  std::vector<double> behavior_logp;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> old_values;
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;  // mean(behavior_logp - logp)
  double total = 0.0;
};

template <typename S>
Var<S> ppo_loss(const PolicyModel<S>& model, const Minibatch<S>& batch, const PpoHyper& hyper, LossStats& stats);

struct UpdateStats {
  int gradient_steps = 0;
  int epochs_completed = 0;
  bool early_stopped = false;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// Advantages are normalized over the whole buffer before the epochs start.
UpdateStats update_policy(PolicyModel<float>& model, nn::Adam<float>& optimizer, const RolloutBuffer& buffer,
                          const PpoHyper& hyper, Rng& rng);

std::vector<double> log_probabilities(const Tensor<float>& logits, const std::vector<int>& actions);
int sample_action(std::span<const float> logits, Rng& rng);

}  // namespace thinker::ppo

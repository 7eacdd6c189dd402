#pragma once

#include <memory>

#include "thinker/env/chain_bandit.hpp"
#include "thinker/ppo/ppo.hpp"

namespace thinker::testing {

inline ppo::PolicyConfig chain_policy_config() {
  ppo::PolicyConfig c;
  c.torso = ppo::PolicyConfig::Torso::Mlp;
  c.obs_height = 1;
  c.obs_width = env::ChainBandit::kStates;
  c.num_actions = 2;
  c.mlp_layers = {32};
  c.hidden = 32;
  return c;
}

inline ppo::PpoHyper chain_hyper() {
  ppo::PpoHyper h;
  h.gamma = 0.99;
  h.lr = 3e-3;
  h.rollout_fragment = 32;
  h.train_batch = 256;
  h.minibatch = 64;
  return h;
}

inline ppo::VecEnv chain_envs(int n, std::uint64_t seed) {
  std::vector<std::unique_ptr<env::Environment>> envs;
  for (int i = 0; i < n; ++i) envs.push_back(std::make_unique<env::ChainBandit>());
  ppo::VecEnv v(std::move(envs), [](Rng& rng) { return rng.uniform_int(1000); }, seed);
  v.reset_all();
  return v;
}

struct ChainRun {
  double final_mean_return = 0.0;
  int updates = 0;
};

// Trains on the chain bandit and reports the mean finished-episode return of the last rollout.
inline ChainRun train_chain_bandit(int updates, std::uint64_t seed) {
  const auto hyper = chain_hyper();
  ppo::PolicyModel<float> model(chain_policy_config(), seed);
  typename nn::Adam<float>::Options opts;
  opts.lr = hyper.lr;
  nn::Adam<float> opt(nn::parameters_of(model.slots()), opts);
  auto envs = chain_envs(hyper.num_envs(), seed + 1);
  Rng rng(seed + 2);
  ChainRun run;
  for (int u = 0; u < updates; ++u) {
    auto buffer = ppo::collect_rollout(envs, model, hyper.rollout_fragment, rng);
    ppo::compute_advantages(buffer, hyper.gamma, hyper.gae_lambda);
    ppo::update_policy(model, opt, buffer, hyper, rng);
    double total = 0.0;
    for (double r : buffer.finished_returns) total += r;
    run.final_mean_return = buffer.finished_returns.empty() ? 0.0 : total / buffer.finished_returns.size();
    run.updates = u + 1;
  }
  return run;
}

}  // namespace thinker::testing

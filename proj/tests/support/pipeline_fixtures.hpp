#pragma once

#include "thinker/pipeline/pipeline.hpp"

namespace thinker::testing {

// Small, fast run settings shared by pipeline and harness tests.
inline pipeline::TrainerConfig tiny_trainer_config(augment::Kind kind) {
  pipeline::TrainerConfig c;
  c.env.obs_size = 16;
  c.env.grid_size = 5;
  c.env.n_train_levels = 20;
  c.env.max_steps = 40;
  c.ppo.rollout_fragment = 16;
  c.ppo.train_batch = 64;
  c.ppo.minibatch = 32;
  c.ppo.epochs = 2;
  c.policy.channels = {4, 8};
  c.policy.hidden = 16;
  c.augment = kind;
  c.pipeline.initial_observations = 240;
  c.pipeline.collection_envs = 4;
  c.pipeline.gan.iterations = 2;
  c.pipeline.gan.batch_size = 4;
  c.pipeline.gan.n_critic = 1;
  c.pipeline.translator.g_base = 4;
  c.pipeline.translator.g_residual_blocks = 1;
  c.pipeline.translator.d_base = 4;
  c.pipeline.translator.d_layers = 2;
  return c;
}

inline bool same_parameters(ppo::PolicyModel<float>& a, ppo::PolicyModel<float>& b) {
  auto sa = a.slots();
  auto sb = b.slots();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (!(sa[i].var->value().vec().array() == sb[i].var->value().vec().array()).all()) return false;
  }
  return true;
}

}  // namespace thinker::testing

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "support/pipeline_fixtures.hpp"
#include "thinker/core/errors.hpp"

using namespace thinker;
using namespace thinker::pipeline;
using thinker::testing::same_parameters;
using thinker::testing::tiny_trainer_config;

namespace {

double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0 / n;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, p] : joint) mi += p * std::log(p / (pa[key.first] * pb[key.second]));
  return mi;
}

}  // namespace

TEST(InitialDataset, ExactCountDistinctKeysTrainSeedsOnly) {
  env::EnvConfig cfg;
  cfg.obs_size = 16;
  cfg.n_train_levels = 30;
  auto envs = make_train_envs(cfg, 4, 1);
  Rng rng(2);
  const InitialDataset d = collect_initial_dataset(*envs, 500, rng);
  ASSERT_EQ(d.observations.size(), 500u);
  const std::set<LevelStepKey> unique(d.keys.begin(), d.keys.end());
  EXPECT_EQ(unique.size(), 500u);
  const auto seeds = env::train_level_seeds(cfg);
  const std::set<std::uint64_t> train(seeds.begin(), seeds.end());
  for (const auto& k : d.keys) EXPECT_TRUE(train.count(k.seed));
  EXPECT_GE(d.env_steps, 500 - 4);
}

TEST(InitialDataset, EveryStyleFamilyPresent) {
  env::EnvConfig cfg;
  cfg.obs_size = 16;
  auto envs = make_train_envs(cfg, 16, 3);
  Rng rng(4);
  const InitialDataset d = collect_initial_dataset(*envs, 5000, rng);
  std::set<int> families;
  for (const auto& k : d.keys) families.insert(env::style_family(k.seed, cfg.style_families));
  EXPECT_EQ(families.size(), 6u);
}

TEST(Bootstrap, InvariantDeterminismAndFamilyInformation) {
  const auto config = tiny_trainer_config(augment::Kind::Thinker);
  env::EnvConfig ecfg = config.env;
  auto envs = make_train_envs(ecfg, 8, 5);
  Rng rng(6);
  const InitialDataset d = collect_initial_dataset(*envs, 600, rng);
  const BootstrapArtifacts a = bootstrap_setup(d.observations, 3, config.pipeline, 9);
  const BootstrapArtifacts b = bootstrap_setup(d.observations, 3, config.pipeline, 9);
  EXPECT_EQ(a.translator.config.n_clusters, a.clusters.n);
  EXPECT_TRUE((a.clusters.means.array() == b.clusters.means.array()).all());
  EXPECT_EQ(a.gan_history.size(), 2u);

  std::vector<int> labels = percept::assign_clusters(a.clusters, d.observations);
  std::vector<int> families;
  for (const auto& k : d.keys) families.push_back(env::style_family(k.seed, ecfg.style_families));
  EXPECT_GT(mutual_information(labels, families), 0.0);
}

TEST(Bootstrap, FallsBackWhenClustersStayEmpty) {
  auto config = tiny_trainer_config(augment::Kind::Thinker);
  std::vector<Observation> data;
  for (int i = 0; i < 60; ++i) {
    Observation obs(16, 16, PixelConvention::Bytes);
    obs.pixels.setConstant(i % 2 ? 200.0f : 20.0f);
    data.push_back(obs);
  }
  const BootstrapArtifacts a = bootstrap_setup(data, 3, config.pipeline, 1);
  EXPECT_EQ(a.clusters.n, 2);
  EXPECT_EQ(a.requested_clusters, 3);
  EXPECT_EQ(a.cluster_counts, (std::vector<int>{30, 30}));

  std::vector<Observation> same(40, data[0]);
  EXPECT_THROW(bootstrap_setup(same, 3, config.pipeline, 1), DataError);
}

TEST(TranslateRollout, KeepsDynamicsAndMovesEveryLabel) {
  auto config = tiny_trainer_config(augment::Kind::Thinker);
  Trainer trainer(config, 3);
  const BootstrapArtifacts& artifacts = trainer.bootstrap();
  Rng act(1), tr(2);
  ppo::RolloutBuffer buffer = ppo::collect_rollout(trainer.envs(), trainer.model(), 16, act);
  const ppo::RolloutBuffer original = buffer;
  const TranslationRecord rec = translate_rollout(buffer, artifacts, 1.0, tr);
  ASSERT_EQ(rec.indices.size(), buffer.size());
  EXPECT_EQ(rec.bootstrap_translated, buffer.bootstrap_obs.size());
  for (std::size_t i = 0; i < rec.source.size(); ++i) EXPECT_NE(rec.source[i], rec.target[i]);
  EXPECT_EQ(buffer.actions, original.actions);
  EXPECT_EQ(buffer.rewards, original.rewards);
  EXPECT_EQ(buffer.dones, original.dones);

  ppo::refresh_estimates(buffer, trainer.model());
  std::vector<std::size_t> idx(buffer.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto out = ppo::policy_forward(trainer.model(), buffer.obs.unit_tensor<float>(idx));
  const auto logp = ppo::log_probabilities(out.logits.value(), buffer.actions);
  for (std::size_t i = 0; i < buffer.size(); ++i) EXPECT_NEAR(logp[i], buffer.behavior_logp[i], 1e-5);
}

TEST(TranslateRollout, ZeroProbabilityTranslatesNothing) {
  auto config = tiny_trainer_config(augment::Kind::Thinker);
  Trainer trainer(config, 3);
  const BootstrapArtifacts& artifacts = trainer.bootstrap();
  Rng act(1), tr(2);
  ppo::RolloutBuffer buffer = ppo::collect_rollout(trainer.envs(), trainer.model(), 16, act);
  const ppo::RolloutBuffer original = buffer;
  const TranslationRecord rec = translate_rollout(buffer, artifacts, 0.0, tr);
  EXPECT_TRUE(rec.indices.empty());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    ASSERT_TRUE((buffer.obs.get(i).pixels == original.obs.get(i).pixels).all());
  }
}

TEST(Trainer, TranslationDisabledMatchesPlainPpo) {
  auto thinker_cfg = tiny_trainer_config(augment::Kind::Thinker);
  thinker_cfg.pipeline.translate = false;
  Trainer plain(tiny_trainer_config(augment::Kind::None), 21);
  Trainer thinker(thinker_cfg, 21);
  for (int i = 0; i < 3; ++i) {
    const IterationStats a = plain.iterate();
    const IterationStats b = thinker.iterate();
    EXPECT_EQ(a.train_reward_mean, b.train_reward_mean);
    EXPECT_EQ(a.update.policy_loss, b.update.policy_loss);
    EXPECT_EQ(a.update.value_loss, b.update.value_loss);
  }
  EXPECT_TRUE(same_parameters(plain.model(), thinker.model()));
  EXPECT_EQ(plain.save_state(), thinker.save_state());
}

TEST(Trainer, BootstrapDoesNotPerturbTrainingStreams) {
  auto thinker_cfg = tiny_trainer_config(augment::Kind::Thinker);
  thinker_cfg.pipeline.translate_prob = 0.0;
  Trainer plain(tiny_trainer_config(augment::Kind::None), 22);
  Trainer thinker(thinker_cfg, 22);
  thinker.bootstrap();
  EXPECT_GT(thinker.initial_steps(), 0);
  for (int i = 0; i < 2; ++i) {
    plain.iterate();
    thinker.iterate();
  }
  EXPECT_TRUE(same_parameters(plain.model(), thinker.model()));
}

TEST(Trainer, ThinkerRequiresArtifactsAndTranslates) {
  Trainer trainer(tiny_trainer_config(augment::Kind::Thinker), 4);
  EXPECT_THROW(trainer.iterate(), StateError);
  trainer.bootstrap();
  const IterationStats s = trainer.iterate();
  EXPECT_EQ(s.translated, 64u);
  EXPECT_EQ(s.ppo_steps, 64);
  Trainer plain(tiny_trainer_config(augment::Kind::None), 4);
  EXPECT_THROW(plain.bootstrap(), StateError);
}

TEST(Trainer, AugmentedAgentsRun) {
  for (auto kind : {augment::Kind::CutoutColor, augment::Kind::Crop}) {
    Trainer trainer(tiny_trainer_config(kind), 5);
    const IterationStats s = trainer.iterate();
    EXPECT_EQ(s.ppo_steps, 64);
    EXPECT_TRUE(std::isfinite(s.update.policy_loss));
  }
}

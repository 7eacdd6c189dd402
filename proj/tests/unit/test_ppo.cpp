#include <gtest/gtest.h>

#include <cmath>

#include "support/gae_oracle.hpp"
#include "support/gradcheck.hpp"
#include "support/ppo_fixtures.hpp"
#include "thinker/core/errors.hpp"
#include "thinker/ppo/ppo.hpp"

using namespace thinker;
using namespace thinker::ppo;

namespace {

PolicyConfig tiny_impala(int size = 8) {
  PolicyConfig c;
  c.obs_height = c.obs_width = size;
  c.channels = {2, 3};
  c.hidden = 6;
  return c;
}

env::EnvConfig maze_config() {
  env::EnvConfig c;
  c.obs_size = 32;
  return c;
}

VecEnv maze_envs(int n, std::uint64_t seed) {
  std::vector<std::unique_ptr<env::Environment>> envs;
  for (int i = 0; i < n; ++i) envs.push_back(std::make_unique<env::ColorMaze>(maze_config()));
  VecEnv v(std::move(envs), [](Rng& rng) { return rng.uniform_int(200); }, seed);
  v.reset_all();
  return v;
}

template <typename S>
Minibatch<S> random_minibatch(const PolicyModel<S>& model, int n, std::uint64_t seed) {
  Rng rng(seed);
  Minibatch<S> b;
  const auto& c = model.config();
  b.obs = nn::uniform_tensor<S>({n, 3, c.obs_height, c.obs_width}, 1.0, rng);
  b.obs.vec().array() = b.obs.vec().array() * S(0.5) + S(0.5);
  const PolicyOutput<S> out = policy_forward(model, b.obs);
  for (int i = 0; i < n; ++i) {
    b.actions.push_back(static_cast<int>(rng.uniform_int(c.num_actions)));
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
    b.old_values.push_back(out.values.value()[i] + rng.uniform(-0.3, 0.3));
  }
  const Tensor<S> logp = nn::kernels::log_softmax_rows(out.logits.value());
  for (int i = 0; i < n; ++i) b.behavior_logp.push_back(logp[i * c.num_actions + b.actions[i]] + rng.uniform(-0.3, 0.3));
  return b;
}

}  // namespace

TEST(Gae, SingleTerminalStep) {
  const std::vector<double> r{1.0}, v{0.0};
  const std::vector<std::uint8_t> d{1};
  const GaeResult g = compute_gae(r, v, d, 5.0, 0.99, 0.95);
  EXPECT_EQ(g.advantages[0], 1.0);
  EXPECT_EQ(g.returns[0], 1.0);
}

TEST(Gae, LambdaZeroGivesTdErrors) {
  Rng rng(2);
  std::vector<double> r(10), v(10);
  std::vector<std::uint8_t> d(10);
  for (int t = 0; t < 10; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
    d[t] = rng.uniform() < 0.3;
  }
  const GaeResult g = compute_gae(r, v, d, 0.7, 0.9, 0.0);
  for (int t = 0; t < 10; ++t) {
    const double next = t + 1 < 10 ? v[t + 1] : 0.7;
    EXPECT_EQ(g.advantages[t], r[t] + 0.9 * (d[t] ? 0.0 : 1.0) * next - v[t]);
  }
}

TEST(Gae, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int t_max = 1 + static_cast<int>(rng.uniform_int(16));
    std::vector<double> r(t_max), v(t_max);
    std::vector<std::uint8_t> d(t_max);
    for (int t = 0; t < t_max; ++t) {
      r[t] = rng.normal();
      v[t] = rng.normal();
      d[t] = rng.uniform() < 0.2;
    }
    const double gamma = rng.uniform(), lambda = rng.uniform(), boot = rng.normal();
    const GaeResult g = compute_gae(r, v, d, boot, gamma, lambda);
    const auto oracle = thinker::testing::brute_force_gae(r, v, d, boot, gamma, lambda);
    for (int t = 0; t < t_max; ++t) {
      ASSERT_NEAR(g.advantages[t], oracle[t], 1e-6);
      ASSERT_NEAR(g.returns[t], oracle[t] + v[t], 1e-6);
    }
  }
  EXPECT_THROW(compute_gae(std::vector<double>{1, 2}, std::vector<double>{1}, std::vector<std::uint8_t>{0, 0}, 0, 0.9, 0.9),
               ArgumentError);
}

TEST(Policy, ShapesNormalizationDeterminism) {
  const PolicyModel<float> model(tiny_impala(32), 1);
  Rng rng(1);
  Tensor<float> obs = nn::uniform_tensor<float>({7, 3, 32, 32}, 1.0, rng);
  const auto a = policy_forward(model, obs), b = policy_forward(model, obs);
  EXPECT_EQ(a.logits.shape(), (nn::Shape{7, 5}));
  EXPECT_EQ(a.values.shape(), (nn::Shape{7}));
  EXPECT_TRUE(a.logits.value().vec() == b.logits.value().vec());
  const Tensor<float> p = nn::kernels::softmax_rows(a.logits.value());
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(p.matrix(7, 5).row(i).sum(), 1.0f, 1e-6f);
  EXPECT_THROW(policy_forward(model, nn::uniform_tensor<float>({2, 3, 16, 16}, 1.0, rng)), ArgumentError);
}

TEST(PpoLoss, IdentityPolicyHasUnitRatio) {
  const PolicyModel<double> model(tiny_impala(), 2);
  Minibatch<double> b = random_minibatch(model, 4, 5);
  const Tensor<double> logp = nn::kernels::log_softmax_rows(policy_forward(model, b.obs).logits.value());
  for (int i = 0; i < 4; ++i) {
    b.behavior_logp[i] = logp[i * 5 + b.actions[i]];
    b.advantages[i] = 0.0;
  }
  LossStats stats;
  ppo_loss(model, b, PpoHyper{}, stats);
  EXPECT_EQ(stats.mean_ratio, 1.0);
  EXPECT_EQ(stats.policy_loss, 0.0);
  EXPECT_EQ(stats.clip_fraction, 0.0);
  EXPECT_GE(stats.entropy, 0.0);
  EXPECT_LE(stats.entropy, std::log(5.0) + 1e-12);
}

TEST(PpoLoss, ClipArithmetic) {
  const PolicyModel<double> model(tiny_impala(), 3);
  Minibatch<double> b = random_minibatch(model, 1, 6);
  const Tensor<double> logp = nn::kernels::log_softmax_rows(policy_forward(model, b.obs).logits.value());
  b.behavior_logp[0] = logp[b.actions[0]] - std::log(2.0);
  b.advantages[0] = 1.0;
  LossStats stats;
  ppo_loss(model, b, PpoHyper{}, stats);
  EXPECT_NEAR(stats.mean_ratio, 2.0, 1e-12);
  EXPECT_NEAR(stats.policy_loss, -1.2, 1e-12);
  EXPECT_EQ(stats.clip_fraction, 1.0);
}

// Piecewise-linear pieces (clamp, min/max, ReLU, max-pool) call for a small probe step.
TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  PolicyModel<double> model(tiny_impala(), 4);
  const Minibatch<double> b = random_minibatch(model, 4, 7);
  PpoHyper hyper;
  hyper.clip = 0.1;
  auto loss = [&] {
    LossStats stats;
    return ppo_loss(model, b, hyper, stats);
  };
  const auto r = thinker::testing::check_gradients(loss, nn::parameters_of(model.slots()), 1e-6, 6);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_entry;
}

TEST(Rollout, BookkeepingAndSelfConsistency) {
  const PolicyModel<float> model(tiny_impala(32), 5);
  VecEnv envs = maze_envs(3, 1);
  Rng rng(2);
  const RolloutBuffer buf = collect_rollout(envs, model, 16, rng);
  ASSERT_EQ(buf.size(), 48u);
  ASSERT_EQ(buf.obs.size(), 48u);
  ASSERT_EQ(buf.bootstrap_values.size(), 3u);
  RolloutBuffer recomputed = buf;
  refresh_estimates(recomputed, model);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    EXPECT_NEAR(recomputed.behavior_logp[i], buf.behavior_logp[i], 1e-6);
    EXPECT_NEAR(recomputed.values[i], buf.values[i], 1e-6);
    EXPECT_LE(buf.behavior_logp[i], 0.0);
  }
  // Consecutive entries of one fragment follow one trajectory.
  for (int t = 1; t < 16; ++t) {
    if (!buf.dones[t - 1]) {
      EXPECT_EQ(buf.level_seeds[t], buf.level_seeds[t - 1]);
      EXPECT_EQ(buf.step_counts[t], buf.step_counts[t - 1] + 1);
    }
  }
}

TEST(Rollout, UniformPolicyRewardBounds) {
  PolicyModel<float> model(tiny_impala(32), 6);
  for (auto& slot : model.slots()) {
    if (slot.name.rfind("policy.pi", 0) == 0) slot.var->mutable_value().vec().setZero();
  }
  VecEnv envs = maze_envs(8, 3);
  Rng rng(4);
  std::vector<double> returns;
  while (returns.size() < 128) {
    const RolloutBuffer buf = collect_rollout(envs, model, 256, rng);
    returns.insert(returns.end(), buf.finished_returns.begin(), buf.finished_returns.end());
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < 128; ++i) mean += returns[i] / 128.0;
  EXPECT_GE(mean, 0.0);
  EXPECT_LE(mean, 1.0);
}

TEST(UpdatePolicy, ZeroLearningRateLeavesParameters) {
  PolicyModel<float> model(thinker::testing::chain_policy_config(), 1);
  typename nn::Adam<float>::Options opts;
  opts.lr = 0.0;
  auto slots = model.slots();
  nn::Adam<float> opt(nn::parameters_of(slots), opts);
  std::vector<Tensor<float>> before;
  for (auto& s : slots) before.push_back(s.var->value());
  auto envs = thinker::testing::chain_envs(8, 1);
  Rng rng(3);
  auto hyper = thinker::testing::chain_hyper();
  auto buf = collect_rollout(envs, model, hyper.rollout_fragment, rng);
  compute_advantages(buf, hyper.gamma, hyper.gae_lambda);
  const UpdateStats stats = update_policy(model, opt, buf, hyper, rng);
  EXPECT_GT(stats.gradient_steps, 0);
  for (std::size_t i = 0; i < slots.size(); ++i) EXPECT_TRUE(slots[i].var->value().vec() == before[i].vec()) << slots[i].name;
}

TEST(UpdatePolicy, StepCountBounded) {
  PolicyModel<float> model(thinker::testing::chain_policy_config(), 2);
  auto hyper = thinker::testing::chain_hyper();
  hyper.minibatch = 100;  // 256 / 100 -> 3 minibatches per epoch
  typename nn::Adam<float>::Options opts;
  opts.lr = hyper.lr;
  nn::Adam<float> opt(nn::parameters_of(model.slots()), opts);
  auto envs = thinker::testing::chain_envs(8, 2);
  Rng rng(3);
  for (double target : {1e9, 0.0}) {
    hyper.target_kl = target;
    auto buf = collect_rollout(envs, model, hyper.rollout_fragment, rng);
    compute_advantages(buf, hyper.gamma, hyper.gae_lambda);
    const UpdateStats stats = update_policy(model, opt, buf, hyper, rng);
    EXPECT_LE(stats.gradient_steps, hyper.epochs * 3);
    if (target > 1) {
      EXPECT_EQ(stats.gradient_steps, 9);
      EXPECT_FALSE(stats.early_stopped);
    } else {
      EXPECT_EQ(stats.epochs_completed, 1);
      EXPECT_EQ(stats.gradient_steps, 3);
    }
  }
}

TEST(UpdatePolicy, ChainBanditConverges) {
  const auto run = thinker::testing::train_chain_bandit(50, 11);
  EXPECT_GE(run.final_mean_return, 0.9 * env::ChainBandit::kOptimalReturn);
}

TEST(VecEnvState, RoundTripResumesEpisodes) {
  VecEnv a = maze_envs(3, 9);
  for (int t = 0; t < 5; ++t) a.step({0, 1, 3});
  const std::string saved = a.save_state();
  VecEnv b = maze_envs(3, 100);
  b.load_state(saved);
  for (int t = 0; t < 40; ++t) {
    const auto sa = a.step({t % 5, (t + 1) % 5, (t + 2) % 5});
    const auto sb = b.step({t % 5, (t + 1) % 5, (t + 2) % 5});
    ASSERT_EQ(sa.rewards, sb.rewards);
    ASSERT_EQ(sa.dones, sb.dones);
    for (int i = 0; i < 3; ++i) ASSERT_TRUE((a.observations()[i].pixels == b.observations()[i].pixels).all());
  }
}

#include <gtest/gtest.h>

#include <cmath>

#include "support/glyphs.hpp"
#include "support/gradcheck.hpp"
#include "thinker/core/errors.hpp"
#include "thinker/styleforge/translator.hpp"

using namespace thinker;
using namespace thinker::styleforge;
using nn::Shape;

namespace {

TranslatorConfig tiny_config(int n = 3) {
  TranslatorConfig c;
  c.n_clusters = n;
  c.image_size = 8;
  c.g_base = 2;
  c.g_residual_blocks = 1;
  c.d_base = 3;
  c.d_layers = 2;
  c.output_init_scale = 1.0;
  return c;
}

TranslatorConfig desk_config(int n = 3) {
  TranslatorConfig c;
  c.n_clusters = n;
  c.image_size = 32;
  c.g_base = 8;
  c.g_residual_blocks = 3;
  c.d_base = 16;
  return c;
}

template <typename S>
Tensor<S> uniform_images(Index n, Index size, std::uint64_t seed) {
  Rng rng(seed);
  return nn::uniform_tensor<S>({n, 3, size, size}, 1.0, rng);
}

}  // namespace

TEST(Generator, PreservesShapeAndRange) {
  TranslatorModel<float> model(tiny_config(), 3);
  for (auto& slot : model.generator_slots()) slot.var->mutable_value().vec() *= 20.0f;
  const Tensor<float> x = uniform_images<float>(5, 8, 1);
  const Tensor<float> y = generate(model, x, {0, 1, 2, 1, 0});
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_LE(y.vec().cwiseAbs().maxCoeff(), 1.0f);
  EXPECT_TRUE(y.vec().allFinite());
  EXPECT_THROW(generate(model, x, {0, 1, 2, 3, 0}), ArgumentError);
  EXPECT_THROW(generate(model, x, {0, 1}), ArgumentError);
}

TEST(Generator, NearIdentityAtInit) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TranslatorModel<float> model(desk_config(), seed);
    const Tensor<float> x = uniform_images<float>(8, 32, seed + 10);
    const Tensor<float> y = generate(model, x, {0, 1, 2, 0, 1, 2, 0, 1});
    EXPECT_LT((y.vec() - x.vec()).cwiseAbs().mean(), 0.2f);
  }
}

TEST(Generator, HeadWithAndWithoutInputResidual) {
  TranslatorConfig c = tiny_config();
  const Tensor<double> x = uniform_images<double>(2, 8, 4);
  for (bool residual : {true, false}) {
    c.g_input_residual = residual;
    TranslatorModel<double> model(c, 6);
    for (auto& slot : model.generator_slots()) {
      if (slot.name.rfind("generator.out", 0) == 0) slot.var->mutable_value().vec().setZero();
    }
    const Tensor<double> y = generate(model, x, {0, 2});
    for (Index i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], residual ? std::tanh(x[i]) : 0.0);
  }
}

TEST(Discriminator, OutputShapes) {
  const TranslatorModel<float> model(desk_config(4), 2);
  const auto out = discriminate(model, uniform_images<float>(6, 32, 4));
  EXPECT_EQ(out.src.shape()[0], 6);
  EXPECT_EQ(out.cls.shape(), (Shape{6, 4}));
  const Tensor<float> probs = nn::kernels::softmax_rows(out.cls.value());
  for (Index i = 0; i < 6; ++i) EXPECT_NEAR(probs.matrix(6, 4).row(i).sum(), 1.0f, 1e-6f);
  EXPECT_THROW(discriminate(model, uniform_images<float>(2, 16, 4)), ArgumentError);
}

TEST(GradientPenalty, UnitLinearCriticIsZero) {
  Rng rng(5);
  Tensor<double> u = nn::uniform_tensor<double>({1, 3, 4, 4}, 1.0, rng);
  u.vec() /= u.vec().norm();
  Tensor<double> u_batch({3, 3, 4, 4});
  for (int i = 0; i < 3; ++i) u_batch.vec().segment(i * 48, 48) = u.vec();
  auto critic = [&](const nn::Var<double>& x) { return nn::reshape(nn::sum_per_sample(nn::mul_const(x, u_batch)), {3, 1}); };
  const auto gp = gradient_penalty<double>(critic, uniform_images<double>(3, 4, 1), uniform_images<double>(3, 4, 2), rng);
  EXPECT_NEAR(gp.value().item(), 0.0, 1e-12);
}

TEST(GradientPenalty, ConstantCriticIsOne) {
  Rng rng(5);
  auto critic = [](const nn::Var<double>& x) {
    return nn::add_scalar(nn::scale(nn::reshape(nn::sum_per_sample(x), {x.shape()[0], 1}), 0.0), 2.5);
  };
  const auto gp = gradient_penalty<double>(critic, uniform_images<double>(4, 4, 1), uniform_images<double>(4, 4, 2), rng);
  EXPECT_NEAR(gp.value().item(), 1.0, 1e-7);
}

TEST(GradientPenalty, ParameterGradientMatchesFiniteDifferences) {
  Rng init(9);
  nn::Conv2d<double> c1(3, 4, 3, {2, 1}, init), c2(4, 1, 3, {1, 1}, init);
  auto critic = [&](const nn::Var<double>& x) { return c2(nn::leaky_relu(c1(x), 0.01)); };
  const Tensor<double> real = uniform_images<double>(4, 8, 1), fake = uniform_images<double>(4, 8, 2);
  auto loss = [&] {
    Rng rng(77);
    return gradient_penalty<double>(critic, real, fake, rng);
  };
  nn::ParameterSlots<double> slots;
  c1.collect("c1", slots);
  c2.collect("c2", slots);
  const auto r = thinker::testing::check_gradients(loss, nn::parameters_of(slots), 1e-4, 12);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_entry;
}

TEST(Losses, UniformClassifierAndConstantCritic) {
  TranslatorModel<double> model(tiny_config(3), 4);
  auto slots = model.discriminator_slots();
  for (auto& slot : slots) {
    if (slot.name.rfind("discriminator.cls", 0) == 0 || slot.name.rfind("discriminator.src", 0) == 0) slot.var->mutable_value().vec().setZero();
  }
  Rng rng(1);
  LossStats stats;
  const GanBatch batch{{0, 1, 2, 0}, {1, 2, 0, 2}};
  discriminator_loss(model, uniform_images<double>(4, 8, 3), batch, rng, stats);
  EXPECT_NEAR(stats.d_cls, std::log(3.0), 1e-12);
  EXPECT_NEAR(stats.d_adv, 0.0, 1e-12);
  EXPECT_NEAR(stats.gp, 1.0, 1e-7);
  EXPECT_NEAR(stats.d_total, 10.0 + std::log(3.0), 1e-6);
}

TEST(Losses, ReconstructionIsMeanAbsoluteDifference) {
  const Tensor<double> x = uniform_images<double>(2, 4, 3);
  const nn::Var<double> xv(x);
  EXPECT_EQ(cycle_reconstruction_loss(xv, xv).value().item(), 0.0);
  Tensor<double> shifted = x;
  shifted.vec().array() += 0.5;
  EXPECT_NEAR(cycle_reconstruction_loss(xv, nn::Var<double>(shifted)).value().item(), 0.5, 1e-12);
}

TEST(Losses, DiscriminatorGradientMatchesFiniteDifferences) {
  TranslatorModel<double> model(tiny_config(3), 11);
  const Tensor<double> x = uniform_images<double>(4, 8, 5);
  const GanBatch batch{{0, 1, 2, 1}, {2, 0, 1, 0}};
  auto loss = [&] {
    Rng rng(3);
    LossStats stats;
    return discriminator_loss(model, x, batch, rng, stats);
  };
  const auto r = thinker::testing::check_gradients(loss, nn::parameters_of(model.discriminator_slots()), 1e-4, 6);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_entry;
}

// The L1 cycle term is piecewise linear; a small step keeps probes off its kinks.
TEST(Losses, GeneratorGradientMatchesFiniteDifferences) {
  TranslatorModel<double> model(tiny_config(3), 12);
  const Tensor<double> x = uniform_images<double>(4, 8, 6);
  const GanBatch batch{{0, 1, 2, 1}, {2, 0, 1, 0}};
  auto loss = [&] {
    LossStats stats;
    return generator_loss(model, x, batch, stats);
  };
  const auto r = thinker::testing::check_gradients(loss, nn::parameters_of(model.generator_slots()), 1e-6, 6);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_entry;
}

TEST(Losses, GeneratorObjectiveOmitsPenalty) {
  TranslatorModel<double> model(tiny_config(2), 13);
  const GanBatch batch{{0, 1}, {1, 0}};
  LossStats stats;
  const double total = generator_loss(model, uniform_images<double>(2, 8, 7), batch, stats).value().item();
  EXPECT_NEAR(total, stats.g_adv + stats.g_cls + 10.0 * stats.g_rec, 1e-12);
}

TEST(TrainTranslator, DeterministicAndFinite) {
  const auto data = thinker::testing::glyph_dataset(3, 16, 16, 1);
  TranslatorConfig config = desk_config();
  config.image_size = 16;
  config.d_layers = 2;
  GanTrainConfig train;
  train.iterations = 3;
  train.batch_size = 6;
  const TrainResult a = train_translator(data, config, train, 21);
  const TrainResult b = train_translator(data, config, train, 21);
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(a.history[0].d_total, b.history[0].d_total);
  EXPECT_EQ(a.history[0].g_total, b.history[0].g_total);
  for (const auto& s : a.history) {
    for (double v : {s.d_adv, s.gp, s.d_cls, s.d_total, s.g_adv, s.g_cls, s.g_rec, s.g_total}) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(s.gp, 0.0);
  }
}

TEST(TrainTranslator, RejectsBadClusters) {
  auto data = thinker::testing::glyph_dataset(2, 4, 16, 1);
  TranslatorConfig config = desk_config(2);
  config.image_size = 16;
  config.d_layers = 2;
  GanTrainConfig train;
  train.iterations = 1;
  EXPECT_THROW(train_translator({data[0]}, config, train, 1), ConfigurationError);
  data[1].clear();
  EXPECT_THROW(train_translator(data, config, train, 1), DataError);
}

TEST(TranslateBatch, TargetsDifferFromSources) {
  const auto data = thinker::testing::glyph_dataset(3, 20, 32, 2);
  std::vector<Observation> all;
  for (const auto& c : data) all.insert(all.end(), c.begin(), c.end());
  const auto extractor = percept::downsample_extractor();
  for (int n : {2, 3}) {
    const auto clusters = percept::fit_clusters(percept::extract_features(all, extractor), n, 3, extractor.id);
    const TranslatorModel<float> model(desk_config(n), 5);
    std::vector<Observation> batch(all.begin(), all.begin() + 30);
    batch[3] = convert(batch[3], PixelConvention::Unit);
    Rng rng(8);
    const Translation t = translate_batch(model, clusters, extractor, batch, rng);
    ASSERT_EQ(t.observations.size(), batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      EXPECT_NE(t.source[i], t.target[i]);
      if (n == 2) {
        EXPECT_EQ(t.target[i], 1 - t.source[i]);
      }
      EXPECT_EQ(t.observations[i].convention, batch[i].convention);
      EXPECT_TRUE(t.observations[i].same_shape(batch[i]));
    }
    const TranslatorModel<float> mismatched(desk_config(n + 1), 5);
    EXPECT_THROW(translate_batch(mismatched, clusters, extractor, batch, rng), StateError);
  }
}

TEST(BalanceClusters, CapsAtSmallest) {
  auto data = thinker::testing::glyph_dataset(3, 10, 8, 1);
  data[1].resize(4);
  Rng rng(1);
  const auto balanced = balance_clusters(data, rng);
  for (const auto& c : balanced) EXPECT_EQ(c.size(), 4u);
}

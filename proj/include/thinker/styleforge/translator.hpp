#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "thinker/core/image.hpp"
#include "thinker/core/rng.hpp"
#include "thinker/nn/layers.hpp"
#include "thinker/nn/optim.hpp"
#include "thinker/percept/gmm.hpp"

namespace thinker::styleforge {

using nn::Index;
using nn::Tensor;
using nn::Var;

struct TranslatorConfig {
  int n_clusters = 3;
  int image_size = 64;
  int g_base = 16;
  int g_residual_blocks = 3;
  bool g_instance_norm = false;
  bool g_skip = false;  // output conv also sees full-resolution stem features
  bool g_input_residual = true;  // tanh(x + f(x)) instead of tanh(f(x))
  int d_base = 16;
  int d_layers = 3;  // stride-2 convolutions; image_size must be divisible by 2^d_layers
  double output_init_scale = 0.1;
  double lambda_cls = 1.0;
  double lambda_rec = 10.0;
  double lambda_gp = 10.0;

  void validate() const;
};

// Image + target label -> image, output tanh(x + f(x, c)).
template <typename S>
class Generator {
 public:
  Generator() = default;
  Generator(const TranslatorConfig& config, Rng& rng);

  // x: [N,3,H,W] signed convention; labels in [0, n).
  Var<S> operator()(const Var<S>& x, const std::vector<int>& labels) const;
  void collect(const std::string& prefix, nn::ParameterSlots<S>& out);

 private:
  struct Stage {
    nn::Conv2d<S> conv;
    std::optional<nn::InstanceNorm2d<S>> norm;
    Var<S> operator()(const Var<S>& x) const { return norm ? (*norm)(conv(x)) : conv(x); }
    void collect(const std::string& prefix, nn::ParameterSlots<S>& out);
  };
  Stage stage(Index in, Index out, Index kernel, nn::ConvGeometry geometry, bool norm, Rng& rng);

  int n_ = 0;
  bool skip_ = false;
  bool input_residual_ = true;
  Stage stem_, down1_, down2_, up1_, up2_;
  nn::Conv2d<S> out_;
  std::vector<std::pair<Stage, Stage>> blocks_;
};

template <typename S>
struct CriticOutput {
  Var<S> src;  // [N,1,h,w] realness map
  Var<S> cls;  // [N,n] logits
};

template <typename S>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const TranslatorConfig& config, Rng& rng);

  CriticOutput<S> operator()(const Var<S>& x) const;
  Var<S> source(const Var<S>& x) const { return (*this)(x).src; }
  void collect(const std::string& prefix, nn::ParameterSlots<S>& out);

 private:
  int image_size_ = 0;
  std::vector<nn::Conv2d<S>> trunk_;
  nn::Conv2d<S> src_head_, cls_head_;
};

template <typename S>
struct TranslatorModel {
  TranslatorConfig config;
  Generator<S> generator;
  Discriminator<S> discriminator;

  TranslatorModel() = default;
  TranslatorModel(const TranslatorConfig& config, std::uint64_t seed);

  nn::ParameterSlots<S> generator_slots();
  nn::ParameterSlots<S> discriminator_slots();
};

// Signed-convention generation, chunked to bound memory.
template <typename S>
Tensor<S> generate(const TranslatorModel<S>& model, const Tensor<S>& x, const std::vector<int>& labels);

template <typename S>
CriticOutput<S> discriminate(const TranslatorModel<S>& model, const Tensor<S>& x);

// E[(||grad_xhat critic(xhat)||_2 - 1)^2], xhat = eps * real + (1 - eps) * fake with
// eps ~ U(0,1) per sample. The critic returns a per-sample output map; each sample's
// gradient is taken of the spatial mean of its own map.
template <typename S>
Var<S> gradient_penalty(const std::function<Var<S>(const Var<S>&)>& critic, const Tensor<S>& real, const Tensor<S>& fake,
                        Rng& rng);

struct GanBatch {
  std::vector<int> c_src;
  std::vector<int> c_tgt;
};

struct LossStats {
  double d_adv = 0.0;  // -E[D_src(x)] + E[D_src(G(x, c))]
  double gp = 0.0;
  double d_cls = 0.0;
  double d_total = 0.0;
  double g_adv = 0.0;  // -E[D_src(G(x, c))]
  double g_cls = 0.0;
  double g_rec = 0.0;
  double g_total = 0.0;
};

template <typename S>
Var<S> discriminator_loss(const TranslatorModel<S>& model, const Tensor<S>& x_real, const GanBatch& batch, Rng& rng,
                          LossStats& stats);

// Mean absolute difference between an input batch and its cycle reconstruction.
template <typename S>
Var<S> cycle_reconstruction_loss(const Var<S>& x, const Var<S>& reconstructed);

template <typename S>
Var<S> generator_loss(const TranslatorModel<S>& model, const Tensor<S>& x_real, const GanBatch& batch, LossStats& stats);

struct GanTrainConfig {
  int iterations = 500;
  int batch_size = 16;
  int n_critic = 5;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  bool fresh_critic_batches = true;  // new batch for every critic and generator step
};

struct TrainResult {
  TranslatorModel<float> model;
  std::vector<LossStats> history;  // one entry per iteration
};

// clusters[k] holds the training observations of cluster k (any convention).
TrainResult train_translator(const std::vector<std::vector<Observation>>& clusters, const TranslatorConfig& config,
                             const GanTrainConfig& train, std::uint64_t seed,
                             const std::function<void(int, const LossStats&)>& on_iteration = {});

// Truncates every cluster to the smallest cluster's size by seeded random subsampling.
std::vector<std::vector<Observation>> balance_clusters(std::vector<std::vector<Observation>> clusters, Rng& rng);

struct Translation {
  std::vector<Observation> observations;
  std::vector<int> source;
  std::vector<int> target;
};

Translation translate_batch(const TranslatorModel<float>& model, const percept::ClusterModel& clusters,
                            const percept::FeatureExtractor& extractor, std::span<const Observation> batch, Rng& rng);

}  // namespace thinker::styleforge

#include "thinker/ppo/policy.hpp"

#include "thinker/core/errors.hpp"

namespace thinker::ppo {

void PolicyConfig::validate() const {
  if (num_actions < 1) throw ConfigurationError("num_actions must be positive");
  if (obs_height < 1 || obs_width < 1) throw ConfigurationError("observation size must be positive");
  if (torso == Torso::Impala && channels.empty()) throw ConfigurationError("channels must list at least one stage");
  if (hidden < 1) throw ConfigurationError("hidden must be positive");
}

namespace {

constexpr nn::ConvGeometry kSame{1, 1};
constexpr nn::ConvGeometry kPool{2, 1};

Index pooled(Index size) { return nn::conv_output_size(size, 3, kPool); }

}  // namespace

template <typename S>
PolicyModel<S>::PolicyModel(const PolicyConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  Index features = 0;
  if (config_.torso == PolicyConfig::Torso::Impala) {
    Index in = 3, h = config_.obs_height, w = config_.obs_width;
    for (int ch : config_.channels) {
      Stage stage{nn::Conv2d<S>(in, ch, 3, kSame, rng),
                  {nn::Conv2d<S>(ch, ch, 3, kSame, rng), nn::Conv2d<S>(ch, ch, 3, kSame, rng)},
                  {nn::Conv2d<S>(ch, ch, 3, kSame, rng), nn::Conv2d<S>(ch, ch, 3, kSame, rng)}};
      stages_.push_back(std::move(stage));
      in = ch;
      h = pooled(h);
      w = pooled(w);
    }
    features = in * h * w;
  } else {
    Index in = 3 * static_cast<Index>(config_.obs_height) * config_.obs_width;
    for (int width : config_.mlp_layers) {
      mlp_.emplace_back(in, width, rng);
      in = width;
    }
    features = in;
  }
  dense_ = nn::Linear<S>(features, config_.hidden, rng);
  policy_head_ = nn::Linear<S>(config_.hidden, config_.num_actions, rng);
  policy_head_.scale_weights(0.01);
  value_head_ = nn::Linear<S>(config_.hidden, 1, rng);
}

template <typename S>
PolicyOutput<S> PolicyModel<S>::forward(const Var<S>& obs) const {
  const auto& shape = obs.shape();
  if (shape.size() != 4 || shape[1] != 3 || shape[2] != config_.obs_height || shape[3] != config_.obs_width) {
    throw ArgumentError("policy_forward: expected [N,3," + std::to_string(config_.obs_height) + "," +
                        std::to_string(config_.obs_width) + "], got " + nn::to_string(shape));
  }
  Var<S> h = obs;
  if (config_.torso == PolicyConfig::Torso::Impala) {
    for (const auto& stage : stages_) {
      h = nn::max_pool2d(stage.conv(h), 3, kPool);
      for (const auto* block : {&stage.r1, &stage.r2}) {
        h = nn::add(h, block->b(nn::relu(block->a(nn::relu(h)))));
      }
    }
    h = nn::relu(nn::flatten(h));
  } else {
    h = nn::flatten(h);
    for (const auto& layer : mlp_) h = nn::relu(layer(h));
  }
  h = nn::relu(dense_(h));
  const Var<S> values = value_head_(h);
  return {policy_head_(h), nn::reshape(values, {values.shape()[0]})};
}

template <typename S>
nn::ParameterSlots<S> PolicyModel<S>::slots() {
  nn::ParameterSlots<S> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "policy.stage" + std::to_string(i);
    stages_[i].conv.collect(p + ".conv", out);
    stages_[i].r1.a.collect(p + ".res1.a", out);
    stages_[i].r1.b.collect(p + ".res1.b", out);
    stages_[i].r2.a.collect(p + ".res2.a", out);
    stages_[i].r2.b.collect(p + ".res2.b", out);
  }
  for (std::size_t i = 0; i < mlp_.size(); ++i) mlp_[i].collect("policy.mlp" + std::to_string(i), out);
  dense_.collect("policy.dense", out);
  policy_head_.collect("policy.pi", out);
  value_head_.collect("policy.v", out);
  return out;
}

template <typename S>
PolicyOutput<S> policy_forward(const PolicyModel<S>& model, const Tensor<S>& obs) {
  nn::NoGradGuard no_grad;
  constexpr Index kChunk = 256;
  const Index n = obs.dim(0);
  if (n <= kChunk) return model.forward(Var<S>(obs));
  const Index per = obs.size() / n;
  const Index a = model.config().num_actions;
  Tensor<S> logits({n, a}), values({n});
  for (Index begin = 0; begin < n; begin += kChunk) {
    const Index end = std::min(n, begin + kChunk);
    nn::Shape shape = obs.shape();
    shape[0] = end - begin;
    Tensor<S> chunk(shape);
    chunk.vec() = obs.vec().segment(begin * per, (end - begin) * per);
    const PolicyOutput<S> out = model.forward(Var<S>(std::move(chunk)));
    logits.vec().segment(begin * a, (end - begin) * a) = out.logits.value().vec();
    values.vec().segment(begin, end - begin) = out.values.value().vec();
  }
  return {Var<S>(std::move(logits)), Var<S>(std::move(values))};
}

template class PolicyModel<float>;
template class PolicyModel<double>;
template PolicyOutput<float> policy_forward(const PolicyModel<float>&, const Tensor<float>&);
template PolicyOutput<double> policy_forward(const PolicyModel<double>&, const Tensor<double>&);

}  // namespace thinker::ppo

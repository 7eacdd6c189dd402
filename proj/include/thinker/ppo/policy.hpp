#pragma once

#include <vector>

#include "thinker/nn/layers.hpp"

namespace thinker::ppo {

using nn::Index;
using nn::Tensor;
using nn::Var;

struct PolicyConfig {
  enum class Torso { Impala, Mlp };
  Torso torso = Torso::Impala;
  int obs_height = 64;
  int obs_width = 64;
  int num_actions = 5;
  std::vector<int> channels{16, 32, 32};  // Impala stages
  int hidden = 256;
  std::vector<int> mlp_layers{64, 64};

  void validate() const;
};

template <typename S>
struct PolicyOutput {
  Var<S> logits;  // [N, A]
  Var<S> values;  // [N]
};

// Shared torso with categorical policy and scalar value heads.
template <typename S>
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(const PolicyConfig& config, std::uint64_t seed);

  // obs: [N,3,H,W], unit convention.
  PolicyOutput<S> forward(const Var<S>& obs) const;
  nn::ParameterSlots<S> slots();
  const PolicyConfig& config() const { return config_; }

 private:
  struct ResidualBlock {
    nn::Conv2d<S> a, b;
  };
  struct Stage {
    nn::Conv2d<S> conv;
    ResidualBlock r1, r2;
  };

  PolicyConfig config_;
  std::vector<Stage> stages_;
  std::vector<nn::Linear<S>> mlp_;
  nn::Linear<S> dense_, policy_head_, value_head_;
};

// Forward pass without recording a graph, chunked.
template <typename S>
PolicyOutput<S> policy_forward(const PolicyModel<S>& model, const Tensor<S>& obs);

}  // namespace thinker::ppo

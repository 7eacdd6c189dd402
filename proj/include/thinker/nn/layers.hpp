#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "thinker/core/rng.hpp"
#include "thinker/nn/ops.hpp"

namespace thinker::nn {

// Mutable handle to a model's parameter member, used for optimizers,
// checkpointing and deep copies.
template <typename S>
struct ParameterSlot {
  std::string name;
  Var<S>* var;
};

template <typename S>
using ParameterSlots = std::vector<ParameterSlot<S>>;

template <typename S>
Tensor<S> uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  Tensor<S> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <typename S>
Var<S> parameter(Tensor<S> value) {
  return Var<S>(std::move(value), true);
}

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  // Weights and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Conv2d(Index in_channels, Index out_channels, Index kernel, ConvGeometry geometry, Rng& rng)
      : geometry_(geometry) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
    weight = parameter(uniform_tensor<S>({out_channels, in_channels, kernel, kernel}, bound, rng));
    bias = parameter(uniform_tensor<S>({out_channels}, bound, rng));
  }

  Var<S> operator()(const Var<S>& x) const { return bias_add(conv2d(x, weight, geometry_), bias); }

  void scale_weights(double factor) {
    weight.mutable_value().vec() *= static_cast<S>(factor);
    bias.mutable_value().vec() *= static_cast<S>(factor);
  }

  void collect(const std::string& prefix, ParameterSlots<S>& out) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }

  Var<S> weight;
  Var<S> bias;

 private:
  ConvGeometry geometry_;
};

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(Index in_features, Index out_features, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    weight = parameter(uniform_tensor<S>({out_features, in_features}, bound, rng));
    bias = parameter(uniform_tensor<S>({out_features}, bound, rng));
  }

  Var<S> operator()(const Var<S>& x) const { return linear(x, weight, bias); }

  void scale_weights(double factor) {
    weight.mutable_value().vec() *= static_cast<S>(factor);
    bias.mutable_value().vec() *= static_cast<S>(factor);
  }

  void collect(const std::string& prefix, ParameterSlots<S>& out) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }

  Var<S> weight;
  Var<S> bias;
};

// Instance normalization with a learned per-channel scale and shift.
template <typename S>
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  explicit InstanceNorm2d(Index channels)
      : gamma(parameter(Tensor<S>::constant({channels}, S(1)))), beta(parameter(Tensor<S>::constant({channels}, S(0)))) {}

  Var<S> operator()(const Var<S>& x) const {
    const Var<S> y = mul(instance_norm(x), channel_broadcast(gamma, x.shape()));
    return add(y, channel_broadcast(beta, x.shape()));
  }

  void collect(const std::string& prefix, ParameterSlots<S>& out) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }

  Var<S> gamma;
  Var<S> beta;
};

template <typename S>
VarList<S> parameters_of(const ParameterSlots<S>& slots) {
  VarList<S> out;
  out.reserve(slots.size());
  for (const auto& slot : slots) out.push_back(*slot.var);
  return out;
}

// Replaces every parameter with a fresh leaf holding a copy of its value.
template <typename S>
void detach_parameters(const ParameterSlots<S>& slots) {
  for (const auto& slot : slots) *slot.var = Var<S>(slot.var->value(), true);
}

template <typename S>
Index parameter_count(const ParameterSlots<S>& slots) {
  Index n = 0;
  for (const auto& slot : slots) n += slot.var->value().size();
  return n;
}

}  // namespace thinker::nn

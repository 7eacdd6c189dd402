#pragma once

#include <cstdint>
#include <vector>

#include "thinker/nn/autograd.hpp"

namespace thinker::nn {

template <typename S>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(VarList<S> params, Options options);

  void zero_grad();
  // Parameters without a gradient are left untouched.
  void step();

  Options& options() noexcept { return options_; }
  const Options& options() const noexcept { return options_; }
  std::int64_t step_count() const noexcept { return steps_; }
  void set_step_count(std::int64_t steps) noexcept { steps_ = steps; }
  std::vector<Tensor<S>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<S>>& second_moments() noexcept { return v_; }
  const VarList<S>& params() const noexcept { return params_; }

 private:
  VarList<S> params_;
  Options options_;
  std::vector<Tensor<S>> m_;
  std::vector<Tensor<S>> v_;
  std::int64_t steps_ = 0;
};

template <typename S>
double global_grad_norm(const VarList<S>& params);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename S>
double clip_grad_norm(const VarList<S>& params, double max_norm);

}  // namespace thinker::nn

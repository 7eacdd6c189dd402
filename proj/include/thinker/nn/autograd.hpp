#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "thinker/nn/tensor.hpp"

namespace thinker::nn {

template <typename Scalar>
class Var;

template <typename Scalar>
using VarList = std::vector<Var<Scalar>>;

// Maps the gradient of a node's output to gradients of its inputs. Entries
// whose `needs` flag is false may be left undefined.
template <typename Scalar>
using BackwardFn = std::function<VarList<Scalar>(const Var<Scalar>& grad_output, const std::vector<bool>& needs)>;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // accumulated by backward(); leaves only
  bool requires_grad = false;
  // Backward closures of these ops are built from recorded ops, so a graph
  // produced with create_graph can be differentiated again.
  bool double_backward = true;
  const char* op = "leaf";
  VarList<Scalar> inputs;
  BackwardFn<Scalar> backward;
};

// Shared handle to a graph node. Copies alias the same value; parameters are
// Vars created with requires_grad.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const noexcept { return !node_->backward; }

  const Tensor<Scalar>& grad() const { return node_->grad; }
  Tensor<Scalar>& mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  // Constant copy of the current value.
  Var detach() const { return Var(node_->value, false); }

  Node<Scalar>* node() const noexcept { return node_.get(); }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

// Thread-local switch controlling whether ops record a graph.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool enabled) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class EnableGradGuard {
 public:
  EnableGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(true); }
  ~EnableGradGuard() { GradMode::set_enabled(previous_); }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

// Wraps an op result. Records the node only when grad mode is on and some
// input requires grad; otherwise returns a constant.
template <typename Scalar>
Var<Scalar> make_op(const char* name, Tensor<Scalar> value, VarList<Scalar> inputs, BackwardFn<Scalar> backward,
                    bool double_backward = true) {
  bool record = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) record = record || in.requires_grad();
  }
  if (!record) return Var<Scalar>(std::move(value), false);
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->double_backward = double_backward;
  node->op = name;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  return Var<Scalar>(std::move(node));
}

// Gradients of scalar `output` with respect to `inputs` (zeros where
// unreachable). With create_graph the results are themselves differentiable.
template <typename Scalar>
VarList<Scalar> grad(const Var<Scalar>& output, const VarList<Scalar>& inputs, bool create_graph = false);

// Same, seeded with an explicit output gradient.
template <typename Scalar>
VarList<Scalar> grad(const Var<Scalar>& output, const Var<Scalar>& grad_output, const VarList<Scalar>& inputs,
                     bool create_graph);

// Accumulates d(output)/d(leaf) into every reachable leaf's grad().
template <typename Scalar>
void backward(const Var<Scalar>& output);

}  // namespace thinker::nn

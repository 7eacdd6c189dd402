#include "thinker/nn/autograd.hpp"

#include <string>
#include <unordered_map>
#include <unordered_set>

#include "thinker/nn/ops.hpp"

namespace thinker::nn {

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) noexcept { grad_mode_enabled = enabled; }

namespace {

// Post-order (inputs before consumers) over nodes that require grad.
template <typename S>
std::vector<Node<S>*> topological_order(Node<S>* root) {
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  if (!root->requires_grad) return order;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<S>* child = node->inputs[next++].node();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename S>
std::unordered_map<Node<S>*, Var<S>> run(const Var<S>& output, const Var<S>& grad_output,
                                         const std::unordered_set<Node<S>*>& targets, bool create_graph) {
  std::unordered_map<Node<S>*, Var<S>> grads;
  if (!output.requires_grad()) return grads;
  const auto order = topological_order(output.node());

  std::unordered_set<Node<S>*> needed;
  for (Node<S>* node : order) {
    bool need = targets.count(node) > 0;
    for (const auto& in : node->inputs) need = need || needed.count(in.node()) > 0;
    if (need) needed.insert(node);
  }

  std::unique_ptr<NoGradGuard> no_grad;
  std::unique_ptr<EnableGradGuard> with_grad;
  if (create_graph) {
    with_grad = std::make_unique<EnableGradGuard>();
  } else {
    no_grad = std::make_unique<NoGradGuard>();
  }

  grads[output.node()] = grad_output;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    if (!needed.count(node)) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (!node->backward) continue;  // leaf: keep its gradient
    if (create_graph && !node->double_backward) {
      throw StateError(std::string("double backward is not supported through op '") + node->op + "'");
    }
    Var<S> g = found->second;
    if (!targets.count(node)) grads.erase(found);

    std::vector<bool> needs(node->inputs.size());
    for (std::size_t i = 0; i < needs.size(); ++i) needs[i] = needed.count(node->inputs[i].node()) > 0;
    VarList<S> input_grads = node->backward(g, needs);
    for (std::size_t i = 0; i < needs.size(); ++i) {
      if (!needs[i] || !input_grads[i].defined()) continue;
      Node<S>* in = node->inputs[i].node();
      auto slot = grads.find(in);
      if (slot == grads.end()) {
        grads.emplace(in, input_grads[i]);
      } else {
        slot->second = add(slot->second, input_grads[i]);
      }
    }
  }
  return grads;
}

template <typename S>
Var<S> ones_like(const Var<S>& v) {
  return Var<S>(Tensor<S>::constant(v.shape(), S(1)), false);
}

}  // namespace

template <typename S>
VarList<S> grad(const Var<S>& output, const Var<S>& grad_output, const VarList<S>& inputs, bool create_graph) {
  std::unordered_set<Node<S>*> targets;
  for (const auto& in : inputs) targets.insert(in.node());
  auto grads = run(output, grad_output, targets, create_graph);
  VarList<S> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto found = grads.find(in.node());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else {
      result.emplace_back(Tensor<S>(in.shape()), false);
    }
  }
  return result;
}

template <typename S>
VarList<S> grad(const Var<S>& output, const VarList<S>& inputs, bool create_graph) {
  if (output.value().size() != 1) throw ArgumentError("grad: output must be a scalar");
  return grad(output, ones_like(output), inputs, create_graph);
}

template <typename S>
void backward(const Var<S>& output) {
  if (output.value().size() != 1) throw ArgumentError("backward: output must be a scalar");
  std::unordered_set<Node<S>*> leaves;
  for (Node<S>* node : topological_order(output.node())) {
    if (!node->backward) leaves.insert(node);
  }
  auto grads = run(output, ones_like(output), leaves, false);
  for (Node<S>* leaf : leaves) {
    auto found = grads.find(leaf);
    if (found == grads.end()) continue;
    if (leaf->grad.size() == 0) {
      leaf->grad = found->second.value();
    } else {
      leaf->grad.vec() += found->second.value().vec();
    }
  }
}

#define THINKER_INSTANTIATE_AUTOGRAD(S)                                                    \
  template VarList<S> grad<S>(const Var<S>&, const VarList<S>&, bool);                     \
  template VarList<S> grad<S>(const Var<S>&, const Var<S>&, const VarList<S>&, bool);      \
  template void backward<S>(const Var<S>&);

THINKER_INSTANTIATE_AUTOGRAD(float)
THINKER_INSTANTIATE_AUTOGRAD(double)

}  // namespace thinker::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ffsd/tensor.hpp"

namespace ffsd {

template <typename T>
class Tape;

// One recorded value in a forward pass. `grad` matches `value` in shape and
// starts at zero; `backward` reads this node's grad and accumulates into the
// grads of its inputs and of any captured parameters.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool touched = false;  // set once something accumulated into grad
  std::function<void(Tape<T>&, Node<T>&)> backward;
};

// Append-only record of one forward pass. Creation order is a topological
// order, so a single reverse sweep propagates gradients. Parameter gradients
// are staged in tape-local buffers; the owner flushes tapes in a fixed order,
// which keeps multi-threaded batches bit-identical at any thread count.
template <typename T>
class Tape {
 public:
  Node<T>* leaf(Tensor<T> v) { return make(std::move(v), nullptr); }

  Node<T>* make(Tensor<T> v, std::function<void(Tape<T>&, Node<T>&)> backward) {
    auto node = std::make_unique<Node<T>>();
    node->value = std::move(v);
    node->grad = Tensor<T>::zeros_like(node->value);
    node->backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  // Tape-local gradient buffer for a shared parameter.
  Tensor<T>& grad_of(Param<T>& p) {
    auto it = pindex_.find(&p);
    if (it != pindex_.end()) return pgrads_[it->second].second;
    pindex_.emplace(&p, pgrads_.size());
    pgrads_.emplace_back(&p, Tensor<T>::zeros_like(p.value));
    return pgrads_.back().second;
  }

  static void accumulate(Node<T>& dst, const Tensor<T>& g) {
    for (int i = 0; i < g.count(); ++i) dst.grad.data[i] += g.data[i];
    dst.touched = true;
  }

  void seed(Node<T>* node, const Tensor<T>& g) {
    if (!node->grad.same_shape(g))
      throw std::invalid_argument("Tape::seed: seed shape mismatch");
    accumulate(*node, g);
  }

  // One reverse sweep over the whole tape. Nodes never reached by any seed
  // keep zero grads and their backward is skipped.
  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.touched && node.backward) node.backward(*this, node);
    }
  }

  void backward(Node<T>* from, const Tensor<T>& seed_grad) {
    seed(from, seed_grad);
    run_backward();
  }

  // Training does not consume input-image gradients; ops may skip the
  // backward-to-leaf work when this is off. Probing (e.g. receptive fields)
  // leaves it on.
  void set_want_leaf_grads(bool v) { want_leaf_grads_ = v; }
  bool wants_grad(const Node<T>& n) const { return want_leaf_grads_ || n.backward != nullptr; }

  // Adds the staged parameter gradients into Param::grad, in first-use order.
  void flush_param_grads() {
    for (auto& [param, g] : pgrads_)
      for (int i = 0; i < g.count(); ++i) param->grad.data[i] += g.data[i];
  }

  const std::vector<std::pair<Param<T>*, Tensor<T>>>& staged_grads() const { return pgrads_; }

 private:
  std::vector<std::unique_ptr<Node<T>>> nodes_;
  std::vector<std::pair<Param<T>*, Tensor<T>>> pgrads_;
  std::unordered_map<Param<T>*, std::size_t> pindex_;
  bool want_leaf_grads_ = true;
};

}  // namespace ffsd

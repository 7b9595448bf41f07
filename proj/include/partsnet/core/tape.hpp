// Reverse-mode autodiff tape over 4-D tensors.
//
// A Tape is built per forward pass; node ids are indices into an append-only
// vector, so creation order is already a topological order. backward() seeds
// the scalar loss with gradient 1 and runs each reachable node's backprop
// closure exactly once, in reverse creation order; gradients of shared
// subgraphs accumulate by addition. Gradients are only materialized for nodes
// that (transitively) depend on a leaf registered with needs_grad.
#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "partsnet/core/tensor.hpp"

namespace partsnet {

enum class OpKind {
  Leaf,
  Conv2d,
  MaxPool2,
  Upsample4,
  BatchNorm,
  Relu,
  Sigmoid,
  Add,
  Affine,
  MulScalar,
  SubScalar,
  MeanPerImage,
  MeanAll,
  Mse,
  SumSquares,
};

using ValueId = int;

template <typename T>
class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::Leaf;
    Tensor<T> value;
    Tensor<T> grad;  // allocated during backward for needs_grad nodes
    std::vector<ValueId> parents;
    std::function<void(Tape&, ValueId)> backprop;
    bool needs_grad = false;
  };

  ValueId leaf(Tensor<T> value, bool needs_grad = false) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  ValueId emplace(OpKind kind, Tensor<T> value, std::vector<ValueId> parents,
                  std::function<void(Tape&, ValueId)> backprop) {
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (ValueId p : n.parents) n.needs_grad = n.needs_grad || node(p).needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  Node& node(ValueId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(ValueId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  const Tensor<T>& value(ValueId id) const { return node(id).value; }

  const Tensor<T>& grad(ValueId id) const {
    const Node& n = node(id);
    if (n.grad.empty()) {
      throw std::logic_error("Tape::grad: no gradient on this node; run backward() first "
                             "and register the leaf with needs_grad");
    }
    return n.grad;
  }

  // Accumulation target used by backprop closures; no-op sink for nodes that
  // never needed gradients.
  void accumulate_grad(ValueId id, const Tensor<T>& g) {
    Node& n = node(id);
    if (!n.needs_grad) return;
    if (n.grad.empty()) {
      n.grad = Tensor<T>(n.value.shape());
    }
    detail::require(n.grad.shape() == g.shape(),
                    "Tape: gradient shape " + g.shape().str() + " does not match value shape " +
                        n.grad.shape().str());
    T* dst = n.grad.data();
    const T* src = g.data();
    const std::int64_t count = g.numel();
    for (std::int64_t i = 0; i < count; ++i) dst[i] += src[i];
  }

  Tensor<T>* grad_sink(ValueId id) {
    Node& n = node(id);
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
  }

  void backward(ValueId loss) {
    Node& root = node(loss);
    if (root.value.numel() != 1) {
      throw std::logic_error("Tape::backward: loss must be scalar, got shape " +
                             root.value.shape().str());
    }
    if (!root.needs_grad) {
      throw std::logic_error("Tape::backward: loss does not depend on any needs_grad leaf");
    }

    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<ValueId> stack{loss};
    reachable[static_cast<std::size_t>(loss)] = 1;
    while (!stack.empty()) {
      ValueId id = stack.back();
      stack.pop_back();
      for (ValueId p : node(id).parents) {
        if (!reachable[static_cast<std::size_t>(p)]) {
          reachable[static_cast<std::size_t>(p)] = 1;
          stack.push_back(p);
        }
      }
    }

    root.grad = Tensor<T>::scalar(T(1));
    for (ValueId id = static_cast<ValueId>(nodes_.size()) - 1; id >= 0; --id) {
      if (!reachable[static_cast<std::size_t>(id)]) continue;
      Node& n = node(id);
      if (!n.needs_grad || !n.backprop) continue;
      if (n.grad.empty()) continue;  // not on any path that received gradient
      n.backprop(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace partsnet

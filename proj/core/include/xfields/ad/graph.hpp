// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfields/ad/tensor.hpp"

namespace xfields::ad {

/// Index of a node inside a Graph. Only valid for the graph that issued it.
struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

/// A differentiable operation. Ops are stateless apart from their
/// configuration and may be shared between graphs.
template <typename T>
class Op {
 public:
  using Inputs = std::span<const Tensor<T>* const>;

  virtual ~Op() = default;

  virtual std::string name() const = 0;

  /// Throws ShapeError when the inputs violate the op's shape rule.
  virtual Shape output_shape(std::span<const Shape> inputs) const = 0;

  /// `out` arrives zero-filled with the shape returned by output_shape.
  virtual void forward(Inputs inputs, Tensor<T>& out) const = 0;

  /// Accumulates d(loss)/d(input i) into grads[i]. Entries are null for
  /// inputs that do not need a gradient.
  virtual void backward(Inputs inputs, const Tensor<T>& out,
                        const Tensor<T>& grad_out,
                        std::span<Tensor<T>* const> grads) const = 0;

  /// Describes the first input element that lies within `radius` of a point
  /// where the op is not differentiable, considering only inputs flagged in
  /// `needs_grad`. Smooth ops keep the default.
  virtual std::optional<std::string> find_kink(Inputs /*inputs*/,
                                               std::span<const bool> /*needs_grad*/,
                                               double /*radius*/) const {
    return std::nullopt;
  }
};

template <typename T>
class Gradients {
 public:
  void set(NodeId leaf, Tensor<T> grad) {
    entries_.push_back({leaf, std::move(grad)});
  }

  /// Throws GraphStateError when `leaf` is not a trainable parameter.
  const Tensor<T>& at(NodeId leaf) const;

  std::size_t size() const { return entries_.size(); }

  struct Entry {
    NodeId leaf;
    Tensor<T> grad;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

/// Static computation graph. Nodes are appended in topological order; leaves
/// can be re-bound and the graph re-evaluated with forward().
template <typename T>
class Graph {
 public:
  enum class Kind { constant, parameter, op };

  NodeId constant(Tensor<T> value);
  NodeId parameter(Tensor<T> value, std::string name = {});
  NodeId apply(std::shared_ptr<const Op<T>> op, std::vector<NodeId> inputs);

  /// Replaces the value of a leaf. Shape must match; invalidates evaluation.
  void bind(NodeId leaf, Tensor<T> value);

  /// Evaluates every op node in insertion order. Throws NonFiniteError with
  /// the offending node id when any value is NaN or Inf.
  void forward();

  /// Reverse-mode sweep from a scalar node. Returns one gradient per
  /// trainable parameter (zeros where the output does not depend on it).
  Gradients<T> backward(NodeId output) const;

  /// Throws NonDifferentiablePointError when some op input that carries a
  /// gradient sits within `radius` of a kink. Requires forward().
  void check_kinks(double radius) const;

  const Tensor<T>& value(NodeId id) const;
  const Shape& shape(NodeId id) const { return node(id).shape; }
  Kind kind(NodeId id) const { return node(id).kind; }
  const std::string& name(NodeId id) const { return node(id).name; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  bool evaluated() const { return evaluated_; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> parameters() const;

 private:
  struct Node {
    Kind kind;
    std::string name;
    Shape shape;
    std::shared_ptr<const Op<T>> op;
    std::vector<NodeId> inputs;
    bool requires_grad = false;
  };

  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> values_;
  bool evaluated_ = false;
};

extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace xfields::ad

// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/ad/graph.hpp"

#include <utility>

namespace xfields::ad {

template <typename T>
const Tensor<T>& Gradients<T>::at(NodeId leaf) const {
  for (const auto& e : entries_) {
    if (e.leaf == leaf) return e.grad;
  }
  throw GraphStateError("no gradient recorded for node " +
                        std::to_string(leaf.index));
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw GraphStateError("node id " + std::to_string(id.index) +
                          " out of range");
  }
  return nodes_[id.index];
}

template <typename T>
NodeId Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back({Kind::constant, {}, value.shape(), nullptr, {}, false});
  values_.push_back(std::move(value));
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::parameter(Tensor<T> value, std::string name) {
  nodes_.push_back(
      {Kind::parameter, std::move(name), value.shape(), nullptr, {}, true});
  values_.push_back(std::move(value));
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

template <typename T>
NodeId Graph<T>::apply(std::shared_ptr<const Op<T>> op,
                       std::vector<NodeId> inputs) {
  std::vector<Shape> shapes;
  shapes.reserve(inputs.size());
  bool requires_grad = false;
  for (const NodeId in : inputs) {
    const Node& n = node(in);
    shapes.push_back(n.shape);
    requires_grad = requires_grad || n.requires_grad;
  }
  Shape out_shape;
  try {
    out_shape = op->output_shape(shapes);
  } catch (const ShapeError& e) {
    throw ShapeError(op->name() + ": " + e.what());
  }
  nodes_.push_back({Kind::op, op->name(), std::move(out_shape), std::move(op),
                    std::move(inputs), requires_grad});
  values_.emplace_back();
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

template <typename T>
void Graph<T>::bind(NodeId leaf, Tensor<T> value) {
  const Node& n = node(leaf);
  if (n.kind == Kind::op) {
    throw GraphStateError("cannot bind op node " + std::to_string(leaf.index));
  }
  if (value.shape() != n.shape) {
    throw ShapeError("bind: expected shape " + shape_to_string(n.shape) +
                     ", got " + shape_to_string(value.shape()));
  }
  values_[leaf.index] = std::move(value);
  evaluated_ = false;
}

template <typename T>
void Graph<T>::forward() {
  std::vector<const Tensor<T>*> args;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != Kind::op) {
      if (!values_[i].all_finite()) {
        throw NonFiniteError(i, n.kind == Kind::constant ? "constant"
                                                         : "parameter");
      }
      continue;
    }
    args.clear();
    for (const NodeId in : n.inputs) args.push_back(&values_[in.index]);
    Tensor<T> out(n.shape);
    n.op->forward(args, out);
    if (!out.all_finite()) throw NonFiniteError(i, n.name);
    values_[i] = std::move(out);
  }
  evaluated_ = true;
}

template <typename T>
const Tensor<T>& Graph<T>::value(NodeId id) const {
  const Node& n = node(id);
  if (n.kind == Kind::op && !evaluated_) {
    throw GraphStateError("graph has not been evaluated");
  }
  return values_[id.index];
}

template <typename T>
std::vector<NodeId> Graph<T>::parameters() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == Kind::parameter) out.push_back(NodeId{i});
  }
  return out;
}

template <typename T>
Gradients<T> Graph<T>::backward(NodeId output) const {
  if (!evaluated_) throw GraphStateError("backward before forward");
  const Node& out_node = node(output);
  if (shape_size(out_node.shape) != 1) {
    throw ShapeError("backward requires a scalar output, got " +
                     shape_to_string(out_node.shape));
  }

  std::vector<Tensor<T>> grads(output.index + 1);
  grads[output.index] = Tensor<T>(out_node.shape, T(1));

  std::vector<const Tensor<T>*> args;
  std::vector<Tensor<T>*> arg_grads;
  for (std::size_t i = output.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.kind != Kind::op || grads[i].empty() || !n.requires_grad) continue;
    args.clear();
    arg_grads.clear();
    for (const NodeId in : n.inputs) {
      args.push_back(&values_[in.index]);
      if (nodes_[in.index].requires_grad) {
        if (grads[in.index].empty()) {
          grads[in.index] = Tensor<T>(nodes_[in.index].shape);
        }
        arg_grads.push_back(&grads[in.index]);
      } else {
        arg_grads.push_back(nullptr);
      }
    }
    n.op->backward(args, values_[i], grads[i], arg_grads);
    // Intermediate adjoints are no longer needed once propagated.
    grads[i] = Tensor<T>();
  }

  Gradients<T> result;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind != Kind::parameter) continue;
    if (i < grads.size() && !grads[i].empty()) {
      result.set(NodeId{i}, std::move(grads[i]));
    } else {
      result.set(NodeId{i}, Tensor<T>(nodes_[i].shape));
    }
  }
  return result;
}

template <typename T>
void Graph<T>::check_kinks(double radius) const {
  if (!evaluated_) throw GraphStateError("check_kinks before forward");
  std::vector<const Tensor<T>*> args;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != Kind::op || !n.requires_grad) continue;
    args.clear();
    // std::vector<bool> has no contiguous storage to hand out as a span.
    auto needs = std::make_unique<bool[]>(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      args.push_back(&values_[n.inputs[k].index]);
      needs[k] = nodes_[n.inputs[k].index].requires_grad;
    }
    auto kink = n.op->find_kink(
        args, std::span<const bool>(needs.get(), n.inputs.size()), radius);
    if (kink) {
      throw NonDifferentiablePointError("node " + std::to_string(i) + " (" +
                                        n.name + "): " + *kink);
    }
  }
}

template class Gradients<float>;
template class Gradients<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace xfields::ad

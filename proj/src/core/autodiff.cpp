#include "scn/core/autodiff.hpp"

#include "scn/core/errors.hpp"
#include "scn/core/ops.hpp"

namespace scn::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Pullback pullback) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw InvalidArgument("variable recorded on a different tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw InvalidArgument("backward on a foreign variable");
  if (root.value().size() != 1) {
    throw ShapeError("backward needs a scalar root, got " + shape_str(root.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[root.id()] = Tensor(root.shape(), 1.0);

  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.pullback || grads_[id].empty()) continue;

    PullbackArgs args{grads_[id], {}, node.value, {}};
    args.inputs.reserve(node.inputs.size());
    for (auto in : node.inputs) {
      args.inputs.push_back(&nodes_[in].value);
      args.needs.push_back(nodes_[in].requires_grad);
    }
    std::vector<Tensor> in_grads = node.pullback(args);
    for (std::size_t i = 0; i < node.inputs.size() && i < in_grads.size(); ++i) {
      if (in_grads[i].empty() || !args.needs[i]) continue;
      Tensor& acc = grads_[node.inputs[i]];
      if (acc.empty()) {
        acc = std::move(in_grads[i]);
      } else {
        axpy(acc, in_grads[i]);
      }
    }
  }
}

Tensor Tape::grad(Var v) const {
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
  return Tensor(v.shape(), 0.0);
}

bool Tape::has_grad(Var v) const {
  return v.id() < grads_.size() && !grads_[v.id()].empty();
}

}  // namespace scn::ad

#ifndef SCN_CORE_AUTODIFF_HPP
#define SCN_CORE_AUTODIFF_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "scn/core/tensor.hpp"

namespace scn::ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Arguments handed to a pullback when the tape is replayed.
struct PullbackArgs {
  const Tensor& grad;                       // dL/d(output)
  std::vector<const Tensor*> inputs;        // forward input values
  const Tensor& output;                     // forward output value
  std::vector<bool> needs;                  // which inputs want a gradient
};

/// Returns one gradient per input; an empty Tensor means "no contribution".
using Pullback = std::function<std::vector<Tensor>(const PullbackArgs&)>;

/// Single-writer reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node index is a
/// topological order and backward() simply walks it in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Records an op. The pullback is dropped when no input requires a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, Pullback pullback);

  /// Seeds d(root)/d(root) = 1; root must hold exactly one element.
  void backward(Var root);

  /// Gradient accumulated for v; zeros of v's shape if nothing reached it.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    Pullback pullback;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace scn::ad

#endif  // SCN_CORE_AUTODIFF_HPP

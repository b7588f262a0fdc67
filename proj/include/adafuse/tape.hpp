#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "adafuse/params.hpp"
#include "adafuse/tensor.hpp"

namespace adafuse {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode autodiff tape. One tape is recorded per forward pass and
/// discarded after backward. Not thread-safe; use one tape per thread.
class Tape {
 public:
  /// Receives the upstream gradient of the node it was recorded with.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to a parameter entry; it requires grad iff the entry is trainable.
  Var parameter(const Params& params, std::string_view name);

  /// Used by op implementations. `backward` is dropped when no input requires grad.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Empty span when no gradient reached this node.
  std::span<const double> grad(Var v) const;
  /// Zero-initialised on first access.
  std::span<double> grad_accumulator(Var v);

  /// Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var root);

  /// Adds gradients of leaves bound to `params` into the entries' grad slots.
  /// Trainable entries that were not used receive a zero gradient.
  void accumulate_into(Params& params) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
    const Params* owner = nullptr;
    std::size_t param_index = 0;
  };
  std::vector<Node> nodes_;
};

}  // namespace adafuse

#include "adafuse/tape.hpp"

#include "adafuse/error.hpp"

namespace adafuse {

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, nullptr, 0});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Params& params, std::string_view name) {
  const std::size_t idx = params.index_of(name);
  const auto& e = params.entries()[idx];
  nodes_.push_back(Node{e.value.reshaped(e.value.shape()), {}, e.trainable, nullptr,
                        &params, idx});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

std::span<const double> Tape::grad(Var v) const { return nodes_[v.id].grad; }

std::span<double> Tape::grad_accumulator(Var v) {
  auto& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (nodes_[root.id].value.size() != 1) {
    throw DimensionError("backward root must be a scalar, got shape " +
                         shape_string(nodes_[root.id].value.shape()));
  }
  if (!nodes_[root.id].requires_grad) return;
  grad_accumulator(root)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Copy out: the callback may grow other nodes' grads but never this one.
    const std::vector<double> upstream = n.grad;
    n.backward(*this, upstream);
  }
}

void Tape::accumulate_into(Params& params) const {
  for (auto& e : params.entries()) {
    if (e.trainable) e.value.grad();
  }
  for (const auto& n : nodes_) {
    if (n.owner != &params || !n.requires_grad || n.grad.empty()) continue;
    auto g = params.entries()[n.param_index].value.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

}  // namespace adafuse

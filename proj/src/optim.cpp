#include "adafuse/optim.hpp"

#include "adafuse/error.hpp"

namespace adafuse {

void sgd_step(Params& params, double learning_rate, double momentum) {
  if (!(learning_rate >= 0.0)) throw ParameterError("sgd_step: learning rate must be >= 0");
  if (!(momentum >= 0.0)) throw ParameterError("sgd_step: momentum must be >= 0");
  for (const auto& e : params.entries()) {
    if (e.trainable && !e.value.has_grad()) {
      throw StateError("sgd_step: trainable parameter '" + e.name + "' has no gradient");
    }
  }
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    auto p = e.value.data();
    auto g = e.value.grad();
    if (e.velocity.size() != p.size()) e.velocity.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      e.velocity[i] = momentum * e.velocity[i] - learning_rate * g[i];
      p[i] += e.velocity[i];
    }
    e.value.zero_grad();
  }
}

}  // namespace adafuse

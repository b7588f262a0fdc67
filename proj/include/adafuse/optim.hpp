#pragma once

#include "adafuse/params.hpp"

namespace adafuse {

/// Momentum SGD, in place: v <- momentum*v - lr*grad; p <- p + v.
/// Non-trainable entries are left untouched. Gradients are zeroed afterwards.
/// Throws StateError if a trainable entry has no gradient.
void sgd_step(Params& params, double learning_rate, double momentum);

}  // namespace adafuse

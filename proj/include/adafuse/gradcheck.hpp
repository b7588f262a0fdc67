#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "adafuse/params.hpp"
#include "adafuse/rng.hpp"

namespace adafuse {

/// Evaluates a scalar loss at the current parameter values. When
/// `compute_grad` is true it must also add d(loss)/d(param) into the grad
/// slot of every trainable entry (Tape::accumulate_into does this).
using LossFn = std::function<double(Params&, bool compute_grad)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
};

/// Compares analytic gradients against central differences
/// (L(p+eps) - L(p-eps)) / (2 eps) on up to `coords_per_tensor` randomly
/// sampled coordinates of each trainable tensor. The relative error of one
/// coordinate is |a - n| / max(1e-8, |a| + |n|).
///
/// Throws DeterminismError when two baseline evaluations differ.
GradCheckReport finite_difference_check(const LossFn& loss_fn, Params& params, double epsilon,
                                        std::size_t coords_per_tensor, Rng& rng);

}  // namespace adafuse

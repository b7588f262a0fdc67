#include "adafuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "adafuse/error.hpp"

namespace adafuse {

GradCheckReport finite_difference_check(const LossFn& loss_fn, Params& params, double epsilon,
                                        std::size_t coords_per_tensor, Rng& rng) {
  if (!(epsilon > 0.0)) throw ParameterError("finite_difference_check: epsilon must be positive");
  const double first = loss_fn(params, false);
  const double second = loss_fn(params, false);
  if (first != second) {
    throw DeterminismError("finite_difference_check: loss changed between identical calls (" +
                           std::to_string(first) + " vs " + std::to_string(second) + ")");
  }

  for (auto& e : params.entries()) e.value.drop_grad();
  loss_fn(params, true);

  GradCheckReport report;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    const std::size_t n = e.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_tensor);
    }
    const std::vector<double> analytic(e.value.grad().begin(), e.value.grad().end());
    for (std::size_t i : coords) {
      const double saved = e.value[i];
      e.value[i] = saved + epsilon;
      const double up = loss_fn(params, false);
      e.value[i] = saved - epsilon;
      const double down = loss_fn(params, false);
      e.value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      ++report.coordinates_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = e.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace adafuse

#pragma once

#include <cstddef>

#include "adafuse/geometry.hpp"
#include "adafuse/tensor.hpp"

namespace adafuse {

/// Bilinear resample of `box` from a [C,H,W] image to [C,out_h,out_w]
/// using pixel-centre alignment and edge clamping.
Tensor crop_resize(const Tensor& image, const BoundingBox& box, std::size_t out_h,
                   std::size_t out_w);

/// Mean filter of odd size `kernel` with replicated borders; kernel 1 is a copy.
Tensor box_blur(const Tensor& image, std::size_t kernel);

/// Stacks [C_i,H,W] images along the channel axis.
Tensor stack_channels(const Tensor& a, const Tensor& b);

/// Jet-colorised depth. Readings are clamped to [min_m, max_m], normalised to
/// [0,1] and mapped through the knots blue(0) cyan(1/3) yellow(2/3) red(1).
/// Invalid readings (0 or non-finite) become black.
Tensor colorize_depth(const Tensor& depth, double min_m, double max_m);

/// Jet colour for a parameter in [0,1], written to rgb[0..2].
void jet_color(double t, double rgb[3]);

}  // namespace adafuse

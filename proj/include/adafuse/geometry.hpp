#pragma once

#include <string>

namespace adafuse {

/// Axis-aligned box in pixel coordinates, half-open: covers
/// [x_min, x_max) x [y_min, y_max). Valid boxes have positive area.
struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const;
  bool inside(double frame_width, double frame_height) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

std::string to_string(const BoundingBox& b);

/// Intersection area over union area, in [0,1].
double iou(const BoundingBox& a, const BoundingBox& b);

/// Intersection area.
double overlap_area(const BoundingBox& a, const BoundingBox& b);

}  // namespace adafuse

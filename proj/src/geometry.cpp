#include "adafuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace adafuse {

bool BoundingBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_max > x_min && y_max > y_min;
}

bool BoundingBox::inside(double frame_width, double frame_height) const {
  return x_min >= 0 && y_min >= 0 && x_max <= frame_width && y_max <= frame_height;
}

std::string to_string(const BoundingBox& b) {
  std::ostringstream os;
  os << '(' << b.x_min << ',' << b.y_min << ',' << b.x_max << ',' << b.y_max << ')';
  return os.str();
}

double overlap_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = overlap_area(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace adafuse

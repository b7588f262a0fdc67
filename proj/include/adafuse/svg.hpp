#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace adafuse {

struct SvgSeries {
  std::string label;
  std::string color;  // any SVG colour
  std::vector<std::pair<double, double>> points;
};

/// Line plot with axes, ticks and a legend.
struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  // Axis ranges; when min == max the range is taken from the data.
  double x_min = 0, x_max = 0;
  double y_min = 0, y_max = 0;
  /// Optional vertical markers, e.g. regime changes.
  std::vector<double> x_markers;
};

std::string render_svg(const SvgPlot& plot);
void write_svg(const std::filesystem::path& path, const SvgPlot& plot);

}  // namespace adafuse

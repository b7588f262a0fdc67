#include "adafuse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "adafuse/error.hpp"

namespace adafuse {

namespace {

constexpr double kWidth = 720, kHeight = 360;
constexpr double kLeft = 60, kRight = 20, kTop = 36, kBottom = 48;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::pair<double, double> data_range(const SvgPlot& p, bool x) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : p.series) {
    for (const auto& [px, py] : s.points) {
      const double v = x ? px : py;
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0, 1};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

}  // namespace

std::string render_svg(const SvgPlot& plot) {
  auto [x0, x1] = plot.x_min == plot.x_max ? data_range(plot, true) : std::pair{plot.x_min, plot.x_max};
  auto [y0, y1] = plot.y_min == plot.y_max ? data_range(plot, false) : std::pair{plot.y_min, plot.y_max};
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto sx = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double v) { return kTop + (1 - (v - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(plot.title) << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    o << "<line x1=\"" << sx(xv) << "\" y1=\"" << kTop + ph << "\" x2=\"" << sx(xv) << "\" y2=\""
      << kTop + ph + 4 << "\" stroke=\"black\"/>"
      << "<text x=\"" << sx(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
      << num(xv) << "</text>\n";
    o << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << sy(yv) << "\" x2=\"" << kLeft << "\" y2=\""
      << sy(yv) << "\" stroke=\"black\"/>"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
    << escape(plot.x_label) << "</text>\n";
  o << "<text transform=\"translate(14," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(plot.y_label) << "</text>\n";
  for (double m : plot.x_markers) {
    if (m < x0 || m > x1) continue;
    o << "<line x1=\"" << sx(m) << "\" y1=\"" << kTop << "\" x2=\"" << sx(m) << "\" y2=\"" << kTop + ph
      << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const auto& s = plot.series[i];
    o << "<polyline fill=\"none\" stroke=\"" << escape(s.color) << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [px, py] : s.points) {
      if (std::isfinite(px) && std::isfinite(py)) o << sx(px) << ',' << sy(py) << ' ';
    }
    o << "\"/>\n";
    const double ly = kTop + 14 + 14 * static_cast<double>(i);
    o << "<line x1=\"" << kLeft + pw - 110 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + pw - 92
      << "\" y2=\"" << ly - 4 << "\" stroke=\"" << escape(s.color) << "\" stroke-width=\"2\"/>"
      << "<text x=\"" << kLeft + pw - 88 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg(const std::filesystem::path& path, const SvgPlot& plot) {
  std::ofstream out(path, std::ios::binary);
  out << render_svg(plot);
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace adafuse

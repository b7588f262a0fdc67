#include "adafuse/image.hpp"

#include <algorithm>
#include <cmath>

#include "adafuse/error.hpp"

namespace adafuse {

namespace {

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(what) + ": expected [C,H,W], got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor crop_resize(const Tensor& image, const BoundingBox& box, std::size_t out_h,
                   std::size_t out_w) {
  require_image(image, "crop_resize");
  if (!box.valid()) throw InputError("crop_resize: invalid box " + to_string(box));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, out_h, out_w});
  const double sy = box.height() / static_cast<double>(out_h);
  const double sx = box.width() / static_cast<double>(out_w);
  std::vector<std::size_t> x0(out_w), x1(out_w);
  std::vector<double> fx(out_w);
  for (std::size_t ox = 0; ox < out_w; ++ox) {
    double x = box.x_min + (static_cast<double>(ox) + 0.5) * sx - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    x0[ox] = static_cast<std::size_t>(std::floor(x));
    x1[ox] = std::min(x0[ox] + 1, w - 1);
    fx[ox] = x - static_cast<double>(x0[ox]);
  }
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    double y = box.y_min + (static_cast<double>(oy) + 0.5) * sy - 0.5;
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double top = image.at(ch, y0, x0[ox]) * (1 - fx[ox]) + image.at(ch, y0, x1[ox]) * fx[ox];
        const double bot = image.at(ch, y1, x0[ox]) * (1 - fx[ox]) + image.at(ch, y1, x1[ox]) * fx[ox];
        out.at(ch, oy, ox) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

Tensor box_blur(const Tensor& image, std::size_t kernel) {
  require_image(image, "box_blur");
  if (kernel == 0 || kernel % 2 == 0) {
    throw ParameterError("box_blur: kernel size must be odd and positive");
  }
  if (kernel == 1) return image.reshaped(image.shape());
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  Tensor tmp({c, h, w});
  Tensor out({c, h, w});
  const double norm = 1.0 / static_cast<double>(kernel);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0;
        for (std::ptrdiff_t d = -r; d <= r; ++d) s += image.at(ch, y, clampi(static_cast<std::ptrdiff_t>(x) + d, w));
        tmp.at(ch, y, x) = s * norm;
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0;
        for (std::ptrdiff_t d = -r; d <= r; ++d) s += tmp.at(ch, clampi(static_cast<std::ptrdiff_t>(y) + d, h), x);
        out.at(ch, y, x) = s * norm;
      }
    }
  }
  return out;
}

Tensor stack_channels(const Tensor& a, const Tensor& b) {
  require_image(a, "stack_channels");
  require_image(b, "stack_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("stack_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> data(a.values());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

void jet_color(double t, double rgb[3]) {
  const double s = 3.0 * std::clamp(t, 0.0, 1.0);
  if (s <= 1.0) {
    rgb[0] = 0.0, rgb[1] = s, rgb[2] = 1.0;
  } else if (s <= 2.0) {
    const double u = s - 1.0;
    rgb[0] = u, rgb[1] = 1.0, rgb[2] = 1.0 - u;
  } else {
    const double u = std::min(s - 2.0, 1.0);
    rgb[0] = 1.0, rgb[1] = 1.0 - u, rgb[2] = 0.0;
  }
}

Tensor colorize_depth(const Tensor& depth, double min_m, double max_m) {
  if (depth.rank() != 3 || depth.dim(0) != 1) {
    throw DimensionError("colorize_depth: expected [1,H,W], got " + shape_string(depth.shape()));
  }
  if (!(std::isfinite(min_m) && std::isfinite(max_m) && max_m > min_m)) {
    throw ParameterError("colorize_depth: degenerate range");
  }
  const std::size_t h = depth.dim(1), w = depth.dim(2), n = h * w;
  Tensor out({3, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    const double d = depth[i];
    if (d == 0.0 || !std::isfinite(d)) continue;
    const double t = (std::clamp(d, min_m, max_m) - min_m) / (max_m - min_m);
    double rgb[3];
    jet_color(t, rgb);
    out[i] = rgb[0];
    out[n + i] = rgb[1];
    out[2 * n + i] = rgb[2];
  }
  return out;
}

}  // namespace adafuse

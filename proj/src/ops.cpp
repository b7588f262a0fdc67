#include "adafuse/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "adafuse/error.hpp"

namespace adafuse {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

constexpr double kLogClamp = 1e-12;

Tensor checked(Tensor t, const char* op) {
  require_finite(t, op);
  return t;
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ImageDims {
  std::size_t batch, channels, height, width;
  bool batched;
};

ImageDims image_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " +
                       shape_string(t.shape()));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
  if (d.batched) return {d.batch, c, h, w};
  return {c, h, w};
}

struct ConvGeometry {
  std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return h_out * w_out; }
};

// cols is [c_in*k*k, h_out*w_out], row-major.
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          double* out = row + oy * g.w_out;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.w_out, 0.0);
            continue;
          }
          const double* src = image + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = image + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* in = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
              dst[static_cast<std::size_t>(ix)] += in[ox];
            }
          }
        }
      }
    }
  }
}

struct Rows {
  std::size_t rows, cols;
  bool vector;
};

Rows as_rows(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0), true};
  if (t.rank() == 2) return {t.dim(0), t.dim(1), false};
  throw DimensionError(std::string(op) + ": expected [K] or [B,K], got " +
                       shape_string(t.shape()));
}

}  // namespace

Var affine(Tape& tape, Var input, Var weight, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  const Rows xr = as_rows(x, "affine");
  if (w.rank() != 2 || w.dim(0) != xr.cols || b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  const std::size_t rows = xr.rows, in = xr.cols, out = w.dim(1);
  Tensor y(xr.vector ? Shape{out} : Shape{rows, out});
  MatMap ym(y.data().data(), rows, out);
  ym.noalias() = ConstMatMap(x.data().data(), rows, in) * ConstMatMap(w.data().data(), in, out);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out);

  const bool rg = tape.requires_grad(input) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(checked(std::move(y), "affine"), rg,
                     [=](Tape& t, std::span<const double> dy) {
                       ConstMatMap dym(dy.data(), rows, out);
                       if (t.requires_grad(input)) {
                         MatMap(t.grad_accumulator(input).data(), rows, in).noalias() +=
                             dym * ConstMatMap(t.value(weight).data().data(), in, out).transpose();
                       }
                       if (t.requires_grad(weight)) {
                         MatMap(t.grad_accumulator(weight).data(), in, out).noalias() +=
                             ConstMatMap(t.value(input).data().data(), rows, in).transpose() * dym;
                       }
                       if (t.requires_grad(bias)) {
                         // Plain loops: Eigen's vectorized sums depend on buffer alignment.
                         auto gb = t.grad_accumulator(bias);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t o = 0; o < out; ++o) gb[o] += dy[r * out + o];
                         }
                       }
                     });
}

Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor& x = tape.value(input);
  const Tensor& kw = tape.value(kernels);
  const Tensor& b = tape.value(bias);
  const ImageDims d = image_dims(x, "conv2d");
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  if (kw.rank() != 4 || kw.dim(1) != d.channels || kw.dim(2) != kw.dim(3)) {
    throw DimensionError("conv2d: kernels " + shape_string(kw.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  const std::size_t c_out = kw.dim(0), k = kw.dim(2);
  if (b.rank() != 1 || b.dim(0) != c_out) {
    throw DimensionError("conv2d: bias " + shape_string(b.shape()) + " for " +
                         std::to_string(c_out) + " kernels");
  }
  if (d.height + 2 * pad < k || d.width + 2 * pad < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + "x" + std::to_string(k) +
                         " larger than padded input " + shape_string(x.shape()) + " (pad " +
                         std::to_string(pad) + ")");
  }
  const ConvGeometry g{d.channels, d.height, d.width, k, stride, pad,
                       (d.height + 2 * pad - k) / stride + 1, (d.width + 2 * pad - k) / stride + 1};

  const bool rg = tape.requires_grad(input) || tape.requires_grad(kernels) || tape.requires_grad(bias);
  // Backward needs every sample's columns; inference reuses one buffer.
  auto cols = std::make_shared<std::vector<double>>((rg ? d.batch : 1) * g.patch() * g.pixels());
  Tensor y(image_shape(d, c_out, g.h_out, g.w_out));
  ConstMatMap wm(kw.data().data(), c_out, g.patch());
  const std::size_t in_stride = d.channels * d.height * d.width;
  const std::size_t out_stride = c_out * g.pixels();
  for (std::size_t s = 0; s < d.batch; ++s) {
    double* col = cols->data() + (rg ? s : 0) * g.patch() * g.pixels();
    im2col(x.data().data() + s * in_stride, g, col);
    MatMap ym(y.data().data() + s * out_stride, c_out, g.pixels());
    ym.noalias() = wm * ConstMatMap(col, g.patch(), g.pixels());
    ym.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data().data(), c_out);
  }
  if (!rg) cols.reset();

  return tape.record(
      checked(std::move(y), "conv2d"), rg,
      [=](Tape& t, std::span<const double> dy) {
        ConstMatMap wmat(t.value(kernels).data().data(), c_out, g.patch());
        std::vector<double> dcol;
        if (t.requires_grad(input)) dcol.resize(g.patch() * g.pixels());
        for (std::size_t s = 0; s < d.batch; ++s) {
          ConstMatMap dym(dy.data() + s * out_stride, c_out, g.pixels());
          const double* col = cols->data() + s * g.patch() * g.pixels();
          if (t.requires_grad(kernels)) {
            MatMap(t.grad_accumulator(kernels).data(), c_out, g.patch()).noalias() +=
                dym * ConstMatMap(col, g.patch(), g.pixels()).transpose();
          }
          if (t.requires_grad(bias)) {
            auto gb = t.grad_accumulator(bias);
            const double* row = dy.data() + s * out_stride;
            for (std::size_t c = 0; c < c_out; ++c, row += g.pixels()) {
              double acc = 0;
              for (std::size_t p = 0; p < g.pixels(); ++p) acc += row[p];
              gb[c] += acc;
            }
          }
          if (t.requires_grad(input)) {
            MatMap(dcol.data(), g.patch(), g.pixels()).noalias() = wmat.transpose() * dym;
            col2im_add(dcol.data(), g, t.grad_accumulator(input).data() + s * in_stride);
          }
        }
      });
}

Var maxpool2d(Tape& tape, Var input, std::size_t window, std::size_t stride) {
  const Tensor& x = tape.value(input);
  const ImageDims d = image_dims(x, "maxpool2d");
  if (window == 0 || stride == 0) throw ParameterError("maxpool2d: window and stride must be positive");
  if (d.height < window || d.width < window) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                         shape_string(x.shape()));
  }
  const std::size_t h_out = (d.height - window) / stride + 1;
  const std::size_t w_out = (d.width - window) / stride + 1;
  const std::size_t planes = d.batch * d.channels;
  Tensor y(image_shape(d, d.channels, h_out, w_out));
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  const double* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * d.height * d.width;
    for (std::size_t oy = 0; oy < h_out; ++oy) {
      for (std::size_t ox = 0; ox < w_out; ++ox) {
        std::size_t best = base + oy * stride * d.width + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * d.width + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * h_out + oy) * w_out + ox;
        y[o] = src[best];
        (*argmax)[o] = best;
      }
    }
  }
  const bool rg = tape.requires_grad(input);
  return tape.record(std::move(y), rg, [=](Tape& t, std::span<const double> dy) {
    auto dx = t.grad_accumulator(input);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
  });
}

Var relu(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor y = x.reshaped(x.shape());
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(y), tape.requires_grad(input),
                     [=](Tape& t, std::span<const double> dy) {
                       const auto xv = t.value(input).data();
                       auto dx = t.grad_accumulator(input);
                       for (std::size_t i = 0; i < dy.size(); ++i) {
                         if (xv[i] > 0.0) dx[i] += dy[i];
                       }
                     });
}

Var dropout(Tape& tape, Var input, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return input;
  const Tensor& x = tape.value(input);
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor y = x.reshaped(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = keep(rng) ? scale : 0.0;
    y[i] *= (*mask)[i];
  }
  return tape.record(std::move(y), tape.requires_grad(input),
                     [=](Tape& t, std::span<const double> dy) {
                       auto dx = t.grad_accumulator(input);
                       for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*mask)[i];
                     });
}

Var softmax(Tape& tape, Var logits) {
  const Tensor& z = tape.value(logits);
  const Rows r = as_rows(z, "softmax");
  Tensor y = z.reshaped(z.shape());
  for (std::size_t b = 0; b < r.rows; ++b) {
    double* row = y.data().data() + b * r.cols;
    const double m = *std::max_element(row, row + r.cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < r.cols; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (std::size_t j = 0; j < r.cols; ++j) row[j] /= sum;
  }
  require_finite(y, "softmax");
  auto saved = std::make_shared<std::vector<double>>(y.values());
  return tape.record(std::move(y), tape.requires_grad(logits),
                     [=](Tape& t, std::span<const double> dy) {
                       const auto& s = *saved;
                       auto dz = t.grad_accumulator(logits);
                       for (std::size_t b = 0; b < r.rows; ++b) {
                         const std::size_t o = b * r.cols;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < r.cols; ++j) dot += dy[o + j] * s[o + j];
                         for (std::size_t j = 0; j < r.cols; ++j) dz[o + j] += s[o + j] * (dy[o + j] - dot);
                       }
                     });
}

Var cross_entropy_loss(Tape& tape, Var probs, const Tensor& onehot) {
  const Tensor& f = tape.value(probs);
  if (f.shape() != onehot.shape()) {
    throw DimensionError("cross_entropy_loss: probabilities " + shape_string(f.shape()) +
                         " vs labels " + shape_string(onehot.shape()));
  }
  const Rows r = as_rows(f, "cross_entropy_loss");
  auto target = std::make_shared<std::vector<std::size_t>>(r.rows);
  double loss = 0.0;
  for (std::size_t b = 0; b < r.rows; ++b) {
    std::size_t ones = 0;
    double row_sum = 0.0;
    for (std::size_t c = 0; c < r.cols; ++c) {
      const double y = onehot[b * r.cols + c];
      if (y == 1.0) {
        ++ones;
        (*target)[b] = c;
      } else if (y != 0.0) {
        ones = 2;
      }
      row_sum += f[b * r.cols + c];
    }
    if (ones != 1) {
      throw InputError("cross_entropy_loss: label row " + std::to_string(b) + " is not one-hot");
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw InputError("cross_entropy_loss: probability row " + std::to_string(b) +
                       " sums to " + std::to_string(row_sum));
    }
    loss -= std::log(std::max(f[b * r.cols + (*target)[b]], kLogClamp));
  }
  loss /= static_cast<double>(r.rows);
  return tape.record(checked(Tensor({1}, {loss}), "cross_entropy_loss"), tape.requires_grad(probs),
                     [=](Tape& t, std::span<const double> dy) {
                       const auto fv = t.value(probs).data();
                       auto df = t.grad_accumulator(probs);
                       const double n = static_cast<double>(r.rows);
                       for (std::size_t b = 0; b < r.rows; ++b) {
                         const std::size_t i = b * r.cols + (*target)[b];
                         if (fv[i] > kLogClamp) df[i] -= dy[0] / (n * fv[i]);
                       }
                     });
}

Var reshape(Tape& tape, Var input, Shape shape) {
  Tensor y = tape.value(input).reshaped(std::move(shape));
  return tape.record(std::move(y), tape.requires_grad(input),
                     [=](Tape& t, std::span<const double> dy) {
                       add_into(t.grad_accumulator(input), dy);
                     });
}

Var concat_columns(Tape& tape, std::span<const Var> blocks) {
  if (blocks.empty()) throw InputError("concat_columns: no blocks");
  std::vector<Var> parts(blocks.begin(), blocks.end());
  std::vector<std::size_t> widths;
  const Rows first = as_rows(tape.value(parts[0]), "concat_columns");
  std::size_t total = 0;
  bool rg = false;
  for (Var v : parts) {
    const Rows r = as_rows(tape.value(v), "concat_columns");
    if (r.rows != first.rows || r.vector != first.vector) {
      throw DimensionError("concat_columns: row count mismatch " +
                           shape_string(tape.value(v).shape()) + " vs " +
                           shape_string(tape.value(parts[0]).shape()));
    }
    widths.push_back(r.cols);
    total += r.cols;
    rg = rg || tape.requires_grad(v);
  }
  Tensor y(first.vector ? Shape{total} : Shape{first.rows, total});
  for (std::size_t b = 0; b < first.rows; ++b) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double* src = tape.value(parts[i]).data().data() + b * widths[i];
      std::copy(src, src + widths[i], y.data().data() + b * total + offset);
      offset += widths[i];
    }
  }
  const std::size_t rows = first.rows;
  return tape.record(std::move(y), rg, [=](Tape& t, std::span<const double> dy) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (t.requires_grad(parts[i])) {
        auto dx = t.grad_accumulator(parts[i]);
        for (std::size_t b = 0; b < rows; ++b) {
          for (std::size_t j = 0; j < widths[i]; ++j) {
            dx[b * widths[i] + j] += dy[b * total + offset + j];
          }
        }
      }
      offset += widths[i];
    }
  });
}

Var mixture(Tape& tape, Var gates, std::span<const Var> posteriors) {
  const Tensor& g = tape.value(gates);
  const Rows gr = as_rows(g, "mixture");
  if (posteriors.size() != gr.cols) {
    throw DimensionError("mixture: " + std::to_string(gr.cols) + " gates for " +
                         std::to_string(posteriors.size()) + " posteriors");
  }
  std::vector<Var> fs(posteriors.begin(), posteriors.end());
  const Shape fshape = tape.value(fs[0]).shape();
  const Rows fr = as_rows(tape.value(fs[0]), "mixture");
  if (fr.rows != gr.rows) {
    throw DimensionError("mixture: gates " + shape_string(g.shape()) + " vs posterior " +
                         shape_string(fshape));
  }
  bool rg = tape.requires_grad(gates);
  for (Var f : fs) {
    if (tape.value(f).shape() != fshape) {
      throw DimensionError("mixture: posterior shapes differ: " +
                           shape_string(tape.value(f).shape()) + " vs " + shape_string(fshape));
    }
    rg = rg || tape.requires_grad(f);
  }
  const std::size_t rows = gr.rows, m = gr.cols, c = fr.cols;
  Tensor y(fshape);
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[b * m + i];
      const auto fv = tape.value(fs[i]).data();
      for (std::size_t k = 0; k < c; ++k) y[b * c + k] += gi * fv[b * c + k];
    }
  }
  return tape.record(checked(std::move(y), "mixture"), rg,
                     [=](Tape& t, std::span<const double> dy) {
                       const auto gv = t.value(gates).data();
                       for (std::size_t i = 0; i < m; ++i) {
                         const auto fv = t.value(fs[i]).data();
                         if (t.requires_grad(gates)) {
                           auto dg = t.grad_accumulator(gates);
                           for (std::size_t b = 0; b < rows; ++b) {
                             double acc = 0.0;
                             for (std::size_t k = 0; k < c; ++k) acc += dy[b * c + k] * fv[b * c + k];
                             dg[b * m + i] += acc;
                           }
                         }
                         if (t.requires_grad(fs[i])) {
                           auto df = t.grad_accumulator(fs[i]);
                           for (std::size_t b = 0; b < rows; ++b) {
                             for (std::size_t k = 0; k < c; ++k) df[b * c + k] += gv[b * m + i] * dy[b * c + k];
                           }
                         }
                       }
                     });
}

Var sum_squares(Tape& tape, Var input) {
  double s = 0.0;
  for (double v : tape.value(input).data()) s += v * v;
  return tape.record(checked(Tensor({1}, {s}), "sum_squares"), tape.requires_grad(input),
                     [=](Tape& t, std::span<const double> dy) {
                       const auto xv = t.value(input).data();
                       auto dx = t.grad_accumulator(input);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * xv[i] * dy[0];
                     });
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  Tape t;
  return t.value(affine(t, t.constant(input), t.constant(weight), t.constant(bias)));
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  Tape t;
  return t.value(conv2d(t, t.constant(input), t.constant(kernels), t.constant(bias), stride, pad));
}

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  Tape t;
  return t.value(maxpool2d(t, t.constant(input), window, stride));
}

Tensor relu(const Tensor& input) {
  Tape t;
  return t.value(relu(t, t.constant(input)));
}

Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training) {
  Tape t;
  return t.value(dropout(t, t.constant(input), rate, rng, training));
}

Tensor softmax(const Tensor& logits) {
  Tape t;
  return t.value(softmax(t, t.constant(logits)));
}

double cross_entropy_loss(const Tensor& probs, const Tensor& onehot) {
  Tape t;
  return t.value(cross_entropy_loss(t, t.constant(probs), onehot))[0];
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor y({labels.size(), classes});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw InputError("one_hot: label " + std::to_string(labels[b]) + " out of range");
    }
    y.at(b, static_cast<std::size_t>(labels[b])) = 1.0;
  }
  return y;
}

}  // namespace adafuse

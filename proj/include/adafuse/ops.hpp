#pragma once

#include <cstddef>
#include <span>

#include "adafuse/rng.hpp"
#include "adafuse/tape.hpp"
#include "adafuse/tensor.hpp"

namespace adafuse {

// Differentiable layer operations recorded on a Tape. Each computes its
// forward value eagerly and registers an exact backward. Outputs are checked
// for NaN/Inf before they are returned.

/// out[b,k] = sum_d input[b,d] * weight[d,k] + bias[k]. A 1-D input is one row.
Var affine(Tape& tape, Var input, Var weight, Var bias);

/// Cross-correlation over [C,H,W] or [B,C,H,W] with kernels [Cout,Cin,k,k].
Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride,
           std::size_t pad);

/// Max over windows of [C,H,W] or [B,C,H,W]. Gradient goes to the first
/// maximal cell in row-major order.
Var maxpool2d(Tape& tape, Var input, std::size_t window, std::size_t stride);

Var relu(Tape& tape, Var input);

/// Inverted dropout. Returns `input` itself when training is false or rate is 0.
Var dropout(Tape& tape, Var input, double rate, Rng& rng, bool training);

/// Max-shifted softmax along the last axis of [K] or [B,K].
Var softmax(Tape& tape, Var logits);

/// -(1/B) sum_b y_b . log F_b with log clamped at log(1e-12). Returns a [1] tensor.
Var cross_entropy_loss(Tape& tape, Var probs, const Tensor& onehot);

Var reshape(Tape& tape, Var input, Shape shape);

/// Row-wise concatenation of [B,D_i] blocks into [B, sum D_i].
Var concat_columns(Tape& tape, std::span<const Var> blocks);

/// F[b,c] = sum_i gates[b,i] * posteriors_i[b,c].
Var mixture(Tape& tape, Var gates, std::span<const Var> posteriors);

/// sum of squared entries, as a [1] tensor.
Var sum_squares(Tape& tape, Var input);

// Tape-free conveniences for single evaluations.
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t pad);
Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);
Tensor relu(const Tensor& input);
Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training);
Tensor softmax(const Tensor& logits);
double cross_entropy_loss(const Tensor& probs, const Tensor& onehot);

/// One-hot rows [B,C] for integer labels.
Tensor one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace adafuse

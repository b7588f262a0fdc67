#pragma once

#include <cstddef>
#include <string>

#include "adafuse/modality.hpp"
#include "adafuse/params.hpp"
#include "adafuse/rng.hpp"
#include "adafuse/tape.hpp"

namespace adafuse {

struct InputSize {
  std::size_t channels = 3, height = 32, width = 32;
  friend bool operator==(const InputSize&, const InputSize&) = default;
};

/// Shape (filters, height, width) of a last-pooling feature map.
struct FeatureShape {
  std::size_t filters = 0, height = 0, width = 0;
  std::size_t flat() const { return filters * height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

inline constexpr const char* kExpertArchitecture = "cifarnet-3conv-16-32-64";
inline constexpr double kDefaultExpertDropout = 0.5;

/// Three-stage CifarNet-style classifier:
///   conv5x5(->16) relu pool2, conv5x5(->32) relu pool2, conv3x3(->64) relu pool2,
///   [dropout when training] affine(->C) softmax.
class ExpertNet {
 public:
  ExpertNet() = default;
  ExpertNet(Modality modality, InputSize input, std::size_t classes, Params params,
            double dropout_rate = kDefaultExpertDropout);

  const Modality& modality() const { return modality_; }
  const InputSize& input_size() const { return input_; }
  std::size_t classes() const { return classes_; }
  FeatureShape feature_shape() const;
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);

  Params& params() { return params_; }
  const Params& params() const { return params_; }

 private:
  Modality modality_;
  InputSize input_;
  std::size_t classes_ = 2;
  Params params_;
  double dropout_rate_ = kDefaultExpertDropout;
};

/// He-initialised expert. Height and width must be divisible by 8.
ExpertNet build_expert(Modality modality, InputSize input, std::size_t classes, Rng& rng);

/// Tape values produced by one expert pass.
struct ExpertVars {
  Var features;    // last-pool map, [Nh,Hh,Wh] or [B,Nh,Hh,Wh]
  Var head_input;  // flattened features after (training-time) dropout, [1,D] or [B,D]
  Var posterior;   // softmax output, [C] or [B,C]
};

/// Convolutional trunk only: input to last-pool feature map.
Var expert_trunk(Tape& tape, const ExpertNet& net, Var x);

/// Classifier head on a trunk output. Returns (head_input, posterior).
std::pair<Var, Var> expert_head(Tape& tape, const ExpertNet& net, Var features, bool training,
                                Rng& rng);

/// Full pass. `x` is [C,H,W] or [B,C,H,W] matching the net's input size.
ExpertVars expert_forward(Tape& tape, const ExpertNet& net, Var x, bool training, Rng& rng);

struct ExpertOutput {
  Tensor features;
  Tensor posterior;
};

ExpertOutput expert_forward(const ExpertNet& net, const Tensor& x, bool training, Rng& rng);

}  // namespace adafuse

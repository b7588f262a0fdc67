#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "adafuse/geometry.hpp"
#include "adafuse/rng.hpp"
#include "adafuse/tensor.hpp"

namespace adafuse {

struct RgbNoise {
  double brightness = 1.0;
  double contrast = 1.0;
  double sigma = 0.0;
  std::size_t blur = 1;  // odd box-filter size, 1 = none
};

struct DepthNoise {
  double dropout = 0.0;
  double max_range = std::numeric_limits<double>::infinity();  // metres
  double speckle = 0.0;                                        // additive sigma, metres
};

/// Scripted environment condition that decides how each modality is corrupted.
struct EnvironmentRegime {
  std::string name;
  RgbNoise rgb;
  DepthNoise depth;

  /// Throws ConfigError for out-of-range parameters.
  void validate() const;
};

/// Canonical tables: identity, bright-indoor, dark-indoor, bright-outdoor, blur.
EnvironmentRegime regime_by_name(std::string_view name);
std::vector<std::string> regime_names();

struct RegimeChange {
  std::size_t start_frame = 0;
  EnvironmentRegime regime;
};

/// Starts at frame 0 with strictly increasing starts.
using RegimeScript = std::vector<RegimeChange>;

/// "0:dark-indoor,500:bright-outdoor".
RegimeScript parse_script(std::string_view text);
std::string format_script(const RegimeScript& script);
/// Cycles through `regimes` every `period` frames.
RegimeScript alternating_script(std::size_t frame_count, std::size_t period,
                                const std::vector<std::string>& regimes);
const EnvironmentRegime& regime_at(const RegimeScript& script, std::size_t frame_index);

struct Annotation {
  BoundingBox box;
  bool occluded = false;
  int track_id = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Aligned rgb [3,H,W] in [0,1], depth [1,H,W] in metres (0 = invalid) and
/// motion [1,H,W] in [0,1], with ground truth and the active regime.
struct MultimodalFrame {
  Tensor rgb;
  Tensor depth;
  Tensor motion;
  std::vector<Annotation> annotations;
  std::string regime;
  std::size_t frame_index = 0;

  std::size_t height() const { return rgb.dim(1); }
  std::size_t width() const { return rgb.dim(2); }

  friend bool operator==(const MultimodalFrame&, const MultimodalFrame&) = default;
};

struct FrameSize {
  std::size_t height = 96;
  std::size_t width = 96;
};

/// A clean rendering with the per-pixel mask of actor-covered pixels.
struct CleanFrame {
  MultimodalFrame frame;
  std::vector<std::uint8_t> actor_mask;  // H*W, 1 where an actor was drawn
};

/// Renders the uncorrupted sequence (regime label "identity").
std::vector<CleanFrame> render_clean_sequence(std::size_t frame_count, FrameSize size,
                                              std::size_t actor_count, std::uint64_t seed);

/// Clean render followed by per-frame corruption under the script's regimes.
/// Pure function of its arguments.
std::vector<MultimodalFrame> generate_sequence(std::size_t frame_count, const RegimeScript& script,
                                               FrameSize size, std::size_t actor_count,
                                               std::uint64_t seed);

/// Applies `regime` to a clean frame. Motion is recomputed against
/// `prev_rgb` (already corrupted) or zero when there is none.
MultimodalFrame corrupt_modality(const MultimodalFrame& clean, const EnvironmentRegime& regime,
                                 Rng& rng, const Tensor* prev_rgb = nullptr);

/// Per-pixel mean absolute channel difference, [1,H,W] in [0,1].
Tensor motion_channel(const Tensor& prev_rgb, const Tensor& cur_rgb);

struct Dataset {
  FrameSize size;
  std::uint64_t seed = 0;
  std::size_t actors = 0;
  std::string script;
  std::vector<MultimodalFrame> frames;
};

Dataset make_dataset(std::size_t frame_count, const RegimeScript& script, FrameSize size,
                     std::size_t actor_count, std::uint64_t seed);

/// Layout: frames/NNNNNN.{rgb,depth,motion}.mdtf, annotations.tsv,
/// regimes.tsv, meta.txt.
void write_dataset(const Dataset& dataset, const std::filesystem::path& directory);
Dataset read_dataset(const std::filesystem::path& directory);

enum class Split { train, gate_val, test };

std::string split_name(Split s);
Split parse_split(std::string_view name);
/// 60/20/20 by sequence position.
Split split_of(std::size_t frame_index, std::size_t frame_count);
/// [begin, end) frame-index range of a split.
std::pair<std::size_t, std::size_t> split_range(Split s, std::size_t frame_count);

}  // namespace adafuse

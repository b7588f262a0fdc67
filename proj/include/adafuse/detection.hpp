#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adafuse/fusion.hpp"
#include "adafuse/geometry.hpp"
#include "adafuse/synthdata.hpp"

namespace adafuse {

/// Metric range mapped onto the jet colormap for the depth expert.
struct DepthRange {
  double min_m = 0.5;
  double max_m = 8.0;
};

struct ProposalConfig {
  std::vector<std::size_t> scales{32, 48, 64};  // window heights, px
  double aspect = 0.5;                          // width / height
  double stride_fraction = 0.25;

  /// Throws ConfigError for empty scales or non-positive ratios.
  void validate() const;
};

struct Proposals {
  std::vector<BoundingBox> boxes;
  std::size_t skipped_scales = 0;  // scales whose window does not fit the frame
};

/// Enumerates windows by scale, then row, then column. Windows lie fully
/// inside the frame.
Proposals generate_proposals(FrameSize frame, const ProposalConfig& config);

/// Network input image of one modality for a whole frame: rgb as is,
/// depth colorized to [3,H,W], motion [1,H,W].
Tensor modality_image(const MultimodalFrame& frame, const Modality& modality, DepthRange range);

/// Full-frame images for every listed modality.
WindowBatch frame_images(const MultimodalFrame& frame, std::span<const Modality> modalities,
                         DepthRange range);

/// Crops each box from every listed modality image and resizes it to
/// out_h x out_w. Result entries are [B,C,out_h,out_w].
WindowBatch crop_windows(const WindowBatch& images, std::span<const Modality> modalities,
                         std::span<const BoundingBox> boxes, std::size_t out_h,
                         std::size_t out_w);

struct Detection {
  BoundingBox box;
  double score = 0;  // F[human]
  std::optional<Tensor> gate;
  std::size_t frame_index = 0;
};

inline constexpr std::size_t kHumanClass = 1;

/// Scores every proposal through `model` at inference. Output keeps the
/// proposal order.
std::vector<Detection> score_windows(const FusedModel& model, const MultimodalFrame& frame,
                                     std::span<const BoundingBox> proposals, DepthRange range);

/// Scores the proposals under several models, running each distinct expert
/// once per window. Channel-scheme models run their own network. Throws
/// ConfigError when two models hold different experts for one modality.
std::vector<std::vector<Detection>> score_windows_multi(std::span<const FusedModel> models,
                                                        const MultimodalFrame& frame,
                                                        std::span<const BoundingBox> proposals,
                                                        DepthRange range);

/// Greedy suppression: descending score (stable), keep iff IoU with every
/// kept box is below the threshold.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

struct DetectConfig {
  ProposalConfig proposals;
  DepthRange depth;
  double nms_iou = 0.3;
  std::size_t threads = 1;
};

/// proposals -> scoring -> nms for every frame, one detection list per
/// model. Frames are processed in parallel; results are in frame order.
std::vector<std::vector<Detection>> detect_frames(std::span<const FusedModel> models,
                                                  std::span<const MultimodalFrame> frames,
                                                  const DetectConfig& config);

struct DetectionFile {
  std::string scheme;
  std::vector<std::string> experts;  // modality names in model order
  std::size_t frame_begin = 0;       // evaluated frame range [begin, end)
  std::size_t frame_end = 0;
  std::vector<Detection> detections;
};

void write_detections(const std::filesystem::path& path, const DetectionFile& file);
/// Throws ParseError with line and byte offset on malformed input.
DetectionFile read_detections(const std::filesystem::path& path);

}  // namespace adafuse

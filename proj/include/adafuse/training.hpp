#pragma once

#include <span>
#include <vector>

#include "adafuse/detection.hpp"
#include "adafuse/experts.hpp"
#include "adafuse/fusion.hpp"
#include "adafuse/synthdata.hpp"

namespace adafuse {

enum class Stage { experts, fusion };

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  Stage stage = Stage::experts;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

inline constexpr int kBackgroundLabel = 0;
inline constexpr int kHumanLabel = 1;
inline constexpr std::size_t kClassCount = 2;

struct CropConfig {
  std::size_t negatives_per_frame = 10;
  double negative_max_iou = 0.3;
  /// Share of negatives drawn near an annotation (still below the IoU
  /// bound) rather than uniformly over the frame.
  double near_miss_fraction = 0.5;
  std::size_t min_height = 32;  // negative window heights, px
  std::size_t max_height = 64;
  double aspect = 0.5;
  std::size_t out_height = 32;
  std::size_t out_width = 32;
  DepthRange depth;
};

/// Labelled windows cropped from a set of frames, one [N,C,h,w] tensor per
/// modality.
struct CropDataset {
  Split split = Split::train;
  std::vector<Modality> modalities;
  std::size_t height = 32, width = 32;
  WindowBatch crops;
  std::vector<int> labels;
  std::vector<std::size_t> frames;  // source frame_index of each crop
  std::vector<BoundingBox> boxes;   // source window of each crop
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t skipped_frames = 0;  // frames smaller than the smallest window

  std::size_t size() const { return labels.size(); }
  /// Rows `indices` of one modality as [B,C,h,w].
  Tensor batch(const Modality& m, std::span<const std::size_t> indices) const;
  /// Channel-stacked rows in `order`.
  Tensor stacked_batch(std::span<const Modality> order, std::span<const std::size_t> indices) const;
  Tensor one_hot_labels(std::span<const std::size_t> indices) const;
};

/// Positives are the non-occluded annotation boxes; negatives are random
/// windows with IoU below the threshold against every annotation.
CropDataset extract_crops(std::span<const MultimodalFrame> frames, Split split,
                          const std::vector<Modality>& modalities, const CropConfig& config,
                          Rng& rng);

/// Crops from the frames of `split` only.
CropDataset extract_split_crops(const Dataset& dataset, Split split,
                                const std::vector<Modality>& modalities, const CropConfig& config,
                                std::uint64_t seed);

/// Mean loss per epoch.
using LossLog = std::vector<double>;

/// Stage 1 for one modality from a seeded He init.
ExpertNet train_expert(const CropDataset& crops, const Modality& modality,
                       const TrainConfig& config, LossLog* log = nullptr);

/// Stage 1, one independent run per modality (in parallel up to `threads`).
std::vector<ExpertNet> train_experts(const CropDataset& crops,
                                     const std::vector<Modality>& modalities,
                                     const TrainConfig& config,
                                     std::vector<LossLog>* logs = nullptr,
                                     std::size_t threads = 1);

/// Stage 1 protocol over channel-stacked crops.
ExpertNet train_channel_net(const CropDataset& crops, const std::vector<Modality>& order,
                            const TrainConfig& config, LossLog* log = nullptr);

/// Stage 2: trains a gate over frozen experts with expert dropout active.
/// Throws StateError if any expert entry is still trainable.
GatingNet train_gate(const std::vector<ExpertNet>& experts, const CropDataset& crops,
                     const TrainConfig& config, LossLog* log = nullptr);

/// Stage 2 protocol for the late-fusion head.
LateFusionHead train_late_head(const std::vector<ExpertNet>& experts, const CropDataset& crops,
                               const TrainConfig& config, LossLog* log = nullptr);

/// Dispatches late or channel baselines into a FusedModel.
FusedModel train_baseline(Scheme scheme, const std::vector<ExpertNet>& experts,
                          const CropDataset& crops, const TrainConfig& config,
                          LossLog* log = nullptr);

/// Marks every expert parameter non-trainable.
void freeze(std::vector<ExpertNet>& experts);

/// Mean cross-entropy of a model's inference posteriors over all crops.
double mean_loss(const FusedModel& model, const CropDataset& crops);

}  // namespace adafuse

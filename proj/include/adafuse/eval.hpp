#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adafuse/detection.hpp"
#include "adafuse/geometry.hpp"
#include "adafuse/synthdata.hpp"

namespace adafuse {

enum class MatchLabel { true_positive, false_positive, ignored };

std::string label_name(MatchLabel l);

/// Labels are indexed like the input detections.
struct MatchResult {
  std::vector<MatchLabel> labels;
  std::vector<std::optional<std::size_t>> matched_annotation;
  std::vector<bool> annotation_matched;

  std::size_t count(MatchLabel l) const;
  /// Non-occluded annotations left unmatched.
  std::size_t false_negatives(std::span<const Annotation> annotations) const;
};

/// Greedy matching under the no-reward-no-penalty policy. Detections are
/// visited by descending score (ties keep input order); each takes the
/// unconsumed annotation of highest IoU >= threshold (ties to the lower
/// index). Taking an occluded annotation marks the detection ignored.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> annotations, double iou_threshold);

struct ScoredLabel {
  double score = 0;
  MatchLabel label = MatchLabel::false_positive;
};

struct PRPoint {
  double threshold = 0;  // detections with score >= threshold are kept
  double precision = 1;
  double recall = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Points by descending threshold, so recall is non-decreasing along the
/// list. The first point is the (precision 1, recall 0) convention at an
/// infinite threshold.
struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t total_positives = 0;
};

/// One point per distinct score among non-ignored detections. Throws
/// InputError when total_positives is zero.
PRCurve pr_curve(std::span<const ScoredLabel> labels, std::size_t total_positives);

/// All-points interpolated area under the curve.
double average_precision(const PRCurve& curve);

struct EqualErrorRate {
  double value = 0;
  double recall = 0;      // recall at the operating point
  bool fallback = false;  // no sign change: closest point used
};

/// Interpolates linearly where precision - recall changes sign.
EqualErrorRate equal_error_rate(const PRCurve& curve);

struct Metrics {
  double ap = 0;
  double eer = 0;
  double recall_at_eer = 0;
  bool eer_fallback = false;
  double iou_threshold = 0.6;
  std::size_t n_frames = 0;
  std::size_t n_annotations = 0;  // non-occluded annotations
  std::size_t n_detections = 0;
  std::size_t n_ignored = 0;
  std::map<std::string, std::string> extra;  // e.g. scheme, detections path
};

struct Evaluation {
  Metrics metrics;
  PRCurve curve;
};

/// Matches detections against the frames in [frame_begin, frame_end) of
/// `frames` (indexed by frame_index). A detection outside that range is an
/// InputError, as is a range without non-occluded annotations.
Evaluation evaluate(std::span<const Detection> detections, std::span<const MultimodalFrame> frames,
                    std::size_t frame_begin, std::size_t frame_end, double iou_threshold);

/// metrics.txt (key=value) plus pr_curve.tsv in `directory`.
void write_metrics(const std::filesystem::path& directory, const Evaluation& evaluation);
/// Reads metrics.txt into a key/value map.
std::map<std::string, std::string> read_metrics(const std::filesystem::path& file);

}  // namespace adafuse

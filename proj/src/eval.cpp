#include "adafuse/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "adafuse/error.hpp"

namespace adafuse {

std::string label_name(MatchLabel l) {
  switch (l) {
    case MatchLabel::true_positive: return "tp";
    case MatchLabel::false_positive: return "fp";
    case MatchLabel::ignored: return "ignored";
  }
  return "?";
}

std::size_t MatchResult::count(MatchLabel l) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

std::size_t MatchResult::false_negatives(std::span<const Annotation> annotations) const {
  std::size_t fn = 0;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    if (!annotations[a].occluded && !annotation_matched[a]) ++fn;
  }
  return fn;
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> annotations, double iou_threshold) {
  if (!(iou_threshold > 0 && iou_threshold < 1)) {
    throw ParameterError("match IoU threshold must lie in (0,1)");
  }
  MatchResult r;
  r.labels.assign(detections.size(), MatchLabel::false_positive);
  r.matched_annotation.assign(detections.size(), std::nullopt);
  r.annotation_matched.assign(annotations.size(), false);

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  for (const std::size_t d : order) {
    std::optional<std::size_t> best;
    double best_iou = -1;
    for (std::size_t a = 0; a < annotations.size(); ++a) {
      if (r.annotation_matched[a]) continue;
      const double o = iou(detections[d].box, annotations[a].box);
      if (o >= iou_threshold && o > best_iou) {
        best = a;
        best_iou = o;
      }
    }
    if (!best) continue;
    r.annotation_matched[*best] = true;
    r.matched_annotation[d] = best;
    r.labels[d] = annotations[*best].occluded ? MatchLabel::ignored : MatchLabel::true_positive;
  }
  return r;
}

PRCurve pr_curve(std::span<const ScoredLabel> labels, std::size_t total_positives) {
  if (total_positives == 0) throw InputError("pr_curve: no positive annotations");
  std::vector<ScoredLabel> sorted;
  for (const auto& l : labels) {
    if (l.label != MatchLabel::ignored) sorted.push_back(l);
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  PRCurve curve;
  curve.total_positives = total_positives;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0, 0, 0, total_positives});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) {
      if (sorted[i].label == MatchLabel::true_positive) ++tp;
      else ++fp;
    }
    if (tp > total_positives) throw InputError("pr_curve: more true positives than positives");
    PRPoint p;
    p.threshold = t;
    p.tp = tp;
    p.fp = fp;
    p.fn = total_positives - tp;
    p.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(total_positives);
    curve.points.push_back(p);
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty()) throw InputError("average_precision: empty curve");
  std::vector<double> interp(pts.size());
  double best = 0;
  for (std::size_t k = pts.size(); k-- > 0;) {
    best = std::max(best, pts[k].precision);
    interp[k] = best;
  }
  double ap = 0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    ap += (pts[k].recall - pts[k - 1].recall) * interp[k];
  }
  return std::clamp(ap, 0.0, 1.0);
}

EqualErrorRate equal_error_rate(const PRCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty()) throw InputError("equal_error_rate: empty curve");
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double dk = pts[k].precision - pts[k].recall;
    if (dk == 0.0) return {pts[k].precision, pts[k].recall, false};
    if (k == 0) continue;
    const double da = pts[k - 1].precision - pts[k - 1].recall;
    if ((da > 0) != (dk > 0)) {
      const double t = da / (da - dk);
      const double p = pts[k - 1].precision + t * (pts[k].precision - pts[k - 1].precision);
      const double r = pts[k - 1].recall + t * (pts[k].recall - pts[k - 1].recall);
      // p and r agree up to rounding; report their midpoint
      const double v = 0.5 * (p + r);
      return {v, v, false};
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    if (std::abs(pts[k].precision - pts[k].recall) < std::abs(pts[best].precision - pts[best].recall)) {
      best = k;
    }
  }
  return {std::min(pts[best].precision, pts[best].recall), pts[best].recall, true};
}

Evaluation evaluate(std::span<const Detection> detections, std::span<const MultimodalFrame> frames,
                    std::size_t frame_begin, std::size_t frame_end, double iou_threshold) {
  std::map<std::size_t, const MultimodalFrame*> by_index;
  for (const auto& f : frames) by_index[f.frame_index] = &f;
  for (std::size_t i = frame_begin; i < frame_end; ++i) {
    if (!by_index.count(i)) throw InputError("frame " + std::to_string(i) + " is not in the dataset");
  }
  std::map<std::size_t, std::vector<Detection>> per_frame;
  for (const auto& d : detections) {
    if (d.frame_index < frame_begin || d.frame_index >= frame_end) {
      throw InputError("detection for frame " + std::to_string(d.frame_index) +
                       " lies outside the evaluated range " + std::to_string(frame_begin) + "-" +
                       std::to_string(frame_end));
    }
    per_frame[d.frame_index].push_back(d);
  }

  Evaluation ev;
  std::vector<ScoredLabel> scored;
  std::size_t positives = 0;
  for (std::size_t i = frame_begin; i < frame_end; ++i) {
    const auto& anns = by_index.at(i)->annotations;
    positives += static_cast<std::size_t>(
        std::count_if(anns.begin(), anns.end(), [](const Annotation& a) { return !a.occluded; }));
    const auto it = per_frame.find(i);
    if (it == per_frame.end()) continue;
    const MatchResult m = match_detections(it->second, anns, iou_threshold);
    for (std::size_t d = 0; d < it->second.size(); ++d) scored.push_back({it->second[d].score, m.labels[d]});
    ev.metrics.n_ignored += m.count(MatchLabel::ignored);
  }
  if (positives == 0) {
    throw InputError("no non-occluded annotations in frames " + std::to_string(frame_begin) + "-" +
                     std::to_string(frame_end));
  }
  ev.curve = pr_curve(scored, positives);
  const EqualErrorRate eer = equal_error_rate(ev.curve);
  ev.metrics.ap = average_precision(ev.curve);
  ev.metrics.eer = eer.value;
  ev.metrics.recall_at_eer = eer.recall;
  ev.metrics.eer_fallback = eer.fallback;
  ev.metrics.iou_threshold = iou_threshold;
  ev.metrics.n_frames = frame_end - frame_begin;
  ev.metrics.n_annotations = positives;
  ev.metrics.n_detections = detections.size();
  return ev;
}

namespace {

// Shortest form that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void write_metrics(const std::filesystem::path& directory, const Evaluation& evaluation) {
  std::filesystem::create_directories(directory);
  const Metrics& m = evaluation.metrics;
  {
    std::ofstream out(directory / "metrics.txt", std::ios::binary);
    out << "ap=" << fmt(m.ap) << '\n'
        << "eer=" << fmt(m.eer) << '\n'
        << "recall_at_eer=" << fmt(m.recall_at_eer) << '\n'
        << "eer_fallback=" << (m.eer_fallback ? 1 : 0) << '\n'
        << "iou_threshold=" << fmt(m.iou_threshold) << '\n'
        << "n_frames=" << m.n_frames << '\n'
        << "n_annotations=" << m.n_annotations << '\n'
        << "n_detections=" << m.n_detections << '\n'
        << "n_ignored=" << m.n_ignored << '\n';
    for (const auto& [k, v] : m.extra) out << k << '=' << v << '\n';
    if (!out) throw InputError("failed writing metrics to " + directory.string());
  }
  std::ofstream pr(directory / "pr_curve.tsv", std::ios::binary);
  pr << "threshold\tprecision\trecall\n";
  for (const auto& p : evaluation.curve.points) {
    pr << (std::isinf(p.threshold) ? std::string("inf") : fmt(p.threshold)) << '\t' << fmt(p.precision)
       << '\t' << fmt(p.recall) << '\n';
  }
}

std::map<std::string, std::string> read_metrics(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open metrics file " + file.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(file.string() + " line " + std::to_string(n) + ": expected key=value");
    }
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace adafuse

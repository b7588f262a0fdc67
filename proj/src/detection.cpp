#include "adafuse/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adafuse/error.hpp"
#include "adafuse/image.hpp"
#include "adafuse/parallel.hpp"

namespace adafuse {

void ProposalConfig::validate() const {
  if (scales.empty()) throw ConfigError("proposal scales must not be empty");
  for (auto s : scales) {
    if (s == 0) throw ConfigError("proposal scale must be positive");
  }
  if (!(aspect > 0 && std::isfinite(aspect))) throw ConfigError("proposal aspect must be positive");
  if (!(stride_fraction > 0 && std::isfinite(stride_fraction))) {
    throw ConfigError("stride fraction must be positive");
  }
}

Proposals generate_proposals(FrameSize frame, const ProposalConfig& config) {
  config.validate();
  Proposals out;
  for (const std::size_t s : config.scales) {
    const auto w = static_cast<std::size_t>(
        std::max(1.0, std::round(static_cast<double>(s) * config.aspect)));
    if (s > frame.height || w > frame.width) {
      ++out.skipped_scales;
      continue;
    }
    const auto stride = static_cast<std::size_t>(
        std::max(1.0, std::round(config.stride_fraction * static_cast<double>(s))));
    for (std::size_t y = 0; y + s <= frame.height; y += stride) {
      for (std::size_t x = 0; x + w <= frame.width; x += stride) {
        out.boxes.push_back({static_cast<double>(x), static_cast<double>(y),
                             static_cast<double>(x + w), static_cast<double>(y + s)});
      }
    }
  }
  return out;
}

Tensor modality_image(const MultimodalFrame& frame, const Modality& modality, DepthRange range) {
  const Tensor& raw = modality.id == ModalityId::rgb     ? frame.rgb
                      : modality.id == ModalityId::depth ? frame.depth
                                                         : frame.motion;
  if (raw.empty()) {
    throw InputError("frame " + std::to_string(frame.frame_index) + " has no " +
                     modality_name(modality.id) + " image");
  }
  switch (modality.id) {
    case ModalityId::rgb: return frame.rgb;
    case ModalityId::depth: return colorize_depth(frame.depth, range.min_m, range.max_m);
    case ModalityId::motion: return frame.motion;
  }
  throw InputError("unknown modality");
}

WindowBatch frame_images(const MultimodalFrame& frame, std::span<const Modality> modalities,
                         DepthRange range) {
  WindowBatch out;
  for (const auto& m : modalities) {
    if (!out.has(m.id)) out.set(m.id, modality_image(frame, m, range));
  }
  return out;
}

WindowBatch crop_windows(const WindowBatch& images, std::span<const Modality> modalities,
                         std::span<const BoundingBox> boxes, std::size_t out_h,
                         std::size_t out_w) {
  if (boxes.empty()) throw InputError("crop_windows: no boxes");
  WindowBatch out;
  for (const auto& m : modalities) {
    if (out.has(m.id)) continue;
    const Tensor& img = images.get(m.id);
    const std::size_t c = img.dim(0), per = c * out_h * out_w;
    std::vector<double> data(boxes.size() * per);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const Tensor crop = crop_resize(img, boxes[b], out_h, out_w);
      std::copy(crop.values().begin(), crop.values().end(),
                data.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    out.set(m.id, Tensor({boxes.size(), c, out_h, out_w}, std::move(data)));
  }
  return out;
}

namespace {

bool same_expert(const ExpertNet& a, const ExpertNet& b) {
  return a.modality() == b.modality() && a.input_size() == b.input_size() &&
         a.params().same_values(b.params());
}

std::vector<Detection> to_detections(const FusedOutput& out, std::span<const BoundingBox> boxes,
                                     std::size_t frame_index) {
  const std::size_t classes = out.fused.dim(1);
  std::vector<Detection> dets(boxes.size());
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    dets[b].box = boxes[b];
    dets[b].score = out.fused[b * classes + kHumanClass];
    dets[b].frame_index = frame_index;
    if (out.gate) {
      const std::size_t m = out.gate->dim(1);
      std::vector<double> g(out.gate->values().begin() + static_cast<std::ptrdiff_t>(b * m),
                            out.gate->values().begin() + static_cast<std::ptrdiff_t>((b + 1) * m));
      dets[b].gate = Tensor({m}, std::move(g));
    }
  }
  return dets;
}

}  // namespace

std::vector<std::vector<Detection>> score_windows_multi(std::span<const FusedModel> models,
                                                        const MultimodalFrame& frame,
                                                        std::span<const BoundingBox> proposals,
                                                        DepthRange range) {
  std::vector<std::vector<Detection>> out(models.size());
  if (proposals.empty()) return out;

  // Distinct experts over all models; each runs once per window.
  FusedModel pool;
  std::vector<std::vector<std::size_t>> slots(models.size());
  std::vector<Modality> needed;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const FusedModel& m = models[k];
    m.validate();
    if (m.classes() <= kHumanClass) throw ConfigError("model has no human class");
    if (m.scheme != Scheme::channel) {
      for (const auto& e : m.experts) {
        std::size_t i = 0;
        while (i < pool.experts.size() && !same_expert(pool.experts[i], e)) ++i;
        if (i == pool.experts.size()) {
          for (const auto& other : pool.experts) {
            if (other.modality() == e.modality()) {
              throw ConfigError("score_windows_multi: two different " + modality_name(e.modality().id) +
                                " experts");
            }
          }
          pool.experts.push_back(e);
        }
        slots[k].push_back(i);
      }
    }
    for (const auto& mod : m.modalities()) {
      if (std::find(needed.begin(), needed.end(), mod) == needed.end()) needed.push_back(mod);
    }
  }
  const WindowBatch images = frame_images(frame, needed, range);
  Rng unused(0);  // inference draws no randomness

  std::vector<ExpertOutput> pooled;
  if (!pool.experts.empty()) {
    const InputSize in = pool.experts.front().input_size();
    for (const auto& e : pool.experts) {
      if (e.input_size().height != in.height || e.input_size().width != in.width) {
        throw ConfigError("experts disagree on window size");
      }
    }
    const WindowBatch crops = crop_windows(images, pool.modalities(), proposals, in.height, in.width);
    pooled = run_experts(pool, crops, false, unused);
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    const FusedModel& m = models[k];
    FusedOutput fused;
    if (m.scheme == Scheme::channel) {
      const InputSize in = m.channel_net->input_size();
      const WindowBatch crops = crop_windows(images, m.channel_order, proposals, in.height, in.width);
      fused = fuse(m, {}, crops, false, unused);
    } else {
      std::vector<ExpertOutput> outs;
      for (std::size_t i : slots[k]) outs.push_back(pooled[i]);
      fused = fuse(m, std::move(outs), WindowBatch{}, false, unused);
    }
    out[k] = to_detections(fused, proposals, frame.frame_index);
  }
  return out;
}

std::vector<Detection> score_windows(const FusedModel& model, const MultimodalFrame& frame,
                                     std::span<const BoundingBox> proposals, DepthRange range) {
  return std::move(score_windows_multi(std::span(&model, 1), frame, proposals, range).front());
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  if (!(iou_threshold > 0 && iou_threshold < 1)) {
    throw ParameterError("nms IoU threshold must lie in (0,1)");
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (auto& d : detections) {
    const bool keep = std::all_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box, d.box) < iou_threshold;
    });
    if (keep) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<std::vector<Detection>> detect_frames(std::span<const FusedModel> models,
                                                  std::span<const MultimodalFrame> frames,
                                                  const DetectConfig& config) {
  std::vector<std::vector<std::vector<Detection>>> per_frame(frames.size());
  parallel_for(frames.size(), config.threads, [&](std::size_t i) {
    const auto& f = frames[i];
    const Proposals props = generate_proposals({f.height(), f.width()}, config.proposals);
    auto scored = score_windows_multi(models, f, props.boxes, config.depth);
    for (auto& s : scored) s = nms(std::move(s), config.nms_iou);
    per_frame[i] = std::move(scored);
  });
  std::vector<std::vector<Detection>> out(models.size());
  for (auto& pf : per_frame) {
    for (std::size_t k = 0; k < models.size(); ++k) {
      std::move(pf[k].begin(), pf[k].end(), std::back_inserter(out[k]));
    }
  }
  return out;
}

// --- detection files ------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T number(std::string_view s, const std::string& where) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_detections(const std::filesystem::path& path, const DetectionFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  std::string experts;
  for (std::size_t i = 0; i < file.experts.size(); ++i) experts += (i ? "," : "") + file.experts[i];
  out << "# scheme=" << file.scheme << " experts=" << experts << " frames=" << file.frame_begin
      << '-' << file.frame_end << '\n';
  const bool gated = std::any_of(file.detections.begin(), file.detections.end(),
                                 [](const Detection& d) { return d.gate.has_value(); });
  out << "frame_index\tx_min\ty_min\tx_max\ty_max\tscore";
  if (gated) {
    for (const auto& e : file.experts) out << "\tg_" << e;
  }
  out << '\n';
  for (const auto& d : file.detections) {
    out << d.frame_index << '\t' << fmt(d.box.x_min) << '\t' << fmt(d.box.y_min) << '\t'
        << fmt(d.box.x_max) << '\t' << fmt(d.box.y_max) << '\t' << fmt(d.score);
    if (gated) {
      if (!d.gate || d.gate->size() != file.experts.size()) {
        throw InputError("detection gate does not match the expert list");
      }
      for (double g : d.gate->values()) out << '\t' << fmt(g);
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

DetectionFile read_detections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open detections file " + path.string());
  DetectionFile file;
  std::string line;
  std::size_t line_no = 0, offset = 0, gate_cols = 0;
  bool have_header = false, have_columns = false;
  const auto where = [&] {
    return path.string() + " line " + std::to_string(line_no) + " (byte offset " +
           std::to_string(offset) + ")";
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t len = line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += len;
      continue;
    }
    if (!have_header) {
      if (line.rfind("# ", 0) != 0) throw ParseError(where() + ": missing '# scheme=...' header");
      for (const auto& kv : split(line.substr(2), ' ')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError(where() + ": bad header field '" + kv + "'");
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "scheme") {
          file.scheme = value;
        } else if (key == "experts") {
          file.experts = value.empty() ? std::vector<std::string>{} : split(value, ',');
        } else if (key == "frames") {
          const auto dash = value.find('-');
          if (dash == std::string::npos) throw ParseError(where() + ": frames must be begin-end");
          file.frame_begin = number<std::size_t>(std::string_view(value).substr(0, dash), where());
          file.frame_end = number<std::size_t>(std::string_view(value).substr(dash + 1), where());
        } else {
          throw ParseError(where() + ": unknown header key '" + key + "'");
        }
      }
      if (file.frame_end < file.frame_begin) throw ParseError(where() + ": empty frame range");
      have_header = true;
    } else if (!have_columns) {
      const auto cols = split(line, '\t');
      if (cols.size() < 6 || cols[0] != "frame_index" || cols[5] != "score") {
        throw ParseError(where() + ": unexpected column header");
      }
      gate_cols = cols.size() - 6;
      if (gate_cols != 0 && gate_cols != file.experts.size()) {
        throw ParseError(where() + ": " + std::to_string(gate_cols) + " gate columns for " +
                         std::to_string(file.experts.size()) + " experts");
      }
      have_columns = true;
    } else {
      const auto cols = split(line, '\t');
      if (cols.size() != 6 + gate_cols) {
        throw ParseError(where() + ": expected " + std::to_string(6 + gate_cols) + " columns, got " +
                         std::to_string(cols.size()));
      }
      Detection d;
      d.frame_index = number<std::size_t>(cols[0], where());
      d.box = {number<double>(cols[1], where()), number<double>(cols[2], where()),
               number<double>(cols[3], where()), number<double>(cols[4], where())};
      d.score = number<double>(cols[5], where());
      if (!d.box.valid()) throw InputError(where() + ": invalid box " + to_string(d.box));
      if (!(d.score >= 0 && d.score <= 1)) throw InputError(where() + ": score outside [0,1]");
      if (gate_cols) {
        std::vector<double> g;
        for (std::size_t k = 0; k < gate_cols; ++k) g.push_back(number<double>(cols[6 + k], where()));
        d.gate = Tensor({gate_cols}, std::move(g));
      }
      file.detections.push_back(std::move(d));
    }
    offset += len;
  }
  if (!have_columns) throw ParseError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  return file;
}

}  // namespace adafuse

#include "adafuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adafuse/error.hpp"
#include "adafuse/image.hpp"
#include "adafuse/ops.hpp"
#include "adafuse/optim.hpp"
#include "adafuse/parallel.hpp"

namespace adafuse {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0 && std::isfinite(learning_rate))) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0,1)");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout rate must lie in [0,1)");
}

// --- crops ----------------------------------------------------------------------

Tensor CropDataset::batch(const Modality& m, std::span<const std::size_t> indices) const {
  const Tensor& all = crops.get(m.id);
  const std::size_t per = all.size() / all.dim(0);
  std::vector<double> data(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= size()) throw InputError("crop index out of range");
    std::copy_n(all.values().begin() + static_cast<std::ptrdiff_t>(indices[b] * per), per,
                data.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return Tensor({indices.size(), all.dim(1), all.dim(2), all.dim(3)}, std::move(data));
}

Tensor CropDataset::stacked_batch(std::span<const Modality> order,
                                  std::span<const std::size_t> indices) const {
  WindowBatch w;
  for (const auto& m : order) w.set(m.id, batch(m, indices));
  return w.stacked(order);
}

Tensor CropDataset::one_hot_labels(std::span<const std::size_t> indices) const {
  std::vector<int> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(labels.at(i));
  return one_hot(picked, kClassCount);
}

CropDataset extract_crops(std::span<const MultimodalFrame> frames, Split split,
                          const std::vector<Modality>& modalities, const CropConfig& config,
                          Rng& rng) {
  if (modalities.empty()) throw ConfigError("extract_crops: no modalities");
  if (config.min_height == 0 || config.max_height < config.min_height || !(config.aspect > 0)) {
    throw ConfigError("extract_crops: bad negative window range");
  }
  CropDataset ds;
  ds.split = split;
  ds.modalities = modalities;
  ds.height = config.out_height;
  ds.width = config.out_width;

  std::vector<std::vector<double>> data(modalities.size());
  const auto add_crop = [&](const WindowBatch& images, const BoundingBox& box, int label,
                            std::size_t frame_index) {
    for (std::size_t k = 0; k < modalities.size(); ++k) {
      const Tensor c = crop_resize(images.get(modalities[k].id), box, config.out_height, config.out_width);
      data[k].insert(data[k].end(), c.values().begin(), c.values().end());
    }
    ds.labels.push_back(label);
    ds.frames.push_back(frame_index);
    ds.boxes.push_back(box);
  };
  const auto width_of = [&](std::size_t h) {
    return static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(h) * config.aspect)));
  };

  for (const auto& f : frames) {
    const std::size_t H = f.height(), W = f.width();
    if (H < config.min_height || W < width_of(config.min_height)) {
      ++ds.skipped_frames;
      continue;
    }
    const WindowBatch images = frame_images(f, modalities, config.depth);
    for (const auto& a : f.annotations) {
      if (a.occluded) continue;
      add_crop(images, a.box, kHumanLabel, f.frame_index);
      ++ds.positives;
    }
    std::size_t hmax = std::min(config.max_height, H);
    while (width_of(hmax) > W) --hmax;
    std::uniform_int_distribution<std::size_t> pick_h(config.min_height, hmax);
    for (std::size_t n = 0; n < config.negatives_per_frame; ++n) {
      const bool near = !f.annotations.empty() && std::bernoulli_distribution(config.near_miss_fraction)(rng);
      for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t h = pick_h(rng), w = width_of(h);
        std::size_t x = 0, y = 0;
        if (near) {
          // Shifted around a person by up to one window size.
          const auto& a = f.annotations[std::uniform_int_distribution<std::size_t>(0, f.annotations.size() - 1)(rng)];
          const double cx = 0.5 * (a.box.x_min + a.box.x_max) + std::uniform_real_distribution<double>(-1, 1)(rng) * static_cast<double>(w);
          const double cy = 0.5 * (a.box.y_min + a.box.y_max) + std::uniform_real_distribution<double>(-1, 1)(rng) * static_cast<double>(h);
          x = static_cast<std::size_t>(std::clamp(std::round(cx - 0.5 * static_cast<double>(w)), 0.0, static_cast<double>(W - w)));
          y = static_cast<std::size_t>(std::clamp(std::round(cy - 0.5 * static_cast<double>(h)), 0.0, static_cast<double>(H - h)));
        } else {
          x = std::uniform_int_distribution<std::size_t>(0, W - w)(rng);
          y = std::uniform_int_distribution<std::size_t>(0, H - h)(rng);
        }
        const BoundingBox box{static_cast<double>(x), static_cast<double>(y),
                              static_cast<double>(x + w), static_cast<double>(y + h)};
        const bool clear = std::all_of(f.annotations.begin(), f.annotations.end(), [&](const Annotation& a) {
          return iou(box, a.box) < config.negative_max_iou;
        });
        if (clear) {
          add_crop(images, box, kBackgroundLabel, f.frame_index);
          ++ds.negatives;
          break;
        }
      }
    }
  }
  if (!ds.labels.empty()) {
    for (std::size_t k = 0; k < modalities.size(); ++k) {
      const std::size_t c = modalities[k].channels;
      ds.crops.set(modalities[k].id,
                   Tensor({ds.labels.size(), c, config.out_height, config.out_width}, std::move(data[k])));
    }
  }
  return ds;
}

CropDataset extract_split_crops(const Dataset& dataset, Split split,
                                const std::vector<Modality>& modalities, const CropConfig& config,
                                std::uint64_t seed) {
  const auto [lo, hi] = split_range(split, dataset.frames.size());
  Rng rng = make_rng(seed, 500 + static_cast<std::uint64_t>(split));
  return extract_crops(std::span(dataset.frames).subspan(lo, hi - lo), split, modalities, config, rng);
}

// --- shared loop ------------------------------------------------------------------

namespace {

/// Per-epoch reshuffle, mini-batches, one SGD step each.
template <typename StepFn>
LossLog run_epochs(std::size_t n, const TrainConfig& config, Rng& shuffle_rng, Params& params,
                   StepFn&& step) {
  LossLog log;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      total += step(idx) * static_cast<double>(idx.size());
      sgd_step(params, config.learning_rate, config.momentum);
    }
    log.push_back(total / static_cast<double>(n));
  }
  return log;
}

void require_crops(const CropDataset& crops, const char* what) {
  if (crops.size() == 0) throw InputError(std::string(what) + ": empty crop dataset");
}

ExpertNet train_net(ExpertNet net, const CropDataset& crops,
                    const std::function<Tensor(std::span<const std::size_t>)>& inputs,
                    const TrainConfig& config, std::uint64_t stream, LossLog* log) {
  net.set_dropout_rate(config.dropout_rate);
  net.params().set_trainable(true);
  Rng shuffle_rng = make_rng(config.seed, stream + 10);
  Rng dropout_rng = make_rng(config.seed, stream + 20);
  LossLog l = run_epochs(crops.size(), config, shuffle_rng, net.params(), [&](auto idx) {
    Tape tape;
    const ExpertVars v = expert_forward(tape, net, tape.constant(inputs(idx)), true, dropout_rng);
    const Var loss = cross_entropy_loss(tape, v.posterior, crops.one_hot_labels(idx));
    tape.backward(loss);
    tape.accumulate_into(net.params());
    return tape.value(loss)[0];
  });
  if (log) *log = std::move(l);
  return net;
}

constexpr std::uint64_t kExpertStream = 100;
constexpr std::uint64_t kGateStream = 200;
constexpr std::uint64_t kLateStream = 300;
constexpr std::uint64_t kChannelStream = 400;

void require_frozen(const std::vector<ExpertNet>& experts, const char* what) {
  if (experts.empty()) throw ConfigError(std::string(what) + ": no experts");
  for (const auto& e : experts) {
    if (e.params().any_trainable()) {
      throw StateError(std::string(what) + ": expert " + modality_name(e.modality().id) +
                       " is still trainable; freeze it before stage 2");
    }
  }
}

/// Pre-dropout last-pool maps of every crop for every expert, [N, D] rows.
std::vector<Tensor> trunk_features(const std::vector<ExpertNet>& experts, const CropDataset& crops) {
  std::vector<Tensor> out;
  for (const auto& e : experts) {
    const std::size_t d = e.feature_shape().flat();
    std::vector<double> data(crops.size() * d);
    for (std::size_t start = 0; start < crops.size(); start += 64) {
      const std::size_t end = std::min(crops.size(), start + 64);
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      Tape tape;
      const Var h = expert_trunk(tape, e, tape.constant(crops.batch(e.modality(), idx)));
      std::copy(tape.value(h).values().begin(), tape.value(h).values().end(),
                data.begin() + static_cast<std::ptrdiff_t>(start * d));
    }
    out.emplace_back(Shape{crops.size(), d}, std::move(data));
  }
  return out;
}

Tensor feature_rows(const Tensor& all, const FeatureShape& fs, std::span<const std::size_t> idx) {
  const std::size_t d = fs.flat();
  std::vector<double> data(idx.size() * d);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::copy_n(all.values().begin() + static_cast<std::ptrdiff_t>(idx[b] * d), d,
                data.begin() + static_cast<std::ptrdiff_t>(b * d));
  }
  return Tensor({idx.size(), fs.filters, fs.height, fs.width}, std::move(data));
}

/// Stage 2 shared by the gate and the late head: expert heads run with
/// dropout on cached trunk maps; only `head` receives gradients.
template <typename Head>
Head train_stage2(Head head, bool mixture_output, const std::vector<ExpertNet>& experts,
                  const CropDataset& crops, const TrainConfig& config, std::uint64_t stream,
                  LossLog* log, const char* what) {
  require_crops(crops, what);
  require_frozen(experts, what);
  config.validate();
  if (config.stage != Stage::fusion) throw ConfigError(std::string(what) + ": config stage must be fusion");
  std::vector<ExpertNet> dropped = experts;
  for (auto& e : dropped) e.set_dropout_rate(config.dropout_rate);
  head.set_dropout_rate(config.dropout_rate);
  const std::vector<Tensor> cache = trunk_features(dropped, crops);

  Rng shuffle_rng = make_rng(config.seed, stream + 10);
  Rng dropout_rng = make_rng(config.seed, stream + 20);
  LossLog l = run_epochs(crops.size(), config, shuffle_rng, head.params(), [&](auto idx) {
    Tape tape;
    std::vector<Var> inputs, posts;
    for (std::size_t i = 0; i < dropped.size(); ++i) {
      const Var h = tape.constant(feature_rows(cache[i], dropped[i].feature_shape(), idx));
      const auto [x, f] = expert_head(tape, dropped[i], h, true, dropout_rng);
      inputs.push_back(x);
      posts.push_back(f);
    }
    const Var r = concat_columns(tape, inputs);
    const Var out = head.forward(tape, r, true, dropout_rng);
    const Var fused = mixture_output ? mixture(tape, out, posts) : out;
    const Var loss = cross_entropy_loss(tape, fused, crops.one_hot_labels(idx));
    tape.backward(loss);
    tape.accumulate_into(head.params());
    return tape.value(loss)[0];
  });
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (!experts[i].params().same_values(dropped[i].params())) {
      throw StateError(std::string(what) + ": expert parameters changed during stage 2");
    }
  }
  if (log) *log = std::move(l);
  return head;
}

std::size_t feature_dim(const std::vector<ExpertNet>& experts) {
  std::size_t d = 0;
  for (const auto& e : experts) d += e.feature_shape().flat();
  return d;
}

}  // namespace

ExpertNet train_expert(const CropDataset& crops, const Modality& modality,
                       const TrainConfig& config, LossLog* log) {
  config.validate();
  if (config.stage != Stage::experts) throw ConfigError("train_expert: config stage must be experts");
  require_crops(crops, "train_expert");
  const std::uint64_t stream = kExpertStream + 1000 * static_cast<std::uint64_t>(modality.id);
  Rng init = make_rng(config.seed, stream);
  ExpertNet net = build_expert(modality, {modality.channels, crops.height, crops.width}, kClassCount, init);
  return train_net(std::move(net), crops, [&](auto idx) { return crops.batch(modality, idx); }, config,
                   stream, log);
}

std::vector<ExpertNet> train_experts(const CropDataset& crops, const std::vector<Modality>& modalities,
                                     const TrainConfig& config, std::vector<LossLog>* logs,
                                     std::size_t threads) {
  require_crops(crops, "train_experts");
  std::vector<ExpertNet> nets(modalities.size());
  std::vector<LossLog> l(modalities.size());
  parallel_for(modalities.size(), threads, [&](std::size_t i) {
    nets[i] = train_expert(crops, modalities[i], config, &l[i]);
  });
  if (logs) *logs = std::move(l);
  return nets;
}

ExpertNet train_channel_net(const CropDataset& crops, const std::vector<Modality>& order,
                            const TrainConfig& config, LossLog* log) {
  config.validate();
  if (config.stage != Stage::experts) throw ConfigError("train_channel_net: config stage must be experts");
  require_crops(crops, "train_channel_net");
  if (order.empty()) throw ConfigError("train_channel_net: no modalities");
  std::size_t channels = 0;
  for (const auto& m : order) channels += m.channels;
  Rng init = make_rng(config.seed, kChannelStream);
  const Modality stacked{order.front().id, channels};
  ExpertNet net = build_expert(stacked, {channels, crops.height, crops.width}, kClassCount, init);
  return train_net(std::move(net), crops, [&](auto idx) { return crops.stacked_batch(order, idx); },
                   config, kChannelStream, log);
}

GatingNet train_gate(const std::vector<ExpertNet>& experts, const CropDataset& crops,
                     const TrainConfig& config, LossLog* log) {
  require_frozen(experts, "train_gate");
  Rng init = make_rng(config.seed, kGateStream);
  GatingNet gate = build_gate(feature_dim(experts), experts.size(), init);
  return train_stage2(std::move(gate), true, experts, crops, config, kGateStream, log, "train_gate");
}

LateFusionHead train_late_head(const std::vector<ExpertNet>& experts, const CropDataset& crops,
                               const TrainConfig& config, LossLog* log) {
  require_frozen(experts, "train_late_head");
  Rng init = make_rng(config.seed, kLateStream);
  LateFusionHead head = build_late_head(feature_dim(experts), kClassCount, init);
  return train_stage2(std::move(head), false, experts, crops, config, kLateStream, log,
                      "train_late_head");
}

FusedModel train_baseline(Scheme scheme, const std::vector<ExpertNet>& experts,
                          const CropDataset& crops, const TrainConfig& config, LossLog* log) {
  FusedModel model;
  model.scheme = scheme;
  if (scheme == Scheme::late) {
    model.experts = experts;
    model.late_head = train_late_head(experts, crops, config, log);
  } else if (scheme == Scheme::channel) {
    model.channel_order = crops.modalities;
    model.channel_net = train_channel_net(crops, crops.modalities, config, log);
  } else {
    throw ConfigError("train_baseline handles the late and channel schemes only");
  }
  model.validate();
  return model;
}

void freeze(std::vector<ExpertNet>& experts) {
  for (auto& e : experts) e.params().set_trainable(false);
}

double mean_loss(const FusedModel& model, const CropDataset& crops) {
  require_crops(crops, "mean_loss");
  const auto mods = model.modalities();
  Rng unused(0);
  double total = 0;
  for (std::size_t start = 0; start < crops.size(); start += 64) {
    const std::size_t end = std::min(crops.size(), start + 64);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    WindowBatch w;
    for (const auto& m : mods) w.set(m.id, crops.batch(m, idx));
    const FusedOutput out = fused_forward(model, w, false, unused);
    total += cross_entropy_loss(out.fused, crops.one_hot_labels(idx)) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(crops.size());
}

}  // namespace adafuse

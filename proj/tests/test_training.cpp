#include <doctest.h>

#include <cmath>

#include "adafuse/error.hpp"
#include "adafuse/training.hpp"

using namespace adafuse;

namespace {

const std::vector<Modality> kRgbDepth{modality(ModalityId::rgb), modality(ModalityId::depth)};

std::vector<MultimodalFrame> frames(std::size_t n, std::uint64_t seed) {
  return generate_sequence(n, parse_script("0:bright-indoor"), {96, 96}, 2, seed);
}

CropDataset crops(std::size_t n, std::uint64_t seed, std::size_t negatives = 4) {
  const auto f = frames(n, seed);
  CropConfig cc;
  cc.negatives_per_frame = negatives;
  Rng rng = make_rng(seed, 1);
  return extract_crops(f, Split::train, kRgbDepth, cc, rng);
}

TrainConfig quick(Stage stage, std::size_t epochs = 2) {
  TrainConfig t;
  t.stage = stage;
  t.epochs = epochs;
  t.batch_size = 16;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("extract_crops counts and negative overlap") {
  const auto f = frames(6, 3);
  CropConfig cc;
  cc.negatives_per_frame = 5;
  Rng rng = make_rng(1, 0);
  const CropDataset ds = extract_crops(std::span(f).first(1), Split::train, kRgbDepth, cc, rng);
  std::size_t visible = 0;
  for (const auto& a : f[0].annotations) visible += !a.occluded;
  CHECK(ds.positives == visible);
  CHECK(ds.negatives == 5);
  CHECK(ds.size() == visible + 5);
  CHECK(ds.crops.get(ModalityId::rgb).shape() == Shape{visible + 5, 3, 32, 32});
  CHECK(ds.crops.get(ModalityId::depth).shape() == Shape{visible + 5, 3, 32, 32});

  Rng again = make_rng(2, 0);
  const CropDataset many = extract_crops(f, Split::train, kRgbDepth, cc, again);
  CHECK(many.negatives == 30);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < many.size(); ++i) pos += many.labels[i] == kHumanLabel;
  CHECK(pos == many.positives);

  Rng r1 = make_rng(4, 0), r2 = make_rng(4, 0);
  const CropDataset a = extract_crops(f, Split::train, kRgbDepth, cc, r1);
  const CropDataset b = extract_crops(f, Split::train, kRgbDepth, cc, r2);
  CHECK(a.labels == b.labels);
  CHECK(a.crops.get(ModalityId::rgb) == b.crops.get(ModalityId::rgb));
}

TEST_CASE("negative windows stay below the IoU bound") {
  const auto f = frames(20, 8);
  for (double near : {0.0, 1.0}) {
    CropConfig cc;
    cc.negatives_per_frame = 8;
    cc.near_miss_fraction = near;
    Rng rng = make_rng(9, 0);
    const CropDataset ds = extract_crops(f, Split::train, kRgbDepth, cc, rng);
    CHECK(ds.negatives == 160);
    REQUIRE(ds.boxes.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& anns = f[ds.frames[i]].annotations;
      const BoundingBox& b = ds.boxes[i];
      CHECK(b.inside(96, 96));
      if (ds.labels[i] == kHumanLabel) continue;
      CHECK(b.height() >= 32);
      CHECK(b.height() <= 64);
      for (const auto& a : anns) CHECK(iou(b, a.box) < 0.3);
    }
  }
}

TEST_CASE("extract_crops on frames smaller than the window") {
  const auto small = generate_sequence(2, parse_script("0:blur"), {24, 24}, 0, 1);
  CropConfig cc;
  Rng rng = make_rng(1, 0);
  const CropDataset ds = extract_crops(small, Split::train, kRgbDepth, cc, rng);
  CHECK(ds.skipped_frames == 2);
  CHECK(ds.size() == 0);
  CHECK_THROWS_AS(extract_crops(small, Split::train, {}, cc, rng), ConfigError);
  cc.max_height = 10;
  CHECK_THROWS_AS(extract_crops(small, Split::train, kRgbDepth, cc, rng), ConfigError);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.momentum = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.learning_rate = -1;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.dropout_rate = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("expert training: determinism, zero learning rate, loss decrease") {
  const CropDataset ds = crops(12, 21);
  const Modality rgb = modality(ModalityId::rgb);

  TrainConfig frozen = quick(Stage::experts, 1);
  frozen.learning_rate = 0;
  const std::uint64_t init = train_expert(ds, rgb, frozen).params().hash();
  frozen.epochs = 4;
  CHECK(train_expert(ds, rgb, frozen).params().hash() == init);

  LossLog log1, log2;
  const ExpertNet a = train_expert(ds, rgb, quick(Stage::experts, 6), &log1);
  const ExpertNet b = train_expert(ds, rgb, quick(Stage::experts, 6), &log2);
  CHECK(a.params().same_values(b.params()));
  CHECK(log1 == log2);
  REQUIRE(log1.size() == 6);
  CHECK(log1.back() < log1.front());
  for (double l : log1) CHECK(std::isfinite(l));

  TrainConfig other = quick(Stage::experts, 6);
  other.seed = 6;
  CHECK_FALSE(train_expert(ds, rgb, other).params().same_values(a.params()));

  CHECK_THROWS_AS(train_expert(ds, rgb, quick(Stage::fusion)), ConfigError);
  CropDataset empty;
  CHECK_THROWS_AS(train_expert(empty, rgb, quick(Stage::experts)), InputError);
}

TEST_CASE("train_experts runs independent seeded trainings") {
  const CropDataset ds = crops(6, 22);
  std::vector<LossLog> logs;
  const auto one = train_experts(ds, kRgbDepth, quick(Stage::experts), &logs, 1);
  const auto two = train_experts(ds, kRgbDepth, quick(Stage::experts), nullptr, 2);
  REQUIRE(one.size() == 2);
  CHECK(logs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(one[i].modality() == kRgbDepth[i]);
    CHECK(one[i].params().same_values(two[i].params()));
  }
}

TEST_CASE("stage 2 leaves experts untouched") {
  const CropDataset ds = crops(10, 23);
  auto experts = train_experts(ds, kRgbDepth, quick(Stage::experts));
  CHECK_THROWS_AS(train_gate(experts, ds, quick(Stage::fusion)), StateError);
  CHECK_THROWS_AS(train_late_head(experts, ds, quick(Stage::fusion)), StateError);
  freeze(experts);
  for (const auto& e : experts) CHECK_FALSE(e.params().any_trainable());

  std::vector<std::uint64_t> before;
  for (const auto& e : experts) before.push_back(e.params().hash());
  LossLog log;
  const GatingNet gate = train_gate(experts, ds, quick(Stage::fusion, 3), &log);
  CHECK(log.size() == 3);
  const LateFusionHead late = train_late_head(experts, ds, quick(Stage::fusion));
  for (std::size_t i = 0; i < experts.size(); ++i) CHECK(experts[i].params().hash() == before[i]);

  const GatingNet again = train_gate(experts, ds, quick(Stage::fusion, 3));
  CHECK(gate.params().same_values(again.params()));
  CHECK_THROWS_AS(train_gate(experts, ds, quick(Stage::experts)), ConfigError);
  CHECK_THROWS_AS(train_gate({}, ds, quick(Stage::fusion)), ConfigError);

  const FusedModel mode{Scheme::mode, experts, gate, {}, {}, {}};
  const FusedModel avg{Scheme::average, experts, {}, {}, {}, {}};
  CHECK(std::isfinite(mean_loss(mode, ds)));
  CHECK(std::isfinite(mean_loss(avg, ds)));

  const FusedModel lm = train_baseline(Scheme::late, experts, ds, quick(Stage::fusion));
  CHECK(lm.scheme == Scheme::late);
  CHECK(lm.late_head->params().same_values(late.params()));
  CHECK_THROWS_AS(train_baseline(Scheme::mode, experts, ds, quick(Stage::fusion)), ConfigError);
}

TEST_CASE("channel network stacks modality channels") {
  const CropDataset ds = crops(6, 24);
  const std::vector<Modality> idx{kRgbDepth[0], kRgbDepth[1]};
  const Tensor stacked = ds.stacked_batch(idx, std::vector<std::size_t>{0, 1});
  CHECK(stacked.shape() == Shape{2, 6, 32, 32});
  CHECK(stacked[0] == ds.crops.get(ModalityId::rgb)[0]);
  CHECK(stacked[3 * 32 * 32] == ds.crops.get(ModalityId::depth)[0]);

  const ExpertNet net = train_channel_net(ds, kRgbDepth, quick(Stage::experts));
  CHECK((net.input_size() == InputSize{6, 32, 32}));
  CHECK_THROWS_AS(train_channel_net(ds, {}, quick(Stage::experts)), ConfigError);
  const FusedModel cm = train_baseline(Scheme::channel, {}, ds, quick(Stage::experts));
  CHECK(cm.scheme == Scheme::channel);
}

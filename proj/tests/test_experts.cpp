#include <doctest.h>

#include <cmath>
#include <random>

#include "adafuse/error.hpp"
#include "adafuse/experts.hpp"
#include "adafuse/image.hpp"
#include "adafuse/modality.hpp"

using namespace adafuse;

namespace {

Tensor random_input(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("modalities") {
  CHECK(modality(ModalityId::rgb).channels == 3);
  CHECK(modality(ModalityId::depth).channels == 3);
  CHECK(modality(ModalityId::motion).channels == 1);
  CHECK(parse_modality("depth").id == ModalityId::depth);
  CHECK_THROWS_AS(parse_modality("thermal"), ConfigError);
  CHECK(parse_modalities("rgb,depth").size() == 2);
  CHECK_THROWS_AS(parse_modalities("rgb,rgb"), ConfigError);
  CHECK(join_modalities(parse_modalities("depth,motion")) == "depth,motion");
}

TEST_CASE("build_expert shapes and determinism") {
  Rng a = make_rng(1, 0), b = make_rng(1, 0);
  const ExpertNet net = build_expert(modality(ModalityId::rgb), {3, 32, 32}, 2, a);
  CHECK(net.feature_shape() == FeatureShape{64, 4, 4});
  CHECK(net.feature_shape().flat() == 1024);
  const ExpertNet twin = build_expert(modality(ModalityId::rgb), {3, 32, 32}, 2, b);
  CHECK(net.params().same_values(twin.params()));
  CHECK_THROWS_AS(build_expert(modality(ModalityId::rgb), {3, 30, 30}, 2, a), ConfigError);
  CHECK_THROWS_AS(build_expert(modality(ModalityId::motion), {3, 32, 32}, 2, a), ConfigError);
}

TEST_CASE("feature shape matches the last pooling output") {
  Rng rng = make_rng(2, 0);
  for (auto [h, w] : {std::pair{32, 32}, std::pair{16, 40}, std::pair{8, 8}}) {
    const ExpertNet net = build_expert(modality(ModalityId::motion), {1, std::size_t(h), std::size_t(w)}, 3, rng);
    const auto out = expert_forward(net, random_input({1, std::size_t(h), std::size_t(w)}, rng), false, rng);
    const FeatureShape fs = net.feature_shape();
    CHECK(out.features.shape() == Shape{fs.filters, fs.height, fs.width});
    CHECK(out.features.size() == fs.filters * fs.height * fs.width);
    CHECK(out.posterior.shape() == Shape{3});
  }
}

TEST_CASE("expert_forward contracts") {
  Rng rng = make_rng(3, 0);
  ExpertNet net = build_expert(modality(ModalityId::depth), {3, 32, 32}, 2, rng);
  const Tensor x = random_input({3, 32, 32}, rng);

  const auto a = expert_forward(net, x, false, rng);
  double sum = 0;
  for (double v : a.posterior.data()) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-9);

  Rng other = make_rng(77, 0);
  const auto b = expert_forward(net, x, false, other);
  CHECK(a.posterior == b.posterior);
  CHECK(a.features == b.features);

  // Training mode changes the posterior through dropout, not the features.
  Rng d1 = make_rng(5, 0);
  const auto t = expert_forward(net, x, true, d1);
  CHECK(t.features == a.features);

  net.params().at("fc.weight") = Tensor(net.params().at("fc.weight").shape());
  net.params().at("fc.bias") = Tensor(net.params().at("fc.bias").shape());
  const auto z = expert_forward(net, x, false, rng);
  CHECK(z.posterior == Tensor::vector({0.5, 0.5}));

  CHECK_THROWS_AS(expert_forward(net, random_input({1, 32, 32}, rng), false, rng), DimensionError);
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng = make_rng(4, 0);
  const ExpertNet net = build_expert(modality(ModalityId::rgb), {3, 16, 16}, 2, rng);
  const Tensor batch = random_input({3, 3, 16, 16}, rng);
  const auto all = expert_forward(net, batch, false, rng);
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t n = 3 * 16 * 16;
    Tensor one({3, 16, 16}, std::vector<double>(batch.values().begin() + b * n, batch.values().begin() + (b + 1) * n));
    const auto single = expert_forward(net, one, false, rng);
    for (std::size_t c = 0; c < 2; ++c) CHECK(all.posterior.at(b, c) == doctest::Approx(single.posterior[c]).epsilon(1e-12));
  }
}

TEST_CASE("colorize_depth") {
  const Tensor near({1, 2, 2}, 0.5), far({1, 2, 2}, 8.0);
  const Tensor blue = colorize_depth(near, 0.5, 8.0);
  const Tensor red = colorize_depth(far, 0.5, 8.0);
  CHECK(blue.shape() == Shape{3, 2, 2});
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(blue[p] == 0.0);
    CHECK(blue[4 + p] == 0.0);
    CHECK(blue[8 + p] == 1.0);
    CHECK(red[p] == 1.0);
    CHECK(red[4 + p] == 0.0);
    CHECK(red[8 + p] == 0.0);
  }
  const Tensor invalid({1, 1, 2}, std::vector<double>{0.0, std::nan("")});
  const Tensor black = colorize_depth(invalid, 0.5, 8.0);
  for (double v : black.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(colorize_depth(near, 2.0, 2.0), ParameterError);
  CHECK_THROWS_AS(colorize_depth(near, 3.0, 2.0), ParameterError);
}

TEST_CASE("colorize_depth stays in range and follows the jet order") {
  const std::size_t n = 400;
  Tensor ramp({1, 1, n});
  for (std::size_t i = 0; i < n; ++i) ramp[i] = 0.1 + 9.0 * static_cast<double>(i) / (n - 1);
  const Tensor c = colorize_depth(ramp, 0.5, 8.0);
  for (double v : c.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Along the map, (red - blue) never decreases.
  double prev = -2;
  for (std::size_t i = 0; i < n; ++i) {
    const double key = c[i] - c[2 * n + i];
    CHECK(key >= prev - 1e-15);
    prev = key;
  }
}

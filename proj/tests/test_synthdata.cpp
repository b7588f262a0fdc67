#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "adafuse/error.hpp"
#include "adafuse/synthdata.hpp"
#include "adafuse/tensor_io.hpp"

using namespace adafuse;
namespace fs = std::filesystem;

namespace {

double mean(const Tensor& t) {
  return std::accumulate(t.data().begin(), t.data().end(), 0.0) / static_cast<double>(t.size());
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adafuse_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("regime tables") {
  for (const auto& name : regime_names()) CHECK_NOTHROW(regime_by_name(name).validate());
  CHECK(regime_by_name("dark-indoor").rgb.brightness == 0.1);
  CHECK(regime_by_name("bright-outdoor").depth.max_range == 4.0);
  CHECK_THROWS_AS(regime_by_name("fog"), ConfigError);
  EnvironmentRegime bad = regime_by_name("blur");
  bad.depth.dropout = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = regime_by_name("blur");
  bad.rgb.blur = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("regime scripts") {
  const RegimeScript s = parse_script("0:dark-indoor,500:bright-outdoor");
  REQUIRE(s.size() == 2);
  CHECK(regime_at(s, 499).name == "dark-indoor");
  CHECK(regime_at(s, 500).name == "bright-outdoor");
  CHECK(format_script(s) == "0:dark-indoor,500:bright-outdoor");
  CHECK_THROWS_AS(parse_script("5:dark-indoor"), ConfigError);
  CHECK_THROWS_AS(parse_script("0:dark-indoor,0:blur"), ConfigError);
  CHECK_THROWS_AS(parse_script("0:dark-indoor,x:blur"), ConfigError);
  const RegimeScript alt = alternating_script(1000, 100, {"dark-indoor", "bright-outdoor"});
  CHECK(alt.size() == 10);
  CHECK(regime_at(alt, 150).name == "bright-outdoor");
  CHECK(regime_at(alt, 999).name == "bright-outdoor");
}

TEST_CASE("script flips the regime label exactly at the change frame") {
  const auto frames = generate_sequence(1000, parse_script("0:dark-indoor,500:bright-outdoor"), {32, 32}, 0, 3);
  for (const auto& f : frames) CHECK(f.regime == (f.frame_index < 500 ? "dark-indoor" : "bright-outdoor"));
}

TEST_CASE("empty scene and determinism") {
  const RegimeScript script = parse_script("0:bright-indoor,10:blur");
  const auto empty = generate_sequence(5, script, {48, 48}, 0, 1);
  for (const auto& f : empty) CHECK(f.annotations.empty());

  const auto a = generate_sequence(20, script, {96, 96}, 3, 11);
  const auto b = generate_sequence(20, script, {96, 96}, 3, 11);
  CHECK(a == b);
  const auto c = generate_sequence(20, script, {96, 96}, 3, 12);
  CHECK_FALSE(a == c);
  CHECK_THROWS_AS(generate_sequence(2, script, {24, 24}, 2, 1), ConfigError);
}

TEST_CASE("frames satisfy the data invariants") {
  const auto frames = generate_sequence(300, alternating_script(300, 50, {"dark-indoor", "bright-outdoor"}),
                                        {96, 96}, 3, 5);
  std::size_t annotations = 0, occluded = 0;
  for (const auto& f : frames) {
    CHECK(f.rgb.shape() == Shape{3, 96, 96});
    CHECK(f.depth.shape() == Shape{1, 96, 96});
    CHECK(f.motion.shape() == Shape{1, 96, 96});
    for (double v : f.rgb.data()) CHECK((v >= 0.0 && v <= 1.0));
    for (double v : f.depth.data()) CHECK(v >= 0.0);
    for (const auto& a : f.annotations) {
      CHECK(a.box.valid());
      CHECK(a.box.inside(96, 96));
      CHECK(a.box.height() >= 32);
      CHECK(a.box.height() <= 56);
      ++annotations;
      occluded += a.occluded;
    }
  }
  CHECK(annotations == 900);
  CHECK(occluded > 0);
  CHECK(occluded < annotations / 2);
}

TEST_CASE("label sanity: visible boxes are mostly actor pixels") {
  const auto clean = render_clean_sequence(400, {96, 96}, 3, 21);
  std::size_t checked = 0;
  for (const auto& cf : clean) {
    const std::size_t w = cf.frame.width();
    for (const auto& a : cf.frame.annotations) {
      if (a.occluded) continue;
      std::size_t inside = 0, covered = 0;
      for (auto y = static_cast<std::size_t>(a.box.y_min); y < static_cast<std::size_t>(a.box.y_max); ++y) {
        for (auto x = static_cast<std::size_t>(a.box.x_min); x < static_cast<std::size_t>(a.box.x_max); ++x) {
          ++inside;
          covered += cf.actor_mask[y * w + x];
        }
      }
      CHECK(static_cast<double>(covered) >= 0.6 * static_cast<double>(inside));
      ++checked;
    }
  }
  CHECK(checked > 600);
}

TEST_CASE("corrupt_modality") {
  const auto clean = render_clean_sequence(2, {96, 96}, 3, 4);
  Rng rng = make_rng(1, 0);

  SUBCASE("identity leaves the frame unchanged") {
    EnvironmentRegime id = regime_by_name("identity");
    const MultimodalFrame out = corrupt_modality(clean[1].frame, id, rng, &clean[0].frame.rgb);
    CHECK(out.rgb == clean[1].frame.rgb);
    CHECK(out.depth == clean[1].frame.depth);
    CHECK(out.motion == clean[1].frame.motion);
    CHECK(out.annotations == clean[1].frame.annotations);
  }
  SUBCASE("dark-indoor darkens") {
    const EnvironmentRegime dark = regime_by_name("dark-indoor");
    const MultimodalFrame out = corrupt_modality(clean[0].frame, dark, rng);
    CHECK(mean(out.rgb) < 0.1 * mean(clean[0].frame.rgb) + dark.rgb.sigma);
    CHECK(out.annotations == clean[0].frame.annotations);
  }
  SUBCASE("range rule zeroes far readings") {
    EnvironmentRegime far = regime_by_name("bright-outdoor");
    far.depth.dropout = 0;
    far.depth.speckle = 0;
    MultimodalFrame f = clean[0].frame;
    for (std::size_t i = 0; i < 96 * 96; ++i) f.depth[i] = (i % 2) ? 6.0 : 3.0;
    const MultimodalFrame out = corrupt_modality(f, far, rng);
    for (std::size_t i = 0; i < 96 * 96; ++i) CHECK(out.depth[i] == ((i % 2) ? 0.0 : 3.0));
  }
  SUBCASE("bright-outdoor drops distant actors from depth") {
    const EnvironmentRegime far = regime_by_name("bright-outdoor");
    const auto frames = render_clean_sequence(200, {96, 96}, 3, 8);
    std::size_t hidden = 0;
    for (const auto& cf : frames) {
      const MultimodalFrame out = corrupt_modality(cf.frame, far, rng);
      for (std::size_t i = 0; i < out.depth.size(); ++i) {
        if (cf.frame.depth[i] > 4.0) {
          CHECK(out.depth[i] == 0.0);
          hidden += cf.actor_mask[i];
        }
      }
    }
    CHECK(hidden > 0);
  }
  SUBCASE("motion is recomputed from corrupted rgb") {
    const EnvironmentRegime noisy = regime_by_name("dark-indoor");
    const MultimodalFrame first = corrupt_modality(clean[0].frame, noisy, rng);
    for (double v : first.motion.data()) CHECK(v == 0.0);
    const MultimodalFrame second = corrupt_modality(clean[1].frame, noisy, rng, &first.rgb);
    CHECK(second.motion == motion_channel(first.rgb, second.rgb));
  }
}

TEST_CASE("motion_channel") {
  const Tensor black({3, 4, 4}, 0.0), white({3, 4, 4}, 1.0);
  const Tensor still = motion_channel(white, white);
  for (double v : still.data()) CHECK(v == 0.0);
  const Tensor all = motion_channel(black, white);
  CHECK(all.shape() == Shape{1, 4, 4});
  for (double v : all.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(motion_channel(black, Tensor({3, 4, 5})), DimensionError);
}

TEST_CASE("motion support lies on the actor's old and new footprint") {
  // Frames 0 and 1 share the background offset, so only the actor moves.
  const auto clean = render_clean_sequence(2, {96, 96}, 1, 31);
  const Tensor m = motion_channel(clean[0].frame.rgb, clean[1].frame.rgb);
  double inside = 0, outside = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    (clean[0].actor_mask[i] || clean[1].actor_mask[i] ? inside : outside) += m[i];
  }
  CHECK(inside > 0);
  CHECK(outside == 0.0);
}

TEST_CASE("dataset round trip and validation") {
  const Dataset d = make_dataset(12, parse_script("0:bright-indoor,6:dark-indoor"), {64, 64}, 2, 9);
  const fs::path dir = temp_dir("dataset");
  write_dataset(d, dir);
  CHECK(fs::exists(dir / "frames" / "000011.rgb.mdtf"));
  CHECK(fs::exists(dir / "meta.txt"));
  const Dataset r = read_dataset(dir);
  CHECK(r.frames == d.frames);
  CHECK(r.seed == 9);
  CHECK(r.script == d.script);

  SUBCASE("truncated tensor") {
    fs::resize_file(dir / "frames" / "000003.depth.mdtf", 30);
    try {
      read_dataset(dir);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("000003.depth.mdtf") != std::string::npos);
    }
  }
  SUBCASE("out-of-bounds annotation") {
    std::ofstream(dir / "annotations.tsv", std::ios::app) << "2\t7\t50\t10\t70\t40\t0\n";
    CHECK_THROWS_AS(read_dataset(dir), InputError);
  }
  SUBCASE("malformed annotation line") {
    std::ofstream(dir / "annotations.tsv", std::ios::app) << "2\t7\tabc\n";
    CHECK_THROWS_AS(read_dataset(dir), ParseError);
  }
  SUBCASE("missing regime") {
    std::ofstream(dir / "regimes.tsv") << "# frame_index\tregime\n0\tdark-indoor\n";
    CHECK_THROWS(read_dataset(dir));
  }
  fs::remove_all(dir);
}

TEST_CASE("splits are disjoint and cover the sequence") {
  for (std::size_t n : {10u, 200u, 2000u, 2001u}) {
    const auto [a0, a1] = split_range(Split::train, n);
    const auto [b0, b1] = split_range(Split::gate_val, n);
    const auto [c0, c1] = split_range(Split::test, n);
    CHECK(a0 == 0);
    CHECK(a1 == b0);
    CHECK(b1 == c0);
    CHECK(c1 == n);
    for (std::size_t f = 0; f < n; ++f) {
      const Split s = split_of(f, n);
      const auto [lo, hi] = split_range(s, n);
      CHECK((f >= lo && f < hi));
    }
  }
  CHECK(split_range(Split::train, 2000) == std::pair<std::size_t, std::size_t>{0, 1200});
  CHECK(split_name(Split::gate_val) == "gate-val");
  CHECK(parse_split("test") == Split::test);
  CHECK_THROWS_AS(parse_split("dev"), ConfigError);
}

#include "adafuse/synthdata.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "adafuse/error.hpp"
#include "adafuse/image.hpp"
#include "adafuse/tensor_io.hpp"

namespace adafuse {

// --- regimes ------------------------------------------------------------------

void EnvironmentRegime::validate() const {
  const auto bad = [&](const std::string& what) {
    throw ConfigError("regime '" + name + "': " + what);
  };
  if (!(rgb.brightness > 0 && std::isfinite(rgb.brightness))) bad("brightness must be positive");
  if (!(rgb.contrast > 0 && std::isfinite(rgb.contrast))) bad("contrast must be positive");
  if (!(rgb.sigma >= 0 && std::isfinite(rgb.sigma))) bad("rgb sigma must be >= 0");
  if (rgb.blur == 0 || rgb.blur % 2 == 0) bad("blur kernel must be odd");
  if (!(depth.dropout >= 0 && depth.dropout <= 1)) bad("depth dropout must be a probability");
  if (!(depth.max_range > 0)) bad("max range must be positive");
  if (!(depth.speckle >= 0 && std::isfinite(depth.speckle))) bad("speckle must be >= 0");
}

EnvironmentRegime regime_by_name(std::string_view name) {
  // name, {brightness, contrast, sigma, blur}, {dropout, max range, speckle}
  static const std::map<std::string, EnvironmentRegime, std::less<>> table = {
      {"identity", {"identity", {1.0, 1.0, 0.0, 1}, {0.0, std::numeric_limits<double>::infinity(), 0.0}}},
      {"bright-indoor", {"bright-indoor", {1.0, 1.0, 0.02, 1}, {0.02, 8.0, 0.03}}},
      {"dark-indoor", {"dark-indoor", {0.1, 0.6, 0.06, 1}, {0.02, 8.0, 0.03}}},
      {"bright-outdoor", {"bright-outdoor", {1.15, 1.1, 0.02, 1}, {0.2, 4.0, 0.08}}},
      {"blur", {"blur", {0.9, 1.0, 0.02, 5}, {0.05, 8.0, 0.05}}},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown regime '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> regime_names() {
  return {"identity", "bright-indoor", "dark-indoor", "bright-outdoor", "blur"};
}

RegimeScript parse_script(std::string_view text) {
  RegimeScript script;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const auto item = text.substr(start, end - start);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("script entry '" + std::string(item) + "' is not start:regime");
    }
    std::size_t frame = 0;
    const auto num = item.substr(0, colon);
    const auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), frame);
    if (ec != std::errc() || p != num.data() + num.size()) {
      throw ConfigError("bad script start frame '" + std::string(num) + "'");
    }
    script.push_back({frame, regime_by_name(item.substr(colon + 1))});
    start = end + 1;
  }
  if (script.empty() || script.front().start_frame != 0) {
    throw ConfigError("regime script must start at frame 0");
  }
  for (std::size_t i = 1; i < script.size(); ++i) {
    if (script[i].start_frame <= script[i - 1].start_frame) {
      throw ConfigError("regime script starts must be strictly increasing");
    }
  }
  return script;
}

std::string format_script(const RegimeScript& script) {
  std::string s;
  for (std::size_t i = 0; i < script.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(script[i].start_frame) + ":" + script[i].regime.name;
  }
  return s;
}

RegimeScript alternating_script(std::size_t frame_count, std::size_t period,
                                const std::vector<std::string>& regimes) {
  if (period == 0 || regimes.empty()) throw ConfigError("alternating script needs a period and regimes");
  RegimeScript script;
  for (std::size_t f = 0, k = 0; f < std::max<std::size_t>(frame_count, 1); f += period, ++k) {
    script.push_back({f, regime_by_name(regimes[k % regimes.size()])});
  }
  return script;
}

const EnvironmentRegime& regime_at(const RegimeScript& script, std::size_t frame_index) {
  if (script.empty()) throw ConfigError("empty regime script");
  const EnvironmentRegime* r = &script.front().regime;
  for (const auto& c : script) {
    if (c.start_frame > frame_index) break;
    r = &c.regime;
  }
  return *r;
}

// --- rendering ----------------------------------------------------------------

namespace {

constexpr double kMinActorDistance = 2.0;
constexpr double kMaxActorDistance = 6.0;
constexpr std::size_t kMinActorHeight = 32;
constexpr std::size_t kMaxActorHeight = 56;
constexpr double kOcclusionFraction = 0.4;

using Color = std::array<double, 3>;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Static wrap-around background the camera pans across.
class Panorama {
 public:
  Panorama(FrameSize size, Rng& rng)
      : h_(size.height), w_(size.width * 4), horizon_(static_cast<std::size_t>(0.62 * static_cast<double>(size.height))),
        rgb_({3, h_, w_}), depth_({1, h_, w_}) {
    const double phase = uniform(rng, 0, 2 * std::numbers::pi);
    const Color wall = {uniform(rng, 0.45, 0.65), uniform(rng, 0.45, 0.6), uniform(rng, 0.4, 0.55)};
    std::normal_distribution<double> grain(0.0, 0.03);
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t x = 0; x < w_; ++x) {
        const double wall_depth =
            6.0 + 0.75 * (1 + std::sin(2 * std::numbers::pi * 2.0 * static_cast<double>(x) / static_cast<double>(w_) + phase));
        Color c;
        double d;
        if (y < horizon_) {
          const double panel = ((x / 48) % 2) ? 0.06 : -0.04;
          const double tex = 0.05 * std::sin(2 * std::numbers::pi * static_cast<double>(x) / 16.0 + phase) *
                             std::sin(2 * std::numbers::pi * static_cast<double>(y) / 11.0);
          for (int ch = 0; ch < 3; ++ch) c[ch] = wall[ch] + panel + tex;
          d = wall_depth;
        } else {
          const double checker = (((x / 12) + (y / 6)) % 2) ? 0.05 : -0.05;
          c = {0.36 + checker, 0.3 + checker, 0.25 + checker};
          const double t = static_cast<double>(h_ - 1 - y) / static_cast<double>(h_ - 1 - horizon_);
          d = 2.0 + t * (wall_depth - 2.0);
        }
        for (int ch = 0; ch < 3; ++ch) rgb_.at(ch, y, x) = std::clamp(c[ch] + grain(rng), 0.0, 1.0);
        depth_.at(0, y, x) = d;
      }
    }
    const std::size_t objects = 14;
    for (std::size_t i = 0; i < objects; ++i) add_object(rng);
  }

  std::size_t width() const { return w_; }
  std::size_t horizon() const { return horizon_; }

  void blit(std::size_t offset, Tensor& rgb, Tensor& depth) const {
    const std::size_t fw = rgb.dim(2);
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t x = 0; x < fw; ++x) {
        const std::size_t px = (x + offset) % w_;
        for (std::size_t ch = 0; ch < 3; ++ch) rgb.at(ch, y, x) = rgb_.at(ch, y, px);
        depth.at(0, y, x) = depth_.at(0, y, px);
      }
    }
  }

  /// Bottom row for something standing at `distance` metres.
  double ground_row(double distance) const {
    const double t = (distance - kMinActorDistance) / (kMaxActorDistance - kMinActorDistance);
    return static_cast<double>(h_ - 2) - t * static_cast<double>(h_ - 2 - horizon_ - 4);
  }

 private:
  void add_object(Rng& rng) {
    const std::size_t kind = uniform_int(rng, 0, 2);
    const std::size_t x0 = uniform_int(rng, 0, w_ - 1);
    Color c = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
    if (kind == 0) {
      // poster on the wall: rgb only
      const std::size_t ow = uniform_int(rng, 12, 30);
      const std::size_t oh = std::min(uniform_int(rng, 10, 25), horizon_ > 6 ? horizon_ - 6 : 0);
      if (oh == 0) return;
      const std::size_t y0 = uniform_int(rng, 4, horizon_ - oh - 2);
      for (std::size_t y = y0; y < y0 + oh; ++y)
        for (std::size_t dx = 0; dx < ow; ++dx)
          for (std::size_t ch = 0; ch < 3; ++ch) rgb_.at(ch, y, (x0 + dx) % w_) = c[ch];
      return;
    }
    // pillar (tall, person-like in depth) or crate (wide)
    const double dist = uniform(rng, 2.5, 5.5);
    const std::size_t ow = kind == 1 ? uniform_int(rng, 8, 14) : uniform_int(rng, 24, 40);
    const std::size_t oh = kind == 1 ? uniform_int(rng, 30, 56) : uniform_int(rng, 14, 24);
    const auto bottom = static_cast<std::size_t>(ground_row(dist));
    const std::size_t top = bottom > oh ? bottom - oh : 0;
    if (kind == 1) c = {c[0] * 0.4 + 0.3, c[0] * 0.4 + 0.28, c[0] * 0.4 + 0.26};
    for (std::size_t y = top; y < bottom; ++y) {
      const double shade = 0.85 + 0.15 * static_cast<double>(y - top) / static_cast<double>(oh);
      for (std::size_t dx = 0; dx < ow; ++dx) {
        const std::size_t x = (x0 + dx) % w_;
        for (std::size_t ch = 0; ch < 3; ++ch) rgb_.at(ch, y, x) = std::clamp(c[ch] * shade, 0.0, 1.0);
        depth_.at(0, y, x) = dist;
      }
    }
  }

  std::size_t h_, w_, horizon_;
  Tensor rgb_, depth_;
};

struct Actor {
  int track_id = 0;
  double x = 0, vx = 0;
  double distance = 3;
  std::size_t w = 16, h = 32;
  double y_max = 0;
  std::size_t frames_left = 0;
  Color shirt{}, pants{}, skin{};

  BoundingBox box() const {
    const double x0 = std::round(x);
    return {x0, y_max - static_cast<double>(h), x0 + static_cast<double>(w), y_max};
  }
};

class ActorPool {
 public:
  ActorPool(FrameSize size, const Panorama& pano, std::size_t count, Rng rng)
      : size_(size), pano_(pano), rng_(rng), actors_(count) {
    if (count > 0 && (size.width < kMaxActorHeight / 2 + 1 || size.height < kMaxActorHeight)) {
      throw ConfigError("actors up to " + std::to_string(kMaxActorHeight / 2) + "x" +
                        std::to_string(kMaxActorHeight) + " do not fit a " +
                        std::to_string(size.width) + "x" + std::to_string(size.height) + " frame");
    }
    for (auto& a : actors_) spawn(a);
  }

  const std::vector<Actor>& actors() const { return actors_; }

  void step() {
    for (auto& a : actors_) {
      if (a.frames_left == 0) {
        spawn(a);
        continue;
      }
      --a.frames_left;
      a.x += a.vx;
      const double max_x = static_cast<double>(size_.width - a.w);
      if (a.x < 0) a.x = -a.x, a.vx = -a.vx;
      if (a.x > max_x) a.x = 2 * max_x - a.x, a.vx = -a.vx;
      a.x = std::clamp(a.x, 0.0, max_x);
    }
  }

 private:
  void spawn(Actor& a) {
    static const Color skins[] = {{0.95, 0.8, 0.7}, {0.8, 0.6, 0.45}, {0.55, 0.38, 0.26}, {0.35, 0.24, 0.16}};
    a.track_id = next_track_++;
    a.h = uniform_int(rng_, kMinActorHeight, kMaxActorHeight);
    a.w = a.h / 2;
    a.distance = uniform(rng_, kMinActorDistance, kMaxActorDistance);
    a.y_max = std::round(std::max(pano_.ground_row(a.distance), static_cast<double>(a.h)));
    a.x = uniform(rng_, 0, static_cast<double>(size_.width - a.w));
    a.vx = uniform(rng_, 0.3, 1.5) * (uniform_int(rng_, 0, 1) ? 1.0 : -1.0);
    a.frames_left = uniform_int(rng_, 80, 240);
    a.shirt = {uniform(rng_, 0.1, 0.95), uniform(rng_, 0.1, 0.95), uniform(rng_, 0.1, 0.95)};
    a.pants = {uniform(rng_, 0.05, 0.5), uniform(rng_, 0.05, 0.5), uniform(rng_, 0.05, 0.5)};
    a.skin = skins[uniform_int(rng_, 0, 3)];
  }

  FrameSize size_;
  const Panorama& pano_;
  Rng rng_;
  std::vector<Actor> actors_;
  int next_track_ = 0;
};

void draw_actor(const Actor& a, Tensor& rgb, Tensor& depth, std::vector<std::uint8_t>& mask) {
  const BoundingBox b = a.box();
  const std::size_t width = rgb.dim(2);
  const auto x0 = static_cast<std::size_t>(b.x_min), y0 = static_cast<std::size_t>(b.y_min);
  for (std::size_t py = y0; py < static_cast<std::size_t>(b.y_max); ++py) {
    const double v = (static_cast<double>(py - y0) + 0.5) / static_cast<double>(a.h);
    for (std::size_t px = x0; px < static_cast<std::size_t>(b.x_max); ++px) {
      const double u = (static_cast<double>(px - x0) + 0.5) / static_cast<double>(a.w);
      const Color* c = nullptr;
      double shade = 1.0;
      const double hu = (u - 0.5) / 0.25, hv = (v - 0.11) / 0.11;
      if (hu * hu + hv * hv <= 1.0) {
        c = &a.skin;
      } else if (v >= 0.18 && v < 0.22 && u >= 0.4 && u < 0.6) {
        c = &a.skin;
      } else if (v >= 0.2 && v < 0.6) {
        c = &a.shirt;
        shade = ((py - y0) / 3) % 2 ? 0.75 : 1.0;
      } else if (v >= 0.6 && ((u >= 0.05 && u < 0.45) || (u >= 0.55 && u < 0.95))) {
        c = &a.pants;
      }
      if (!c) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) rgb.at(ch, py, px) = (*c)[ch] * shade;
      const double r = (u - 0.5) * 2;
      depth.at(0, py, px) = a.distance + 0.08 * r * r;
      mask[py * width + px] = 1;
    }
  }
}

std::vector<Annotation> annotate(const std::vector<Actor>& actors) {
  std::vector<Annotation> out;
  for (const auto& a : actors) {
    Annotation ann{a.box(), false, a.track_id};
    for (const auto& other : actors) {
      if (&other == &a || other.distance >= a.distance) continue;
      if (overlap_area(ann.box, other.box()) > kOcclusionFraction * ann.box.area()) ann.occluded = true;
    }
    out.push_back(ann);
  }
  return out;
}

}  // namespace

Tensor motion_channel(const Tensor& prev_rgb, const Tensor& cur_rgb) {
  require_same_shape(prev_rgb, cur_rgb, "motion_channel");
  if (cur_rgb.rank() != 3) {
    throw DimensionError("motion_channel: expected [C,H,W], got " + shape_string(cur_rgb.shape()));
  }
  const std::size_t c = cur_rgb.dim(0), plane = cur_rgb.dim(1) * cur_rgb.dim(2);
  Tensor out({1, cur_rgb.dim(1), cur_rgb.dim(2)});
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0;
    for (std::size_t ch = 0; ch < c; ++ch) s += std::abs(cur_rgb[ch * plane + i] - prev_rgb[ch * plane + i]);
    out[i] = std::clamp(s / static_cast<double>(c), 0.0, 1.0);
  }
  return out;
}

std::vector<CleanFrame> render_clean_sequence(std::size_t frame_count, FrameSize size,
                                              std::size_t actor_count, std::uint64_t seed) {
  if (size.height < 16 || size.width < 16) throw ConfigError("frame size too small");
  Rng scene_rng = make_rng(seed, 0);
  const Panorama pano(size, scene_rng);
  ActorPool pool(size, pano, actor_count, make_rng(seed, 1));

  std::vector<CleanFrame> frames;
  frames.reserve(frame_count);
  for (std::size_t f = 0; f < frame_count; ++f) {
    if (f > 0) pool.step();
    CleanFrame cf;
    MultimodalFrame& fr = cf.frame;
    fr.rgb = Tensor({3, size.height, size.width});
    fr.depth = Tensor({1, size.height, size.width});
    fr.frame_index = f;
    fr.regime = "identity";
    pano.blit((f * 2 / 5) % pano.width(), fr.rgb, fr.depth);
    cf.actor_mask.assign(size.height * size.width, 0);
    std::vector<const Actor*> order;
    for (const auto& a : pool.actors()) order.push_back(&a);
    std::stable_sort(order.begin(), order.end(),
                     [](const Actor* a, const Actor* b) { return a->distance > b->distance; });
    for (const Actor* a : order) draw_actor(*a, fr.rgb, fr.depth, cf.actor_mask);
    fr.annotations = annotate(pool.actors());
    fr.motion = f == 0 ? Tensor({1, size.height, size.width})
                       : motion_channel(frames.back().frame.rgb, fr.rgb);
    frames.push_back(std::move(cf));
  }
  return frames;
}

MultimodalFrame corrupt_modality(const MultimodalFrame& clean, const EnvironmentRegime& regime,
                                 Rng& rng, const Tensor* prev_rgb) {
  regime.validate();
  MultimodalFrame out = clean;
  out.regime = regime.name;

  const RgbNoise& rn = regime.rgb;
  if (rn.brightness != 1.0 || rn.contrast != 1.0 || rn.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, rn.sigma > 0 ? rn.sigma : 1.0);
    for (auto& v : out.rgb.data()) {
      double x = v;
      if (rn.brightness != 1.0 || rn.contrast != 1.0) x = rn.brightness * (rn.contrast * (x - 0.5) + 0.5);
      if (rn.sigma > 0.0) x += noise(rng);
      v = std::clamp(x, 0.0, 1.0);
    }
  }
  if (rn.blur > 1) out.rgb = box_blur(out.rgb, rn.blur);

  const DepthNoise& dn = regime.depth;
  std::bernoulli_distribution drop(dn.dropout);
  std::normal_distribution<double> speckle(0.0, dn.speckle > 0 ? dn.speckle : 1.0);
  for (auto& d : out.depth.data()) {
    if (d == 0.0) continue;
    if (dn.dropout > 0.0 && drop(rng)) {
      d = 0.0;
    } else if (d > dn.max_range) {
      d = 0.0;
    } else if (dn.speckle > 0.0) {
      d += speckle(rng);
      if (d <= 0.0) d = 0.0;
    }
  }

  out.motion = prev_rgb ? motion_channel(*prev_rgb, out.rgb)
                        : Tensor({1, out.rgb.dim(1), out.rgb.dim(2)});
  return out;
}

std::vector<MultimodalFrame> generate_sequence(std::size_t frame_count, const RegimeScript& script,
                                               FrameSize size, std::size_t actor_count,
                                               std::uint64_t seed) {
  if (script.empty() || script.front().start_frame != 0) {
    throw ConfigError("regime script must start at frame 0");
  }
  for (std::size_t i = 1; i < script.size(); ++i) {
    if (script[i].start_frame <= script[i - 1].start_frame) {
      throw ConfigError("regime script starts must be strictly increasing");
    }
  }
  for (const auto& c : script) c.regime.validate();

  auto clean = render_clean_sequence(frame_count, size, actor_count, seed);
  std::vector<MultimodalFrame> frames;
  frames.reserve(frame_count);
  for (std::size_t f = 0; f < frame_count; ++f) {
    Rng rng = make_rng(seed, 1000 + f);
    const Tensor* prev = f == 0 ? nullptr : &frames.back().rgb;
    frames.push_back(corrupt_modality(clean[f].frame, regime_at(script, f), rng, prev));
    clean[f].frame = MultimodalFrame{};  // release memory early
  }
  return frames;
}

Dataset make_dataset(std::size_t frame_count, const RegimeScript& script, FrameSize size,
                     std::size_t actor_count, std::uint64_t seed) {
  Dataset d;
  d.size = size;
  d.seed = seed;
  d.actors = actor_count;
  d.script = format_script(script);
  d.frames = generate_sequence(frame_count, script, size, actor_count, seed);
  return d;
}

// --- dataset files -------------------------------------------------------------

namespace {

std::string frame_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find('\t', start);
    out.push_back(line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

struct Line {
  std::string text;
  std::size_t number;
  std::size_t offset;
};

std::vector<Line> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open at byte offset 0");
  std::vector<Line> lines;
  std::string s;
  std::size_t offset = 0, n = 0;
  while (std::getline(in, s)) {
    ++n;
    const std::size_t len = s.size() + 1;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    if (!s.empty() && s[0] != '#') lines.push_back({s, n, offset});
    offset += len;
  }
  return lines;
}

std::string where(const std::filesystem::path& p, const Line& l) {
  return p.string() + " line " + std::to_string(l.number) + " (byte offset " + std::to_string(l.offset) + ")";
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory / "frames");
  for (const auto& f : dataset.frames) {
    const std::string stem = frame_stem(f.frame_index);
    write_mdtf(directory / "frames" / (stem + ".rgb.mdtf"), f.rgb);
    write_mdtf(directory / "frames" / (stem + ".depth.mdtf"), f.depth);
    write_mdtf(directory / "frames" / (stem + ".motion.mdtf"), f.motion);
  }
  {
    std::ofstream out(directory / "annotations.tsv", std::ios::binary);
    out << "# frame_index\ttrack_id\tx_min\ty_min\tx_max\ty_max\toccluded\n";
    for (const auto& f : dataset.frames) {
      for (const auto& a : f.annotations) {
        out << f.frame_index << '\t' << a.track_id << '\t' << fmt_double(a.box.x_min) << '\t'
            << fmt_double(a.box.y_min) << '\t' << fmt_double(a.box.x_max) << '\t'
            << fmt_double(a.box.y_max) << '\t' << (a.occluded ? 1 : 0) << '\n';
      }
    }
  }
  {
    std::ofstream out(directory / "regimes.tsv", std::ios::binary);
    out << "# frame_index\tregime\n";
    for (const auto& f : dataset.frames) out << f.frame_index << '\t' << f.regime << '\n';
  }
  std::ofstream meta(directory / "meta.txt", std::ios::binary);
  meta << "frames=" << dataset.frames.size() << '\n'
       << "size=" << dataset.size.height << 'x' << dataset.size.width << '\n'
       << "seed=" << dataset.seed << '\n'
       << "actors=" << dataset.actors << '\n'
       << "script=" << dataset.script << '\n';
  if (!meta) throw InputError("failed writing dataset to " + directory.string());
}

Dataset read_dataset(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  Dataset d;
  std::size_t frame_count = 0;
  bool have_frames = false, have_size = false;
  const fs::path meta_path = directory / "meta.txt";
  for (const auto& l : read_lines(meta_path)) {
    const auto eq = l.text.find('=');
    if (eq == std::string::npos) throw ParseError(where(meta_path, l) + ": expected key=value");
    const std::string key = l.text.substr(0, eq), value = l.text.substr(eq + 1);
    if (key == "frames") {
      frame_count = parse_number<std::size_t>(value, where(meta_path, l));
      have_frames = true;
    } else if (key == "size") {
      const auto x = value.find('x');
      if (x == std::string::npos) throw ParseError(where(meta_path, l) + ": size must be HxW");
      d.size.height = parse_number<std::size_t>(std::string_view(value).substr(0, x), where(meta_path, l));
      d.size.width = parse_number<std::size_t>(std::string_view(value).substr(x + 1), where(meta_path, l));
      have_size = true;
    } else if (key == "seed") {
      d.seed = parse_number<std::uint64_t>(value, where(meta_path, l));
    } else if (key == "actors") {
      d.actors = parse_number<std::size_t>(value, where(meta_path, l));
    } else if (key == "script") {
      d.script = value;
    } else {
      throw ParseError(where(meta_path, l) + ": unknown key '" + key + "'");
    }
  }
  if (!have_frames || !have_size) throw ParseError(meta_path.string() + ": missing frames or size");

  d.frames.resize(frame_count);
  const Shape rgb_shape{3, d.size.height, d.size.width}, plane{1, d.size.height, d.size.width};
  for (std::size_t i = 0; i < frame_count; ++i) {
    auto& f = d.frames[i];
    f.frame_index = i;
    const std::string stem = frame_stem(i);
    const auto load = [&](const char* kind, const Shape& expect) {
      const fs::path p = directory / "frames" / (stem + "." + kind + ".mdtf");
      Tensor t = read_mdtf(p);
      if (t.shape() != expect) {
        throw ParseError(p.string() + ": shape " + shape_string(t.shape()) + " does not match " +
                         shape_string(expect) + " at byte offset 4");
      }
      return t;
    };
    f.rgb = load("rgb", rgb_shape);
    f.depth = load("depth", plane);
    f.motion = load("motion", plane);
  }

  const fs::path ann_path = directory / "annotations.tsv";
  for (const auto& l : read_lines(ann_path)) {
    const auto cols = split_tabs(l.text);
    const std::string at = where(ann_path, l);
    if (cols.size() != 7) throw ParseError(at + ": expected 7 columns, got " + std::to_string(cols.size()));
    const auto idx = parse_number<std::size_t>(cols[0], at);
    if (idx >= frame_count) throw ParseError(at + ": frame index " + std::to_string(idx) + " out of range");
    Annotation a;
    a.track_id = parse_number<int>(cols[1], at);
    a.box = {parse_number<double>(cols[2], at), parse_number<double>(cols[3], at),
             parse_number<double>(cols[4], at), parse_number<double>(cols[5], at)};
    const int occ = parse_number<int>(cols[6], at);
    if (occ != 0 && occ != 1) throw ParseError(at + ": occluded flag must be 0 or 1");
    a.occluded = occ == 1;
    if (!a.box.valid() || !a.box.inside(static_cast<double>(d.size.width), static_cast<double>(d.size.height))) {
      throw InputError(at + ": annotation box " + to_string(a.box) + " is outside the " +
                       std::to_string(d.size.width) + "x" + std::to_string(d.size.height) + " frame");
    }
    d.frames[idx].annotations.push_back(a);
  }

  const fs::path reg_path = directory / "regimes.tsv";
  std::vector<bool> seen(frame_count, false);
  for (const auto& l : read_lines(reg_path)) {
    const auto cols = split_tabs(l.text);
    const std::string at = where(reg_path, l);
    if (cols.size() != 2) throw ParseError(at + ": expected 2 columns");
    const auto idx = parse_number<std::size_t>(cols[0], at);
    if (idx >= frame_count) throw ParseError(at + ": frame index out of range");
    d.frames[idx].regime = std::string(cols[1]);
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < frame_count; ++i) {
    if (!seen[i]) throw ParseError(reg_path.string() + ": no regime for frame " + std::to_string(i));
  }
  return d;
}

// --- splits --------------------------------------------------------------------

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::gate_val: return "gate-val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "gate-val") return Split::gate_val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::pair<std::size_t, std::size_t> split_range(Split s, std::size_t frame_count) {
  const std::size_t a = frame_count * 6 / 10, b = frame_count * 8 / 10;
  switch (s) {
    case Split::train: return {0, a};
    case Split::gate_val: return {a, b};
    case Split::test: return {b, frame_count};
  }
  return {0, 0};
}

Split split_of(std::size_t frame_index, std::size_t frame_count) {
  for (Split s : {Split::train, Split::gate_val, Split::test}) {
    const auto [lo, hi] = split_range(s, frame_count);
    if (frame_index >= lo && frame_index < hi) return s;
  }
  throw InputError("frame index " + std::to_string(frame_index) + " outside a " +
                   std::to_string(frame_count) + "-frame dataset");
}

}  // namespace adafuse

#include "adafuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "adafuse/error.hpp"

namespace adafuse {

namespace {

const std::map<std::string, std::string, std::less<>>& defaults() {
  static const std::map<std::string, std::string, std::less<>> d = {
      {"train.lr", "0.01"},
      {"train.fusion_lr", "0.005"},
      {"train.momentum", "0.9"},
      {"train.batch_size", "64"},
      {"train.epochs", "10"},
      {"train.fusion_epochs", "10"},
      {"train.dropout", "0.5"},
      {"train.seed", "7"},
      {"data.frames", "2000"},
      {"data.height", "96"},
      {"data.width", "96"},
      {"data.actors", "3"},
      {"data.seed", "7"},
      {"data.script", ""},
      {"data.period", "100"},
      {"data.regimes", "dark-indoor,bright-outdoor"},
      {"data.negatives_per_frame", "10"},
      {"model.modalities", "rgb,depth"},
      {"detect.scales", "32,48,64"},
      {"detect.aspect", "0.5"},
      {"detect.stride_fraction", "0.25"},
      {"detect.nms_iou", "0.3"},
      {"eval.iou", "0.6"},
      {"depth.min", "0.5"},
      {"depth.max", "8.0"},
      {"run.threads", "1"},
  };
  return d;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    out.push_back(trim(std::string_view(s).substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

}  // namespace

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  it->second = value;
}

void Config::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected section.key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ": expected key=value at line " + std::to_string(n));
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (!values_.count(key)) {
      throw ConfigError(path.string() + ": unknown key '" + key + "' at line " + std::to_string(n));
    }
    values_[key] = trim(std::string_view(t).substr(eq + 1));
  }
}

const std::string& Config::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  return it->second;
}

double Config::get_double(std::string_view key) const {
  const std::string& s = get(key);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t Config::get_u64(std::string_view key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::size_t Config::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::vector<std::size_t> Config::get_sizes(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(get(key))) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError(std::string(key) + ": bad list entry '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

TrainConfig train_config(const Config& c, Stage stage) {
  TrainConfig t;
  t.stage = stage;
  t.learning_rate = c.get_double(stage == Stage::experts ? "train.lr" : "train.fusion_lr");
  t.epochs = c.get_size(stage == Stage::experts ? "train.epochs" : "train.fusion_epochs");
  t.momentum = c.get_double("train.momentum");
  t.batch_size = c.get_size("train.batch_size");
  t.dropout_rate = c.get_double("train.dropout");
  t.seed = c.get_u64("train.seed");
  t.validate();
  return t;
}

CropConfig crop_config(const Config& c) {
  CropConfig cc;
  cc.negatives_per_frame = c.get_size("data.negatives_per_frame");
  const auto scales = c.get_sizes("detect.scales");
  if (scales.empty()) throw ConfigError("detect.scales must not be empty");
  cc.min_height = *std::min_element(scales.begin(), scales.end());
  cc.max_height = *std::max_element(scales.begin(), scales.end());
  cc.aspect = c.get_double("detect.aspect");
  cc.depth = {c.get_double("depth.min"), c.get_double("depth.max")};
  if (!(cc.depth.max_m > cc.depth.min_m)) throw ConfigError("depth.max must exceed depth.min");
  return cc;
}

DetectConfig detect_config(const Config& c) {
  DetectConfig d;
  d.proposals.scales = c.get_sizes("detect.scales");
  d.proposals.aspect = c.get_double("detect.aspect");
  d.proposals.stride_fraction = c.get_double("detect.stride_fraction");
  d.proposals.validate();
  d.nms_iou = c.get_double("detect.nms_iou");
  if (!(d.nms_iou > 0 && d.nms_iou < 1)) throw ConfigError("detect.nms_iou must lie in (0,1)");
  d.depth = {c.get_double("depth.min"), c.get_double("depth.max")};
  if (!(d.depth.max_m > d.depth.min_m)) throw ConfigError("depth.max must exceed depth.min");
  d.threads = std::max<std::size_t>(1, c.get_size("run.threads"));
  return d;
}

RegimeScript regime_script(const Config& c) {
  if (!c.get("data.script").empty()) return parse_script(c.get("data.script"));
  return alternating_script(c.get_size("data.frames"), c.get_size("data.period"),
                            split_list(c.get("data.regimes")));
}

std::vector<Modality> model_modalities(const Config& c) {
  try {
    return parse_modalities(c.get("model.modalities"));
  } catch (const Error& e) {
    throw ConfigError(std::string("model.modalities: ") + e.what());
  }
}

}  // namespace adafuse

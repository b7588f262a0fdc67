#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adafuse/detection.hpp"
#include "adafuse/synthdata.hpp"
#include "adafuse/training.hpp"

namespace adafuse {

/// Flat section.key=value settings. Every key has a default and unknown
/// keys are rejected.
class Config {
 public:
  Config();

  /// Applies a file of section.key=value lines ('#' comments allowed).
  void load_file(const std::filesystem::path& path);
  /// Applies one "section.key=value" override.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  std::vector<std::size_t> get_sizes(std::string_view key) const;

  /// All keys after defaults, sorted.
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

TrainConfig train_config(const Config& c, Stage stage);
CropConfig crop_config(const Config& c);
DetectConfig detect_config(const Config& c);
RegimeScript regime_script(const Config& c);
std::vector<Modality> model_modalities(const Config& c);

}  // namespace adafuse

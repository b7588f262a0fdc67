#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adafuse/experts.hpp"
#include "adafuse/fusion.hpp"
#include "adafuse/params.hpp"

namespace adafuse {

/// Ordered key=value pairs of a manifest.txt.
class Manifest {
 public:
  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  /// Throws ParseError naming the file when the key is absent.
  const std::string& get(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(const std::filesystem::path& file) const;
  static Manifest read(const std::filesystem::path& file);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string source_;
};

/// Writes `manifest` plus one MDTF file per parameter into `directory`.
/// Adds params= and hash= entries.
void save_params(const std::filesystem::path& directory, const Params& params, Manifest manifest);

/// Inverse of save_params; verifies the stored hash. A missing directory is
/// a DependencyError.
std::pair<Manifest, Params> load_params(const std::filesystem::path& directory);

void save_expert(const std::filesystem::path& directory, const ExpertNet& net);
ExpertNet load_expert(const std::filesystem::path& directory);

/// Channel-fusion network with its modality stacking order.
void save_channel_net(const std::filesystem::path& directory, const ExpertNet& net,
                      const std::vector<Modality>& order);
std::pair<ExpertNet, std::vector<Modality>> load_channel_net(const std::filesystem::path& directory);

/// Gate or late head, recording which experts (and their hashes) it was trained on.
void save_head(const std::filesystem::path& directory, const std::string& kind,
               const TwoLayerHead& head, const std::vector<ExpertNet>& experts);
GatingNet load_gate(const std::filesystem::path& directory, const std::vector<ExpertNet>& experts);
LateFusionHead load_late_head(const std::filesystem::path& directory,
                              const std::vector<ExpertNet>& experts);

/// Standard model layout: experts/<modality>/, gate/, late/, channel/.
std::filesystem::path expert_dir(const std::filesystem::path& model_dir, const Modality& m);

/// Assembles a model from `model_dir`. `modalities` selects the experts
/// (default: those the gate or late head was trained on, else all present).
FusedModel load_fused_model(const std::filesystem::path& model_dir, Scheme scheme,
                            const std::optional<std::vector<Modality>>& modalities = std::nullopt);

}  // namespace adafuse

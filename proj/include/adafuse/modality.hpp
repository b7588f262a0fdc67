#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace adafuse {

enum class ModalityId { rgb = 0, depth = 1, motion = 2 };

inline constexpr std::size_t kModalityCount = 3;

/// One aligned input channel group. Depth reaches the experts jet-colourised,
/// so it has three channels like rgb; motion has one.
struct Modality {
  ModalityId id = ModalityId::rgb;
  std::size_t channels = 3;

  friend bool operator==(const Modality&, const Modality&) = default;
};

Modality modality(ModalityId id);
Modality parse_modality(std::string_view name);
std::string modality_name(ModalityId id);

/// Comma-separated list, e.g. "rgb,depth". Duplicates are rejected.
std::vector<Modality> parse_modalities(std::string_view list);
std::string join_modalities(const std::vector<Modality>& ms, char sep = ',');

}  // namespace adafuse

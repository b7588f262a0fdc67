#include "adafuse/modality.hpp"

#include <algorithm>

#include "adafuse/error.hpp"

namespace adafuse {

Modality modality(ModalityId id) {
  switch (id) {
    case ModalityId::rgb: return {ModalityId::rgb, 3};
    case ModalityId::depth: return {ModalityId::depth, 3};
    case ModalityId::motion: return {ModalityId::motion, 1};
  }
  throw InputError("unknown modality id");
}

Modality parse_modality(std::string_view name) {
  if (name == "rgb") return modality(ModalityId::rgb);
  if (name == "depth") return modality(ModalityId::depth);
  if (name == "motion") return modality(ModalityId::motion);
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

std::string modality_name(ModalityId id) {
  switch (id) {
    case ModalityId::rgb: return "rgb";
    case ModalityId::depth: return "depth";
    case ModalityId::motion: return "motion";
  }
  return "?";
}

std::vector<Modality> parse_modalities(std::string_view list) {
  std::vector<Modality> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    const auto item = list.substr(start, end - start);
    if (item.empty()) throw InputError("empty modality in list '" + std::string(list) + "'");
    const Modality m = parse_modality(item);
    if (std::find(out.begin(), out.end(), m) != out.end()) {
      throw ConfigError("duplicate modality '" + std::string(item) + "'");
    }
    out.push_back(m);
    start = end + 1;
  }
  return out;
}

std::string join_modalities(const std::vector<Modality>& ms, char sep) {
  std::string s;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (i) s += sep;
    s += modality_name(ms[i].id);
  }
  return s;
}

}  // namespace adafuse

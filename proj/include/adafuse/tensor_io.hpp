#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adafuse/tensor.hpp"

namespace adafuse {

// MDTF tensor files: "MDTF", u32 LE rank, rank x u32 LE dims, then
// product(dims) IEEE-754 binary64 LE values. Nothing follows the payload.

std::vector<std::uint8_t> encode_mdtf(const Tensor& t);

/// `source` names the origin in error messages.
Tensor decode_mdtf(const std::vector<std::uint8_t>& bytes,
                   const std::string& source = "<memory>");

void write_mdtf(const std::filesystem::path& path, const Tensor& t);
Tensor read_mdtf(const std::filesystem::path& path);

}  // namespace adafuse

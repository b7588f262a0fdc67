#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adafuse/tensor.hpp"

namespace adafuse {

/// Named, ordered collection of parameter tensors.
///
/// Identifiers are unique. Entries flagged non-trainable are never touched by
/// an optimizer step. Iteration order is insertion order, which is also the
/// order used for hashing and checkpoint manifests.
class Params {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    std::vector<double> velocity;  // momentum buffer, empty until first step
  };

  void add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Entry& entry(std::string_view name);
  const Entry& entry(std::string_view name) const;
  Tensor& at(std::string_view name) { return entry(name).value; }
  const Tensor& at(std::string_view name) const { return entry(name).value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void set_trainable(bool trainable);
  bool any_trainable() const;
  void zero_grads();
  std::size_t parameter_count() const;

  /// FNV-1a 64 over names, shapes and raw value bytes.
  std::uint64_t hash() const;

  /// Values equal bit for bit (names, order, shapes, data).
  bool same_values(const Params& other) const;

 private:
  std::vector<Entry> entries_;
};

std::string hash_hex(std::uint64_t h);

}  // namespace adafuse

#include "adafuse/params.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>

#include "adafuse/error.hpp"

namespace adafuse {

void Params::add(std::string name, Tensor value, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), std::move(value), trainable, {}});
}

bool Params::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::size_t Params::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw InputError("no parameter named '" + std::string(name) + "'");
}

Params::Entry& Params::entry(std::string_view name) { return entries_[index_of(name)]; }
const Params::Entry& Params::entry(std::string_view name) const {
  return entries_[index_of(name)];
}

void Params::set_trainable(bool trainable) {
  for (auto& e : entries_) e.trainable = trainable;
}

bool Params::any_trainable() const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [](const Entry& e) { return e.trainable; });
}

void Params::zero_grads() {
  for (auto& e : entries_) e.value.zero_grad();
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= kFnvPrime;
  }
}

}  // namespace

std::uint64_t Params::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : entries_) {
    fnv_bytes(h, e.name.data(), e.name.size());
    for (auto d : e.value.shape()) {
      const auto d64 = static_cast<std::uint64_t>(d);
      fnv_bytes(h, &d64, sizeof d64);
    }
    for (double v : e.value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      fnv_bytes(h, &bits, sizeof bits);
    }
  }
  return h;
}

bool Params::same_values(const Params& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!(entries_[i].value == other.entries_[i].value)) return false;
  }
  return true;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace adafuse

#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace apnea {

/// 64-bit FNV-1a; stable across platforms, used for config and parameter fingerprints.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      hash_ ^= b;
      hash_ *= 0x100000001b3ull;
    }
  }
  void update(std::string_view s) {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
  }
  template <typename T>
  void update_pod(const T& v) {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(&v), sizeof(T)));
  }

  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

/// Derives an independent stream seed from a base seed and a label (SplitMix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  Fnv1a h;
  h.update_pod(base);
  h.update(label);
  std::uint64_t z = h.value() + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace apnea

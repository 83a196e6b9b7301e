#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>

namespace noisykit {

/// Incremental FNV-1a 64-bit hash. Stable across platforms; used for dataset
/// fingerprints and manifest input hashes, not for security.
class Fnv1a64 {
 public:
  void update(const void* bytes, std::size_t len) noexcept {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }

  template <typename T>
  void update_value(const T& v) noexcept {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(T));
  }

  template <typename T>
  void update_span(std::span<const T> s) noexcept {
    update(s.data(), s.size_bytes());
  }

  std::uint64_t digest() const noexcept { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::span<const char> bytes) noexcept {
  Fnv1a64 h;
  h.update(bytes.data(), bytes.size());
  return h.digest();
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  Fnv1a64 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(buf, static_cast<std::size_t>(in.gcount()));
    if (!in) break;
  }
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace noisykit

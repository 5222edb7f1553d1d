#pragma once

#include <cstdint>
#include <string_view>

namespace mvse {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream seed for (run seed, stream, item).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::string_view item = {}) {
  return mix64(mix64(seed ^ mix64(stream)) ^ hash_string(item));
}

}  // namespace mvse

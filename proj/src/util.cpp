#include "iogvqa/util.hpp"

#include <cstdio>

namespace iog {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h) {
  return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()), h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // splitmix64 finaliser over (seed, stream hash)
  std::uint64_t z = seed ^ fnv1a(stream);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace iog

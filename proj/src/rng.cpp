#include "lotcrs/rng.hpp"

#include "lotcrs/errors.hpp"

namespace lotcrs {

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  return fnv1a64(s.data(), s.size(), seed);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ArgumentError("Rng::index: n must be positive");
  // Rejection sampling: unbiased and deterministic.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose,
                          std::uint64_t index) {
  std::uint64_t h = fnv1a64(purpose);
  h = fnv1a64(&base, sizeof(base), h);
  h = fnv1a64(&index, sizeof(index), h);
  // Guard against the all-zero state mt19937_64 dislikes.
  return h == 0 ? 0x9e3779b97f4a7c15ULL : h;
}

}  // namespace lotcrs

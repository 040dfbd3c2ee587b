#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lotcrs {

// FNV-1a, used for sub-seed derivation and artifact checksums.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Deterministic RNG wrapper. All randomness in the project goes through
// this type so artifacts are byte-identical across reruns.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates, deterministic across platforms.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 eng_;
};

// Derives an independent stream seed from (base seed, purpose tag, index).
// Distinct purposes never share a stream, so disabling one consumer of
// randomness leaves every other stream untouched.
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose,
                          std::uint64_t index = 0);

inline Rng derive_rng(std::uint64_t base, std::string_view purpose,
                      std::uint64_t index = 0) {
  return Rng(derive_seed(base, purpose, index));
}

}  // namespace lotcrs

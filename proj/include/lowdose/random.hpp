#pragma once

#include <cstdint>
#include <random>

namespace lowdose {

/// SplitMix64 finaliser; used only to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for substream `index` of stream `stream` under `master`:
///   splitmix64(splitmix64(master ^ splitmix64(stream)) + index)
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) {
  return splitmix64(splitmix64(master ^ splitmix64(stream)) + index);
}

/// Seedable generator: mt19937_64 with a portable uniform() so event
/// sequences do not depend on the standard library's distributions.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  [[nodiscard]] Rng split(std::uint64_t stream, std::uint64_t index = 0) const {
    return Rng(derive_seed(seed_, stream, index));
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

} // namespace lowdose

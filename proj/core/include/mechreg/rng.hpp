#pragma once

#include <cstdint>
#include <random>

namespace mechreg {

/// Seeded generator used for every random draw in the library.
///
/// The engine is std::mt19937_64; `name()` is written next to the seed in
/// every artifact so runs can be replayed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  static constexpr const char* name() { return "mt19937_64"; }
  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mechreg

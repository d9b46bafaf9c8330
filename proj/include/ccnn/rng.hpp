#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "ccnn/types.hpp"

namespace ccnn {

/// splitmix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of a parent seed.
constexpr Seed derive_seed(Seed parent, std::uint64_t stream) noexcept {
  return mix64(mix64(parent) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// All randomness in the library goes through this generator. The engine is
// std::mt19937_64, whose output sequence is fixed by the standard; the
// distributions below are written out by hand because the std:: ones are
// implementation-defined, and results must be reproducible across toolchains.
class Rng {
public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Unbiased (rejection on the top range).
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Index size) {
    Vector v(size);
    for (Index i = 0; i < size; ++i)
      v(i) = normal();
    return v;
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i)
        m(i, j) = normal();
    return m;
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace ccnn

#pragma once

// Counter-based random numbers. Every draw is addressed by
// (seed, step, draw index), so paths can be regenerated or queried out of
// order and two runs with the same master seed produce identical streams.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace stochstab {

// Philox 4x32-10. Stateless: a 128-bit counter block plus a 64-bit key maps
// to four 32-bit words.
class Philox4x32 {
public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key) noexcept
      : key0_(static_cast<std::uint32_t>(key)),
        key1_(static_cast<std::uint32_t>(key >> 32)) {}

  Block operator()(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                   std::uint32_t c3) const noexcept {
    Block ctr{c0, c1, c2, c3};
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      ctr = bumped(ctr, k0, k1);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return ctr;
  }

private:
  static Block bumped(const Block& in, std::uint32_t k0,
                      std::uint32_t k1) noexcept {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * in[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * in[2];
    return Block{static_cast<std::uint32_t>(p1 >> 32) ^ in[1] ^ k0,
                 static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ in[3] ^ k1,
                 static_cast<std::uint32_t>(p0)};
  }

  std::uint32_t key0_;
  std::uint32_t key1_;
};

inline std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Distinct paths of one Monte Carlo run get decorrelated 64-bit keys.
inline std::uint64_t derive_path_seed(std::uint64_t master_seed,
                                      std::uint64_t path_index) noexcept {
  return splitmix64(master_seed ^ splitmix64(path_index + 0x517CC1B727220A95ull));
}

// Uniform and Gaussian draws addressed by (step, draw). Draws within a step
// are independent, as are draws across steps; no draw depends on query order.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed) noexcept : gen_(seed) {}

  // in (0,1), both endpoints excluded
  double uniform(std::uint64_t step, std::uint32_t draw) const noexcept {
    const auto b = block(step, draw / 2, kUniformTag);
    return to_unit(b[2 * (draw % 2)], b[2 * (draw % 2) + 1]);
  }

  // standard normal via Box-Muller; draws 2k and 2k+1 share one block
  double normal(std::uint64_t step, std::uint32_t draw) const noexcept {
    const auto b = block(step, draw / 2, kNormalTag);
    const double u1 = to_unit(b[0], b[1]);
    const double u2 = to_unit(b[2], b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return (draw % 2 == 0) ? r * std::cos(a) : r * std::sin(a);
  }

private:
  static constexpr std::uint32_t kUniformTag = 0xA11CE5u;
  static constexpr std::uint32_t kNormalTag = 0xB0C5E5u;

  Philox4x32::Block block(std::uint64_t step, std::uint32_t pair,
                          std::uint32_t tag) const noexcept {
    return gen_(static_cast<std::uint32_t>(step),
                static_cast<std::uint32_t>(step >> 32), pair, tag);
  }

  static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t v = (std::uint64_t{hi} << 32) | lo;
    return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32 gen_;
};

// Sequential convenience wrapper for sampling tasks (probe points, region
// sweeps). Deterministic given the seed; not used for SDE increments.
class SampleRng {
public:
  explicit SampleRng(std::uint64_t seed) noexcept : rng_(seed) {}

  double uniform01() { return rng_.uniform(next_++, 0); }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double normal() { return rng_.normal(next_++, 0); }

  // isotropic direction; rejects the (measure-zero) near-null draws
  std::vector<double> unit_vector(int dim) {
    if (dim < 1) throw std::invalid_argument("unit_vector: dim must be >= 1");
    std::vector<double> v(dim);
    for (;;) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) {
        v[i] = normal();
        s += v[i] * v[i];
      }
      if (s > 1e-24) {
        const double inv = 1.0 / std::sqrt(s);
        for (auto& c : v) c *= inv;
        return v;
      }
    }
  }

private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace stochstab

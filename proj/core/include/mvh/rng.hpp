#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mvh {

// Counter-based random numbers (Philox4x32-10). Every draw is a pure
// function of (seed, domain, stream, counter), so simulations are
// reproducible bit for bit regardless of evaluation order or worker count.
//
// Streams are assigned per particle (or per path), counters advance with
// the step index. Two runs built from the same seed and domain share noise,
// which is how the common-random-number couplings are wired.

namespace rng_detail {

std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                        std::uint64_t ctr_hi,
                                        std::uint64_t ctr_lo);

}  // namespace rng_detail

// splitmix64 finalizer; good enough to derive keys from small tags.
std::uint64_t mix64(std::uint64_t x);

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Noise channel tags. Keeping them distinct guarantees that logically
// different sources never reuse a stream even under equal stream ids.
enum class NoiseDomain : std::uint64_t {
  SlowFastSlow = 1,
  SlowFastFast = 2,
  Frozen = 3,
  Decoupled = 4,
  Limit = 5,
  InitialLaw = 6,
  Bootstrap = 7,
  Sliced = 8,
  Probe = 9,
};

class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, NoiseDomain domain)
      : key_(hash_combine(mix64(seed), static_cast<std::uint64_t>(domain))),
        seed_(seed),
        domain_(domain) {}

  // One standard normal, drawn from the (stream, counter) cell.
  double normal(std::uint64_t stream, std::uint64_t counter) const;

  // Fills out[k] with normals at counters base + k.
  void normals(std::uint64_t stream, std::uint64_t base,
               std::span<double> out) const;

  // Uniform on (0, 1].
  double uniform(std::uint64_t stream, std::uint64_t counter) const;

  std::uint64_t seed() const { return seed_; }
  NoiseDomain domain() const { return domain_; }

  // Derives a sub-source; used to carve disjoint ranges for (eps, rep) cells.
  NoiseSource child(std::uint64_t tag) const {
    NoiseSource c = *this;
    c.key_ = hash_combine(key_, tag);
    return c;
  }

 private:
  std::uint64_t key_;
  std::uint64_t seed_;
  NoiseDomain domain_;
};

}  // namespace mvh

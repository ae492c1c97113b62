#include "mvh/rng.hpp"

#include <cmath>

namespace mvh {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace rng_detail {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t& x0, std::uint32_t& x1,
                         std::uint32_t& x2, std::uint32_t& x3,
                         std::uint32_t k0, std::uint32_t k1) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * x0;
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * x2;
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  const std::uint32_t y0 = hi1 ^ x1 ^ k0;
  const std::uint32_t y1 = lo1;
  const std::uint32_t y2 = hi0 ^ x3 ^ k1;
  const std::uint32_t y3 = lo0;
  x0 = y0;
  x1 = y1;
  x2 = y2;
  x3 = y3;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                        std::uint64_t ctr_hi,
                                        std::uint64_t ctr_lo) {
  std::uint32_t x0 = static_cast<std::uint32_t>(ctr_lo);
  std::uint32_t x1 = static_cast<std::uint32_t>(ctr_lo >> 32);
  std::uint32_t x2 = static_cast<std::uint32_t>(ctr_hi);
  std::uint32_t x3 = static_cast<std::uint32_t>(ctr_hi >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int r = 0; r < 10; ++r) {
    philox_round(x0, x1, x2, x3, k0, k1);
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return {x0, x1, x2, x3};
}

}  // namespace rng_detail

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double to_unit_interval(std::uint32_t hi, std::uint32_t lo) {
  // (0, 1]: adding one keeps log() finite.
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits + 1) * 0x1p-64;
}

}  // namespace

double NoiseSource::normal(std::uint64_t stream, std::uint64_t counter) const {
  const auto blk =
      rng_detail::philox4x32(key_, stream, counter >> 1);
  const double u1 = to_unit_interval(blk[0], blk[1]);
  const double u2 = to_unit_interval(blk[2], blk[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  return (counter & 1) ? r * std::sin(kTwoPi * u2) : r * std::cos(kTwoPi * u2);
}

void NoiseSource::normals(std::uint64_t stream, std::uint64_t base,
                          std::span<double> out) const {
  std::size_t k = 0;
  while (k < out.size()) {
    const std::uint64_t counter = base + k;
    const auto blk = rng_detail::philox4x32(key_, stream, counter >> 1);
    const double u1 = to_unit_interval(blk[0], blk[1]);
    const double u2 = to_unit_interval(blk[2], blk[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    if ((counter & 1) == 0) {
      out[k++] = r * std::cos(kTwoPi * u2);
      if (k < out.size()) out[k++] = r * std::sin(kTwoPi * u2);
    } else {
      out[k++] = r * std::sin(kTwoPi * u2);
    }
  }
}

double NoiseSource::uniform(std::uint64_t stream, std::uint64_t counter) const {
  const auto blk = rng_detail::philox4x32(key_, stream, counter);
  return to_unit_interval(blk[0], blk[1]);
}

}  // namespace mvh

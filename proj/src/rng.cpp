#include "darkmix/rng.hpp"

#include <cmath>

namespace darkmix {
namespace philox {
namespace {

constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;
constexpr std::uint32_t kMultA = 0xD2511F53u;
constexpr std::uint32_t kMultB = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                      std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

inline Counter round(const Counter& x, const Key& key) {
  std::uint32_t lo0, hi0, lo1, hi1;
  mul_hi_lo(kMultA, x[0], lo0, hi0);
  mul_hi_lo(kMultB, x[2], lo1, hi1);
  return {hi1 ^ x[1] ^ key[0], lo1, hi0 ^ x[3] ^ key[1], lo0};
}

}  // namespace

Counter block(Counter counter, Key key) {
  for (int i = 0; i < 10; ++i) {
    if (i > 0) {
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    counter = round(counter, key);
  }
  return counter;
}

}  // namespace philox

std::uint64_t RngStream::raw64(std::uint64_t index) const {
  // One block yields two 64-bit words; the counter encodes
  // (stream, block position, domain) so slots never overlap.
  philox::Counter ctr{stream_lo_, stream_hi_,
                      static_cast<std::uint32_t>(index >> 1),
                      domain_ ^ (static_cast<std::uint32_t>(index >> 33) << 16)};
  const philox::Counter out = philox::block(ctr, key_);
  const int half = static_cast<int>(index & 1u) * 2;
  return (static_cast<std::uint64_t>(out[half + 1]) << 32) | out[half];
}

double RngStream::uniform(std::uint64_t index) const {
  // (v >> 11) is 53 bits; +0.5 keeps the result strictly inside (0, 1).
  const std::uint64_t v = raw64(index);
  return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal(std::uint64_t index) const {
  // Box-Muller over a disjoint pair of uniforms per normal. Each normal
  // burns two uniform slots so indices stay independent.
  const double u1 = uniform(2 * index);
  const double u2 = uniform(2 * index + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return radius * std::cos(6.283185307179586476925286766559 * u2);
}

std::uint64_t RngStream::uniform_index(std::uint64_t index,
                                       std::uint64_t bound) const {
  // 53-bit uniform scaled to [0, bound); bias is < 2^-40 for bounds of
  // interest (n <= millions), irrelevant for resampling.
  const double u = uniform(index);
  auto result = static_cast<std::uint64_t>(u * static_cast<double>(bound));
  return result >= bound ? bound - 1 : result;
}

}  // namespace darkmix

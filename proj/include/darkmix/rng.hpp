#pragma once

#include <array>
#include <cstdint>

namespace darkmix {

/// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
///
/// Every random quantity in this project is a pure function of
/// (seed, stream, position), so simulation, initialization and bootstrap
/// resampling are reproducible regardless of how work is scheduled across
/// threads. Streams are cheap: one per pixel, per bootstrap replicate, etc.
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// One 128-bit block for the given counter/key.
Counter block(Counter counter, Key key);

}  // namespace philox

/// Namespacing tag mixed into the counter so distinct uses of the same
/// (seed, stream) pair never collide.
enum class RngDomain : std::uint32_t {
  simulate = 0x5349u,
  bootstrap = 0x424fu,
  init = 0x494eu,
  generic = 0x0u,
};

/// A deterministic substream: draws are indexed, not consumed from hidden
/// state, so any slot can be regenerated independently.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream, RngDomain domain)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)),
        domain_(static_cast<std::uint32_t>(domain)) {}

  /// Uniform double in the open interval (0, 1); 53-bit resolution.
  double uniform(std::uint64_t index) const;

  /// Standard normal via Box-Muller on a pair of uniforms.
  double normal(std::uint64_t index) const;

  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t uniform_index(std::uint64_t index, std::uint64_t bound) const;

 private:
  std::uint64_t raw64(std::uint64_t index) const;

  philox::Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint32_t domain_;
};

/// Sequential adapter over an RngStream for call sites that just want
/// "the next draw". Still deterministic: state is only the position.
class SequentialRng {
 public:
  SequentialRng(std::uint64_t seed, std::uint64_t stream, RngDomain domain)
      : stream_(seed, stream, domain) {}

  double uniform() { return stream_.uniform(pos_++); }
  double normal() { return stream_.normal(pos_++); }
  std::uint64_t uniform_index(std::uint64_t bound) {
    return stream_.uniform_index(pos_++, bound);
  }

 private:
  RngStream stream_;
  std::uint64_t pos_ = 0;
};

}  // namespace darkmix

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "darkmix/rng.hpp"

using namespace darkmix;

TEST_SUITE("rng") {

// Known-answer vectors for Philox4x32-10 from the Random123 distribution.
TEST_CASE("philox known answers") {
  {
    const auto out = philox::block({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);
  }
  {
    const auto out = philox::block(
        {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
        {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);
  }
  {
    const auto out = philox::block(
        {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
        {0xa4093822u, 0x299f31d0u});
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
  }
}

TEST_CASE("uniforms are in the open unit interval and reproducible") {
  const RngStream stream(42, 7, RngDomain::simulate);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = stream.uniform(i);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    CHECK(u == stream.uniform(i));  // pure function of the slot
  }
}

TEST_CASE("streams and domains are decoupled") {
  const RngStream a(1, 0, RngDomain::simulate);
  const RngStream b(1, 1, RngDomain::simulate);
  const RngStream c(1, 0, RngDomain::bootstrap);
  const RngStream d(2, 0, RngDomain::simulate);
  CHECK(a.uniform(0) != b.uniform(0));
  CHECK(a.uniform(0) != c.uniform(0));
  CHECK(a.uniform(0) != d.uniform(0));
}

TEST_CASE("normal draws have roughly standard moments") {
  const RngStream stream(123, 0, RngDomain::generic);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = stream.normal(static_cast<std::uint64_t>(i));
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_index respects bounds") {
  const RngStream stream(9, 3, RngDomain::bootstrap);
  std::vector<int> counts(10, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto idx = stream.uniform_index(i, 10);
    REQUIRE(idx < 10);
    ++counts[static_cast<std::size_t>(idx)];
  }
  for (int c : counts) CHECK(c > 800);
}

}  // TEST_SUITE

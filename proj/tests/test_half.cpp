#include "nmpu/half.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nmpu/util.hpp"

using namespace nmpu;

namespace {

// Independent binary16 rounding reference built from frexp/ldexp integer
// math instead of bit manipulation.
double half_reference(float x) {
  if (std::isnan(x)) return std::nan("");
  if (std::isinf(x) || x == 0.0f) return double(x);
  int e = 0;
  const double m = std::frexp(double(x), &e);  // |m| in [0.5, 1)
  if (e - 1 >= 16) return x > 0 ? INFINITY : -INFINITY;
  int sig_bits = 11;
  if (e - 1 < -14) {  // subnormal range: fewer significand bits
    sig_bits = 11 + (e - 1 + 14);
    if (sig_bits < 0) return x > 0 ? 0.0 : -0.0;
  }
  const double scaled = std::ldexp(m, sig_bits);
  double r = std::nearbyint(scaled);  // round-nearest-even
  double y = std::ldexp(r, e - sig_bits);
  if (std::fabs(y) >= 65520.0) return x > 0 ? INFINITY : -INFINITY;
  return y;
}

TEST(Half, IntegersUpTo2048Exact) {
  for (int i = -2048; i <= 2048; ++i)
    ASSERT_EQ(half::round_to_half(double(i)), double(i)) << i;
}

TEST(Half, KnownValues) {
  EXPECT_EQ(half::round_to_half(1.0009765625), 1.0009765625);  // 1 + 2^-10
  EXPECT_EQ(half::round_to_half(0.1), 0.0999755859375);
  EXPECT_EQ(half::round_to_half(65504.0), 65504.0);  // binary16 max
  EXPECT_TRUE(std::isinf(half::round_to_half(65536.0)));
  EXPECT_EQ(half::round_to_half(5.960464477539063e-08), 5.960464477539063e-08);  // min subnormal
  EXPECT_EQ(half::round_to_half(1e-9), 0.0);
  // 1023 * (1 + 2^-10) = 1023.999..., spacing at 1024 is 0.5 -> rounds up.
  EXPECT_EQ(half::round_to_half(1023.0 * 1.0009765625), 1024.0);
}

TEST(Half, MatchesIndependentReference) {
  Rng rng(31, 0);
  for (int i = 0; i < 200000; ++i) {
    float x;
    if (i % 3 == 0) {
      x = float(rng.next_uniform(-70000.0, 70000.0));
    } else if (i % 3 == 1) {
      x = float(rng.next_uniform(-2.0, 2.0));
    } else {
      x = float(rng.next_uniform(-1e-4, 1e-4));  // deep subnormal territory
    }
    const double got = half::round_to_half(double(x));
    const double want = half_reference(x);
    ASSERT_EQ(got, want) << "x=" << x;
  }
  EXPECT_TRUE(std::isnan(half::round_to_half(std::nan(""))));
  EXPECT_TRUE(std::isinf(half::round_to_half(INFINITY)));
}

TEST(Half, RoundTripAllBitPatterns) {
  // Every finite half converts to float and back unchanged.
  for (uint32_t bits = 0; bits < 0x10000u; ++bits) {
    const uint16_t h = uint16_t(bits);
    if (((h >> 10) & 0x1F) == 0x1F) continue;  // inf/NaN
    const float f = half::half_bits_to_float(h);
    ASSERT_EQ(half::float_to_half_bits(f), h) << bits;
  }
}

}  // namespace

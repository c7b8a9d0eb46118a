#pragma once

// IEEE 754 binary16 conversion with round-nearest-even, used by the
// behavioral half-precision post-processing model. Conversions go through
// float; keep that in mind when reasoning about double-rounding corner
// cases (the behavioral model only ever sees values far from them).

#include <bit>
#include <cstdint>

namespace nmpu::half {

inline uint16_t float_to_half_bits(float f) {
  const uint32_t x = std::bit_cast<uint32_t>(f);
  const uint16_t sign = uint16_t((x >> 16) & 0x8000u);
  const uint32_t exp_f = (x >> 23) & 0xFFu;
  const uint32_t mant = x & 0x7FFFFFu;

  if (exp_f == 0xFFu) {  // inf / NaN
    if (mant == 0) return uint16_t(sign | 0x7C00u);
    return uint16_t(sign | 0x7C00u | 0x200u | (mant >> 13));
  }

  const int exp_h = int(exp_f) - 127 + 15;
  if (exp_h >= 0x1F) return uint16_t(sign | 0x7C00u);  // overflow -> inf

  if (exp_h <= 0) {
    // Subnormal half (or underflow to zero), round-nearest-even.
    if (exp_h < -11) return sign;
    const uint32_t sig = mant | 0x800000u;  // 24-bit significand
    const int shift = 14 - exp_h;           // bits dropped from sig
    uint32_t half = sig >> shift;
    const uint32_t rem = sig & ((1u << shift) - 1u);
    const uint32_t half_point = 1u << (shift - 1);
    if (rem > half_point || (rem == half_point && (half & 1u))) ++half;
    return uint16_t(sign | half);
  }

  // Normal: 23 -> 10 mantissa bits, round-nearest-even. A mantissa carry
  // bumps the exponent, which is still correct (including carry to inf).
  uint32_t half = uint32_t(exp_h << 10) | (mant >> 13);
  const uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return uint16_t(sign | half);
}

inline float half_bits_to_float(uint16_t h) {
  const uint32_t sign = uint32_t(h & 0x8000u) << 16;
  const uint32_t exp = (h >> 10) & 0x1Fu;
  uint32_t mant = h & 0x3FFu;
  uint32_t f;
  if (exp == 0x1Fu) {
    f = sign | 0x7F800000u | (mant << 13);
  } else if (exp == 0) {
    if (mant == 0) {
      f = sign;
    } else {
      int e = 0;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        ++e;
      }
      // subnormal value = mant * 2^-24, normalized exponent is -14 - e
      f = sign | (uint32_t(113 - e) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else {
    f = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(f);
}

// Round a real operand to the nearest representable binary16 value.
inline double round_to_half(double x) {
  return double(half_bits_to_float(float_to_half_bits(float(x))));
}

}  // namespace nmpu::half

#pragma once

// Exact scaled-integer fixed-point algebra.
//
// A value is raw * 2^-frac_bits with raw held in an (int_bits + frac_bits)
// wide field, two's complement when signed. Multiplies and adds widen so no
// information is ever lost; precision is only discarded by the explicit
// MSB-cut and LSB-truncate operations, which mirror what the corresponding
// hardware stages do.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nmpu::fixed {

struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WidthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FixedFormat {
  int int_bits = 0;
  int frac_bits = 0;
  bool is_signed = false;

  int width() const { return int_bits + frac_bits; }

  bool valid() const {
    return int_bits >= 0 && frac_bits >= 0 && width() >= 1 && width() <= 64;
  }

  // Raw ranges. Raw storage is int64, which caps usable unsigned widths at
  // 63 bits; every format in the datapath is far below that.
  int64_t max_raw() const {
    if (is_signed) return width() == 64 ? INT64_MAX : (int64_t(1) << (width() - 1)) - 1;
    if (width() >= 64)
      throw WidthError("unsigned width " + std::to_string(width()) + " exceeds raw storage");
    return (int64_t(1) << width()) - 1;
  }
  int64_t min_raw() const {
    if (!is_signed) return 0;
    return width() == 64 ? INT64_MIN : -(int64_t(1) << (width() - 1));
  }

  double max_value() const { return std::ldexp(double(max_raw()), -frac_bits); }
  double min_value() const { return std::ldexp(double(min_raw()), -frac_bits); }

  bool operator==(const FixedFormat&) const = default;

  std::string to_string() const {
    return std::string(is_signed ? "Qs(" : "Qu(") + std::to_string(int_bits) +
           "," + std::to_string(frac_bits) + ")";
  }
};

inline FixedFormat q_unsigned(int int_bits, int frac_bits) {
  return FixedFormat{int_bits, frac_bits, false};
}
inline FixedFormat q_signed(int int_bits, int frac_bits) {
  return FixedFormat{int_bits, frac_bits, true};
}

struct FixedValue {
  int64_t raw = 0;
  FixedFormat fmt;

  // Exact as long as |raw| < 2^53; all datapath formats satisfy that.
  double value() const { return std::ldexp(double(raw), -fmt.frac_bits); }

  bool operator==(const FixedValue&) const = default;
};

inline bool fits(int64_t raw, const FixedFormat& fmt) {
  return raw >= fmt.min_raw() && raw <= fmt.max_raw();
}

inline FixedValue make_value(int64_t raw, const FixedFormat& fmt) {
  if (!fmt.valid()) throw FormatError("invalid format " + fmt.to_string());
  if (!fits(raw, fmt))
    throw RangeError("raw " + std::to_string(raw) + " does not fit " + fmt.to_string());
  return FixedValue{raw, fmt};
}

enum class RoundMode { NearestEven, HalfUp, Truncate };

inline FixedValue fx_quantize(double x, const FixedFormat& fmt, RoundMode mode) {
  if (!fmt.valid()) throw FormatError("invalid format " + fmt.to_string());
  const double scaled = std::ldexp(x, fmt.frac_bits);  // exact: power-of-two scale
  double r = 0.0;
  switch (mode) {
    case RoundMode::NearestEven: r = std::nearbyint(scaled); break;
    case RoundMode::HalfUp: r = std::floor(scaled + 0.5); break;
    case RoundMode::Truncate: r = std::floor(scaled); break;
  }
  if (!(r >= double(fmt.min_raw()) && r <= double(fmt.max_raw())))
    throw RangeError("value " + std::to_string(x) + " overflows " + fmt.to_string());
  return FixedValue{int64_t(r), fmt};
}

// Widening exact product: int and frac widths add.
inline FixedValue fx_mul(const FixedValue& a, const FixedValue& b) {
  FixedFormat out{a.fmt.int_bits + b.fmt.int_bits, a.fmt.frac_bits + b.fmt.frac_bits,
                  a.fmt.is_signed || b.fmt.is_signed};
  if (out.width() > 64)
    throw WidthError("product width " + std::to_string(out.width()) + " exceeds 64 bits");
  const __int128 p = __int128(a.raw) * __int128(b.raw);
  assert(p >= out.min_raw() && p <= out.max_raw());
  return FixedValue{int64_t(p), out};
}

// Widening exact sum: fractions align to the finer one, one carry bit added.
inline FixedValue fx_add(const FixedValue& a, const FixedValue& b) {
  const bool sgn = a.fmt.is_signed || b.fmt.is_signed;
  // An unsigned format needs one extra integer bit to live in a signed field.
  const int ia = a.fmt.int_bits + ((sgn && !a.fmt.is_signed) ? 1 : 0);
  const int ib = b.fmt.int_bits + ((sgn && !b.fmt.is_signed) ? 1 : 0);
  FixedFormat out{std::max(ia, ib) + 1, std::max(a.fmt.frac_bits, b.fmt.frac_bits), sgn};
  if (out.width() > 64)
    throw WidthError("sum width " + std::to_string(out.width()) + " exceeds 64 bits");
  const __int128 ra = __int128(a.raw) << (out.frac_bits - a.fmt.frac_bits);
  const __int128 rb = __int128(b.raw) << (out.frac_bits - b.fmt.frac_bits);
  const __int128 s = ra + rb;
  assert(s >= out.min_raw() && s <= out.max_raw());
  return FixedValue{int64_t(s), out};
}

// Exact negation; unsigned operands widen into a signed format.
inline FixedValue fx_neg(const FixedValue& a) {
  FixedFormat out{a.fmt.int_bits + 1, a.fmt.frac_bits, true};
  if (out.width() > 64) throw WidthError("negation widens past 64 bits");
  return FixedValue{-a.raw, out};
}

inline FixedValue fx_sub(const FixedValue& a, const FixedValue& b) {
  return fx_add(a, fx_neg(b));
}

// Exact division by 2^k expressed as a binary-point move. The raw bits do
// not change, so nothing is lost at this stage.
inline FixedValue fx_shift_right(const FixedValue& a, int k) {
  assert(k >= 0 && k <= 3);
  FixedFormat out = a.fmt;
  out.frac_bits += k;
  if (out.width() > 64) throw WidthError("shift widens past 64 bits");
  return FixedValue{a.raw, out};
}

enum class CutPolicy { Saturate, Assert };

struct CutResult {
  FixedValue value;
  bool overflow = false;
};

// Drop n MSBs. Values that no longer fit either clamp (with the overflow
// flag raised) or raise, depending on policy.
inline CutResult fx_cut_msb(const FixedValue& a, int n, CutPolicy policy) {
  assert(n >= 0 && n <= a.fmt.int_bits);
  FixedFormat out = a.fmt;
  out.int_bits -= n;
  if (!out.valid()) throw FormatError("MSB cut leaves empty format");
  if (fits(a.raw, out)) return CutResult{FixedValue{a.raw, out}, false};
  if (policy == CutPolicy::Assert)
    throw OverflowError("value " + std::to_string(a.value()) + " overflows " + out.to_string());
  const int64_t clamped = a.raw > out.max_raw() ? out.max_raw() : out.min_raw();
  return CutResult{FixedValue{clamped, out}, true};
}

// Discard all bits below 2^keep_weight_exp, toward -inf (arithmetic shift).
inline FixedValue fx_trunc_lsb(const FixedValue& a, int keep_weight_exp) {
  assert(keep_weight_exp <= 0 && -keep_weight_exp <= a.fmt.frac_bits);
  const int new_frac = -keep_weight_exp;
  const int drop = a.fmt.frac_bits - new_frac;
  FixedFormat out = a.fmt;
  out.frac_bits = new_frac;
  return FixedValue{a.raw >> drop, out};
}

// Textual form used in debug dumps and test vectors, e.g. "Qu(1,7):150".
inline std::string to_string(const FixedValue& v) {
  return v.fmt.to_string() + ":" + std::to_string(v.raw);
}

inline FixedValue parse_value(const std::string& text) {
  char s = 0;
  int ib = 0, fb = 0;
  long long raw = 0;
  if (std::sscanf(text.c_str(), "Q%c(%d,%d):%lld", &s, &ib, &fb, &raw) != 4 ||
      (s != 'u' && s != 's'))
    throw FormatError("cannot parse fixed value '" + text + "'");
  return make_value(raw, FixedFormat{ib, fb, s == 's'});
}

}  // namespace nmpu::fixed

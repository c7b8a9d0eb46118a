#include "nmpu/fixedpoint.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "support/dyadic.hpp"

using namespace nmpu::fixed;
using oracle::Dyadic;

namespace {

const FixedFormat kQ17u = q_unsigned(1, 7);
const FixedFormat kQ71s = q_signed(7, 1);

TEST(FixedFormat, RangesAndValidity) {
  EXPECT_EQ(kQ17u.max_raw(), 255);
  EXPECT_EQ(kQ17u.min_raw(), 0);
  EXPECT_DOUBLE_EQ(kQ17u.max_value(), 2.0 - 1.0 / 128.0);
  EXPECT_EQ(kQ71s.max_raw(), 127);
  EXPECT_EQ(kQ71s.min_raw(), -128);
  EXPECT_DOUBLE_EQ(kQ71s.min_value(), -64.0);
  EXPECT_FALSE((FixedFormat{0, 0, false}.valid()));
  EXPECT_TRUE((FixedFormat{0, 8, true}.valid()));
  EXPECT_FALSE((FixedFormat{60, 10, false}.valid()));
}

TEST(Quantize, ScaleBoundsRoundHalfUp) {
  // The two extreme correction factors land on raws 150 and 113.
  const auto hi = fx_quantize(1.17, kQ17u, RoundMode::HalfUp);
  EXPECT_EQ(hi.raw, 150);
  EXPECT_DOUBLE_EQ(hi.value(), 1.171875);
  const auto lo = fx_quantize(0.88, kQ17u, RoundMode::HalfUp);
  EXPECT_EQ(lo.raw, 113);
  EXPECT_DOUBLE_EQ(lo.value(), 0.8828125);
}

TEST(Quantize, ZeroAndErrors) {
  for (auto mode : {RoundMode::NearestEven, RoundMode::HalfUp, RoundMode::Truncate}) {
    EXPECT_EQ(fx_quantize(0.0, kQ17u, mode).raw, 0);
    EXPECT_EQ(fx_quantize(0.0, kQ71s, mode).raw, 0);
  }
  EXPECT_THROW(fx_quantize(2.0, kQ17u, RoundMode::HalfUp), RangeError);
  EXPECT_THROW(fx_quantize(-0.5, kQ17u, RoundMode::HalfUp), RangeError);
  EXPECT_THROW(fx_quantize(64.0, kQ71s, RoundMode::HalfUp), RangeError);
}

TEST(Quantize, ErrorBounds) {
  // Rounding keeps |err| <= half ULP, truncation <= one ULP.
  for (int i = 0; i < 2000; ++i) {
    const double x = -60.0 + 0.0613 * i;
    const auto r = fx_quantize(x, q_signed(8, 6), RoundMode::HalfUp);
    EXPECT_LE(std::fabs(r.value() - x), std::ldexp(1.0, -7) + 1e-12);
    const auto t = fx_quantize(x, q_signed(8, 6), RoundMode::Truncate);
    EXPECT_LE(x - t.value(), std::ldexp(1.0, -6));
    EXPECT_GE(x - t.value(), 0.0);
  }
}

TEST(Mul, SpecExamples) {
  const auto in = make_value(1023, q_unsigned(10, 0));
  const auto scale = make_value(150, kQ17u);
  const auto prod = fx_mul(in, scale);
  EXPECT_EQ(prod.fmt, q_unsigned(11, 7));
  EXPECT_DOUBLE_EQ(prod.value(), 1198.828125);

  const auto one = make_value(128, kQ17u);
  const auto same = fx_mul(in, one);
  EXPECT_DOUBLE_EQ(same.value(), 1023.0);

  EXPECT_DOUBLE_EQ(fx_mul(make_value(0, q_unsigned(10, 0)), scale).value(), 0.0);
}

TEST(Add, SpecExamples) {
  const auto a = make_value(469, q_unsigned(8, 2));  // 117.25
  const auto b = make_value(-1, kQ71s);              // -0.5
  const auto sum = fx_add(a, b);
  EXPECT_TRUE(sum.fmt.is_signed);
  EXPECT_DOUBLE_EQ(sum.value(), 116.75);

  const auto zero = make_value(0, kQ71s);
  EXPECT_DOUBLE_EQ(fx_add(a, zero).value(), a.value());

  const auto p = make_value(200, q_signed(8, 1));   // 100.0
  const auto n = make_value(-200, q_signed(8, 1));  // -100.0
  EXPECT_DOUBLE_EQ(fx_add(p, n).value(), 0.0);
}

TEST(ShiftRight, SpecExamples) {
  const auto v = make_value(30000, q_unsigned(11, 7));  // 234.375
  EXPECT_DOUBLE_EQ(fx_shift_right(v, 1).value(), 117.1875);
  EXPECT_DOUBLE_EQ(fx_shift_right(v, 0).value(), v.value());
  const auto one = make_value(128, kQ17u);
  EXPECT_DOUBLE_EQ(fx_shift_right(one, 3).value(), 0.125);
}

TEST(CutMsb, SaturateAndAssert) {
  const auto a = make_value(int64_t(117.1875 * 1024), q_signed(11, 10));
  const auto cut = fx_cut_msb(a, 3, CutPolicy::Saturate);
  EXPECT_EQ(cut.value.fmt, q_signed(8, 10));
  EXPECT_DOUBLE_EQ(cut.value.value(), 117.1875);
  EXPECT_FALSE(cut.overflow);

  const auto big = make_value(int64_t(200) << 10, q_signed(11, 10));
  const auto clamped = fx_cut_msb(big, 4, CutPolicy::Saturate);
  EXPECT_DOUBLE_EQ(clamped.value.value(), 63.9990234375);
  EXPECT_TRUE(clamped.overflow);
  EXPECT_THROW(fx_cut_msb(big, 4, CutPolicy::Assert), OverflowError);

  const auto zero = make_value(0, q_signed(11, 10));
  const auto zcut = fx_cut_msb(zero, 5, CutPolicy::Assert);
  EXPECT_EQ(zcut.value.raw, 0);
  EXPECT_FALSE(zcut.overflow);
}

TEST(CutMsb, NegativeSaturatesToMin) {
  const auto neg = make_value(-(int64_t(90) << 10), q_signed(11, 10));
  const auto cut = fx_cut_msb(neg, 4, CutPolicy::Saturate);
  EXPECT_DOUBLE_EQ(cut.value.value(), -64.0);
  EXPECT_TRUE(cut.overflow);
}

TEST(TruncLsb, SpecExamples) {
  const auto v = make_value(int64_t(117.1875 * 1024), q_signed(11, 10));
  const auto t = fx_trunc_lsb(v, -5);
  EXPECT_EQ(t.fmt.frac_bits, 5);
  EXPECT_DOUBLE_EQ(t.value(), 117.1875);  // bits below 2^-5 were zero

  const auto tiny = make_value(16, q_unsigned(1, 10));  // 2^-6
  EXPECT_DOUBLE_EQ(fx_trunc_lsb(tiny, -5).value(), 0.0);

  const auto whole = make_value(int64_t(42) << 10, q_signed(11, 10));
  EXPECT_DOUBLE_EQ(fx_trunc_lsb(whole, -5).value(), 42.0);
}

// Round trip: truncating re-quantization of a representable value is exact.
TEST(Properties, QuantizeRoundTripExhaustive) {
  const std::vector<FixedFormat> fmts = {
      q_unsigned(6, 6), q_signed(5, 7), q_unsigned(12, 0), q_signed(0, 12),
      q_unsigned(1, 7), q_signed(7, 1)};
  for (const auto& fmt : fmts) {
    for (int64_t raw = fmt.min_raw(); raw <= fmt.max_raw(); ++raw) {
      const auto v = make_value(raw, fmt);
      const auto back = fx_quantize(v.value(), fmt, RoundMode::Truncate);
      ASSERT_EQ(back.raw, raw) << fmt.to_string();
    }
  }
}

// Exhaustive exactness of mul/add/shift against the dyadic oracle for
// operands of width <= 8.
TEST(Properties, ArithmeticExactVsRationalOracle) {
  const std::vector<FixedFormat> fmts = {q_unsigned(4, 4), q_signed(3, 5),
                                         q_unsigned(8, 0), q_signed(1, 6)};
  for (const auto& fa : fmts) {
    for (const auto& fb : fmts) {
      for (int64_t ra = fa.min_raw(); ra <= fa.max_raw(); ra += 3) {
        for (int64_t rb = fb.min_raw(); rb <= fb.max_raw(); rb += 5) {
          const auto a = make_value(ra, fa);
          const auto b = make_value(rb, fb);
          const Dyadic da = Dyadic::from_raw(ra, fa.frac_bits);
          const Dyadic db = Dyadic::from_raw(rb, fb.frac_bits);

          const auto m = fx_mul(a, b);
          ASSERT_TRUE(oracle::equal(Dyadic::from_raw(m.raw, m.fmt.frac_bits),
                                    oracle::mul(da, db)));
          const auto s = fx_add(a, b);
          ASSERT_TRUE(oracle::equal(Dyadic::from_raw(s.raw, s.fmt.frac_bits),
                                    oracle::add(da, db)));
          const auto d = fx_sub(a, b);
          ASSERT_TRUE(oracle::equal(Dyadic::from_raw(d.raw, d.fmt.frac_bits),
                                    oracle::sub(da, db)));
          const auto sh = fx_shift_right(a, int(rb & 3));
          ASSERT_TRUE(oracle::equal(Dyadic::from_raw(sh.raw, sh.fmt.frac_bits),
                                    oracle::shift_right(da, int(rb & 3))));
        }
      }
    }
  }
}

// Saturating MSB cut never changes a value that fits, and flags iff clamped.
TEST(Properties, CutMsbExhaustive) {
  const auto fmt = q_signed(6, 3);
  for (int64_t raw = fmt.min_raw(); raw <= fmt.max_raw(); ++raw) {
    const auto v = make_value(raw, fmt);
    for (int n = 0; n <= 4; ++n) {
      const auto cut = fx_cut_msb(v, n, CutPolicy::Saturate);
      const bool fits_narrow = fits(raw, cut.value.fmt);
      EXPECT_EQ(cut.overflow, !fits_narrow);
      if (fits_narrow) {
        EXPECT_EQ(cut.value.raw, raw);
      } else {
        EXPECT_TRUE(cut.value.raw == cut.value.fmt.max_raw() ||
                    cut.value.raw == cut.value.fmt.min_raw());
      }
    }
  }
}

// trunc_lsb(a, w) <= a and a - trunc_lsb(a, w) < w.
TEST(Properties, TruncLsbExhaustive) {
  const auto fmt = q_signed(4, 6);
  for (int64_t raw = fmt.min_raw(); raw <= fmt.max_raw(); ++raw) {
    const auto v = make_value(raw, fmt);
    for (int keep = -6; keep <= 0; ++keep) {
      const auto t = fx_trunc_lsb(v, keep);
      const Dyadic dv = Dyadic::from_raw(raw, 6);
      const Dyadic dt = Dyadic::from_raw(t.raw, t.fmt.frac_bits);
      ASSERT_LE(oracle::cmp(dt, dv), 0);
      ASSERT_LT(oracle::cmp(oracle::sub(dv, dt), Dyadic{1, keep}), 0);
    }
  }
}

TEST(Text, FormatAndParse) {
  const auto v = make_value(150, kQ17u);
  EXPECT_EQ(to_string(v), "Qu(1,7):150");
  EXPECT_EQ(parse_value("Qu(1,7):150"), v);
  const auto w = make_value(-7, kQ71s);
  EXPECT_EQ(to_string(w), "Qs(7,1):-7");
  EXPECT_EQ(parse_value(to_string(w)), w);
  EXPECT_THROW(parse_value("Qx(1,7):1"), FormatError);
  EXPECT_THROW(parse_value("Qu(1,7):900"), RangeError);
}

TEST(Widths, MulAndAddOverflowDetection) {
  const auto wide = make_value(1, q_unsigned(40, 0));
  EXPECT_THROW(fx_mul(wide, wide), WidthError);
  EXPECT_NO_THROW(fx_mul(wide, make_value(1, q_unsigned(20, 0))));
}

}  // namespace

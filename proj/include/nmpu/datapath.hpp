#pragma once

// Bit-exact model of the dual-branch fixed-point post-processing unit.
//
// Per branch: 10-bit unsigned input times a Qu(1,7) scale, right shift by
// 0..3 (binary-point move), cut of the 3 unused MSBs, truncation of weights
// below 2^-5, then the first cut/round stage down to 2^-2. The branch
// difference plus a Qs(7,1) offset feeds the second cut/round stage, which
// produces the integer that is optionally ReLU'd and saturated to 8-bit
// signed.
//
// Conventions (these pin down behavior the RTL would otherwise leave open):
//   * "cut" on signed values is floor, i.e. two's-complement truncation;
//   * "round" adds one half LSB and floors, so negative halves round
//     toward +inf (-3.5 -> -3). The config dump records this.
//   * ReLU applies to the second-stage integer, before output saturation.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "fixedpoint.hpp"

namespace nmpu::datapath {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First cut/round stage: drop the bits at 2^-3..2^-5. G is the guard bit
// at 2^-2 (LSB of the kept part), R the bits that can trigger rounding.
enum class FirstStageMethod {
  M1,  // x.xx|Rxx  round on the 2^-3 bit, no guard
  M2,  // x.xG|RRx  guard 1 -> cut, else round on 2^-3 or 2^-4
  M3,  // x.xG|Rxx  guard 1 -> cut, else round on 2^-3
  M4,  // x.xG|RRR  guard 1 -> cut, else round on 2^-3, 2^-4 or 2^-5
  M5,  // x.xx|xxx  pure cut
};

// Second cut/round stage: remove the remaining fraction.
enum class SecondStageMethod {
  S1,  // cut both signs
  S2,  // round positive, cut negative
  S3,  // round both signs
};

inline const char* to_string(FirstStageMethod m) {
  switch (m) {
    case FirstStageMethod::M1: return "M1";
    case FirstStageMethod::M2: return "M2";
    case FirstStageMethod::M3: return "M3";
    case FirstStageMethod::M4: return "M4";
    case FirstStageMethod::M5: return "M5";
  }
  return "?";
}

inline const char* to_string(SecondStageMethod m) {
  switch (m) {
    case SecondStageMethod::S1: return "S1";
    case SecondStageMethod::S2: return "S2";
    case SecondStageMethod::S3: return "S3";
  }
  return "?";
}

inline std::optional<FirstStageMethod> parse_first_stage(const std::string& s) {
  if (s == "M1") return FirstStageMethod::M1;
  if (s == "M2") return FirstStageMethod::M2;
  if (s == "M3") return FirstStageMethod::M3;
  if (s == "M4") return FirstStageMethod::M4;
  if (s == "M5") return FirstStageMethod::M5;
  return std::nullopt;
}

inline std::optional<SecondStageMethod> parse_second_stage(const std::string& s) {
  if (s == "S1") return SecondStageMethod::S1;
  if (s == "S2") return SecondStageMethod::S2;
  if (s == "S3") return SecondStageMethod::S3;
  return std::nullopt;
}

inline const fixed::FixedFormat kScaleFormat = fixed::q_unsigned(1, 7);
inline const fixed::FixedFormat kOffsetFormat = fixed::q_signed(7, 1);
inline const fixed::FixedFormat kInputFormat = fixed::q_unsigned(10, 0);

struct NmpuConfig {
  fixed::FixedValue scale_p;  // Qu(1,7)
  fixed::FixedValue scale_n;  // Qu(1,7)
  int shift = 0;              // 0..3, 2-bit field
  fixed::FixedValue offset;   // Qs(7,1)
  FirstStageMethod first_stage = FirstStageMethod::M5;
  SecondStageMethod second_stage = SecondStageMethod::S1;
  bool relu_enabled = true;
  fixed::CutPolicy msb_cut_policy = fixed::CutPolicy::Saturate;
};

inline NmpuConfig make_config(int64_t scale_p_raw, int64_t scale_n_raw, int shift,
                              int64_t offset_raw, FirstStageMethod fs,
                              SecondStageMethod ss, bool relu,
                              fixed::CutPolicy policy = fixed::CutPolicy::Saturate) {
  if (shift < 0 || shift > 3)
    throw fixed::RangeError("shift " + std::to_string(shift) + " not in 0..3");
  NmpuConfig cfg;
  cfg.scale_p = fixed::make_value(scale_p_raw, kScaleFormat);
  cfg.scale_n = fixed::make_value(scale_n_raw, kScaleFormat);
  cfg.shift = shift;
  cfg.offset = fixed::make_value(offset_raw, kOffsetFormat);
  cfg.first_stage = fs;
  cfg.second_stage = ss;
  cfg.relu_enabled = relu;
  cfg.msb_cut_policy = policy;
  return cfg;
}

struct NmpuOutput {
  int value = 0;  // 8-bit signed range
  bool overflow = false;
};

// First cut/round stage. Input must carry exactly 5 fractional bits and be
// non-negative (branch values are products of unsigned operands). Output
// keeps weights down to 2^-2; the format gains one integer bit because M1's
// round can carry past the binary point.
inline fixed::FixedValue first_stage_round(const fixed::FixedValue& v,
                                           FirstStageMethod method) {
  if (v.fmt.frac_bits != 5)
    throw fixed::FormatError("first stage expects 5 fractional bits, got " +
                             std::to_string(v.fmt.frac_bits));
  assert(v.raw >= 0);
  const bool guard = (v.raw >> 3) & 1;  // 2^-2
  const bool r3 = (v.raw >> 2) & 1;     // 2^-3
  const bool r4 = (v.raw >> 1) & 1;     // 2^-4
  const bool r5 = v.raw & 1;            // 2^-5
  bool round_up = false;
  switch (method) {
    case FirstStageMethod::M1: round_up = r3; break;
    case FirstStageMethod::M2: round_up = !guard && (r3 || r4); break;
    case FirstStageMethod::M3: round_up = !guard && r3; break;
    case FirstStageMethod::M4: round_up = !guard && (r3 || r4 || r5); break;
    case FirstStageMethod::M5: round_up = false; break;
  }
  fixed::FixedFormat out{v.fmt.int_bits + 1, 2, v.fmt.is_signed};
  return fixed::FixedValue{(v.raw >> 3) + (round_up ? 1 : 0), out};
}

// Second cut/round stage: returns the integer part. cut = floor; round =
// add one half LSB then floor (ties toward +inf).
inline int64_t second_stage_round(const fixed::FixedValue& v,
                                  SecondStageMethod method) {
  const int f = v.fmt.frac_bits;
  assert(f >= 1);
  const int64_t floor_val = v.raw >> f;
  const int64_t round_val = (v.raw + (int64_t(1) << (f - 1))) >> f;
  switch (method) {
    case SecondStageMethod::S1: return floor_val;
    case SecondStageMethod::S2: return v.raw >= 0 ? round_val : floor_val;
    case SecondStageMethod::S3: return round_val;
  }
  return floor_val;
}

namespace detail {

struct BranchResult {
  fixed::FixedValue rounded;  // Qu(9,2)
  bool overflow = false;
};

inline BranchResult run_branch(int input, const fixed::FixedValue& scale, int shift,
                               FirstStageMethod method, fixed::CutPolicy policy) {
  const auto in = fixed::make_value(input, kInputFormat);
  const auto prod = fixed::fx_mul(in, scale);                  // Qu(11,7)
  const auto shifted = fixed::fx_shift_right(prod, shift);     // Qu(11,7+s)
  const auto cut = fixed::fx_cut_msb(shifted, 3, policy);      // Qu(8,7+s)
  const auto trunc = fixed::fx_trunc_lsb(cut.value, -5);       // Qu(8,5)
  return BranchResult{first_stage_round(trunc, method), cut.overflow};
}

}  // namespace detail

inline NmpuOutput nmpu_process(int in_p, int in_n, const NmpuConfig& cfg) {
  assert(in_p >= 0 && in_p <= 1023 && in_n >= 0 && in_n <= 1023);
  const auto bp = detail::run_branch(in_p, cfg.scale_p, cfg.shift, cfg.first_stage,
                                     cfg.msb_cut_policy);
  const auto bn = detail::run_branch(in_n, cfg.scale_n, cfg.shift, cfg.first_stage,
                                     cfg.msb_cut_policy);
  const auto diff = fixed::fx_sub(bp.rounded, bn.rounded);  // Qs(11,2)
  const auto sum = fixed::fx_add(diff, cfg.offset);         // Qs(12,2)
  int64_t out = second_stage_round(sum, cfg.second_stage);
  if (cfg.relu_enabled && out < 0) out = 0;
  bool saturated = false;
  if (out > 127) {
    out = 127;
    saturated = true;
  } else if (out < -128) {
    out = -128;
    saturated = true;
  }
  return NmpuOutput{int(out), bp.overflow || bn.overflow || saturated};
}

// High-precision reference of the same transfer function, the software
// baseline the hardware path is judged against. Scales are the effective
// per-branch factors (shift already folded in).
struct RealConfig {
  double scale_p = 1.0;
  double scale_n = 1.0;
  double offset = 0.0;
  bool relu = true;
};

inline double nmpu_reference(int in_p, int in_n, const RealConfig& cfg) {
  const double v = double(in_p) * cfg.scale_p - double(in_n) * cfg.scale_n + cfg.offset;
  return cfg.relu && v < 0.0 ? 0.0 : v;
}

// Batch-norm folding: absorb BN(x) = gamma * (x - mean) / sqrt(var + eps) + beta
// into an existing affine (scale, offset) pair so that applying the folded
// pair equals affine-then-BN.
struct AffinePair {
  double scale = 1.0;
  double offset = 0.0;
};

struct BnParams {
  double gamma = 1.0;
  double beta = 0.0;
  double mean = 0.0;
  double var = 1.0;
  double eps = 0.0;
};

inline AffinePair fold_bn(const AffinePair& affine, const BnParams& bn) {
  const double denom = bn.var + bn.eps;
  if (!(denom > 0.0)) throw DomainError("var + eps must be positive");
  const double inv = bn.gamma / std::sqrt(denom);
  return AffinePair{affine.scale * inv, (affine.offset - bn.mean) * inv + bn.beta};
}

// Decompose a real scale/offset pair into the register values: Qu(1,7)
// scale mantissa, 2-bit right shift and Qs(7,1) offset. The shift is the
// largest one whose scaled mantissa still quantizes into Qu(1,7), which
// maximizes retained precision.
struct QuantizedParams {
  fixed::FixedValue scale_fx;  // Qu(1,7)
  int shift = 0;
  fixed::FixedValue offset_fx;  // Qs(7,1)

  double effective_scale() const {
    return std::ldexp(scale_fx.value(), -shift);
  }
};

namespace detail {

inline int largest_valid_shift(double scale) {
  for (int k = 3; k >= 0; --k) {
    const double raw = std::floor(std::ldexp(scale, k + 7) + 0.5);
    if (raw <= 255.0) return k;
  }
  return -1;
}

}  // namespace detail

inline QuantizedParams quantize_params(double scale, double offset) {
  if (!(scale >= 0.0)) throw fixed::RangeError("scale must be non-negative");
  const int k = detail::largest_valid_shift(scale);
  if (k < 0)
    throw fixed::RangeError("scale " + std::to_string(scale) + " not representable");
  QuantizedParams qp;
  qp.shift = k;
  qp.scale_fx = fixed::fx_quantize(std::ldexp(scale, k), kScaleFormat,
                                   fixed::RoundMode::HalfUp);
  qp.offset_fx = fixed::fx_quantize(offset, kOffsetFormat, fixed::RoundMode::HalfUp);
  return qp;
}

// Key/value config document, one "key=value" per line. The dump also spells
// out the negative-value rounding convention so downstream consumers do not
// have to guess it.
inline std::string dump_config(const NmpuConfig& cfg) {
  std::ostringstream os;
  os << "scale_p_raw=" << cfg.scale_p.raw << "\n";
  os << "scale_n_raw=" << cfg.scale_n.raw << "\n";
  os << "shift=" << cfg.shift << "\n";
  os << "offset_raw=" << cfg.offset.raw << "\n";
  os << "first_stage=" << to_string(cfg.first_stage) << "\n";
  os << "second_stage=" << to_string(cfg.second_stage) << "\n";
  os << "relu=" << (cfg.relu_enabled ? 1 : 0) << "\n";
  os << "msb_cut_policy="
     << (cfg.msb_cut_policy == fixed::CutPolicy::Saturate ? "saturate" : "assert") << "\n";
  os << "negative_round=half-up-toward-plus-inf\n";
  return os.str();
}

inline NmpuConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fixed::FormatError("bad config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw fixed::FormatError("config missing key: " + key);
    return it->second;
  };
  const auto fs = parse_first_stage(need("first_stage"));
  const auto ss = parse_second_stage(need("second_stage"));
  if (!fs || !ss) throw fixed::FormatError("unknown stage method in config");
  auto policy = fixed::CutPolicy::Saturate;
  if (auto it = kv.find("msb_cut_policy"); it != kv.end() && it->second == "assert")
    policy = fixed::CutPolicy::Assert;
  return make_config(std::stoll(need("scale_p_raw")), std::stoll(need("scale_n_raw")),
                     std::stoi(need("shift")), std::stoll(need("offset_raw")), *fs, *ss,
                     std::stoi(need("relu")) != 0, policy);
}

}  // namespace nmpu::datapath

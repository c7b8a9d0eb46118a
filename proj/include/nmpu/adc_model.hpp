#pragma once

// Synthetic population of nonlinear ADC transfer curves with per-converter
// gain/offset/nonlinearity variation, least-squares affine calibration onto
// the population mean, and coefficient-of-variation statistics before and
// after correction (with real or register-quantized parameters).
//
// The curve family is a stand-in for measured converter data: a cubic
// perturbation of the linear ramp, per-ADC gain spread targeting the given
// population CV, a couple of counts of offset spread, and a mild per-ADC
// nonlinearity spread so that affine correction leaves a realistic residual.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "datapath.hpp"
#include "util.hpp"

#include "json.hpp"

namespace nmpu::adc {

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularFit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kCurveSamples = 257;  // levels k/256 for k = 0..256

inline double level_at(int index) { return double(index) / double(kCurveSamples - 1); }

struct AdcCurve {
  std::vector<int> counts;  // monotone, one per level, in [0, 1023]
  double gain_jitter = 0.0;
  double offset_jitter = 0.0;
  double nonlinearity = 0.0;
};

struct AffineParams {
  double scale_aff = 1.0;
  double offset_aff = 0.0;
  datapath::QuantizedParams quantized;
};

struct CvLevel {
  double level = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double cv = 0.0;
};

struct CvProfile {
  std::vector<CvLevel> levels;
  double aggregate_cv = 0.0;  // mean of per-level cv where mean count >= 32
  int levels_used = 0;
};

// Base transfer curve: linear ramp with a cubic bow.
inline double base_curve(double x, double nonlinearity) {
  return 1023.0 * (x + nonlinearity * x * (1.0 - x) * (x - 0.5));
}

inline std::vector<AdcCurve> gen_adc_population(int n, double cv_target,
                                                double nonlinearity, uint64_t seed) {
  if (n < 2) throw ParameterError("population needs at least 2 ADCs");
  if (!(cv_target >= 0.0 && cv_target <= 0.2))
    throw ParameterError("cv_target must be in [0, 0.2]");
  if (!(nonlinearity >= 0.0 && nonlinearity <= 1.0))
    throw ParameterError("nonlinearity must be in [0, 1]");

  std::vector<AdcCurve> pop(n);
  parallel_for(size_t(n), [&](size_t i) {
    Rng rng(seed, i);  // one stream per ADC
    AdcCurve c;
    // Clipping a normal at 2 sigma shrinks its std to 0.88 sigma; the draw
    // compensates so the population CV lands on cv_target. Nonlinearity
    // spread scales with the same variation knob (zero cv_target leaves
    // only offset jitter).
    c.gain_jitter = (cv_target / 0.88) * rng.next_normal_clipped(2.0);
    c.offset_jitter = 2.0 * rng.next_normal();
    c.nonlinearity = nonlinearity * (1.0 + 1.7 * cv_target * rng.next_normal_clipped(2.0));
    c.counts.resize(kCurveSamples);
    int prev = 0;
    for (int k = 0; k < kCurveSamples; ++k) {
      const double ideal = base_curve(level_at(k), c.nonlinearity);
      const double v = ideal * (1.0 + c.gain_jitter) + c.offset_jitter;
      int count = int(std::clamp(std::floor(v + 0.5), 0.0, 1023.0));
      if (count < prev) count = prev;  // enforce monotonicity
      c.counts[k] = count;
      prev = count;
    }
    pop[i] = c;
  });
  return pop;
}

inline std::vector<double> mean_curve(const std::vector<AdcCurve>& pop) {
  std::vector<double> m(kCurveSamples, 0.0);
  for (const auto& c : pop)
    for (int k = 0; k < kCurveSamples; ++k) m[k] += c.counts[k];
  for (auto& v : m) v /= double(pop.size());
  return m;
}

// Per-ADC least-squares fit of scale/offset mapping its counts onto the
// population mean curve, plus the register quantization of that pair.
// The fit runs over the linear operating window, away from both code
// rails, so converters that clip near full scale do not skew it.
inline std::vector<AffineParams> calibrate_affine(const std::vector<AdcCurve>& pop) {
  if (pop.size() < 2) throw ParameterError("calibration needs at least 2 curves");
  const auto m = mean_curve(pop);
  std::vector<int> window;
  for (int k = 0; k < kCurveSamples; ++k)
    if (m[k] >= 8.0 && m[k] <= 972.0) window.push_back(k);
  if (window.size() < 2) {
    window.clear();
    for (int k = 0; k < kCurveSamples; ++k) window.push_back(k);
  }

  std::vector<AffineParams> out(pop.size());
  for (size_t i = 0; i < pop.size(); ++i) {
    const auto& c = pop[i].counts;
    double sc = 0.0, sm = 0.0;
    for (int k : window) {
      sc += c[k];
      sm += m[k];
    }
    const double mc = sc / double(window.size());
    const double mm = sm / double(window.size());
    double cov = 0.0, var = 0.0;
    for (int k : window) {
      cov += (c[k] - mc) * (m[k] - mm);
      var += (c[k] - mc) * (c[k] - mc);
    }
    if (var == 0.0)
      throw SingularFit("ADC " + std::to_string(i) + " has a constant transfer curve");
    AffineParams p;
    p.scale_aff = cov / var;
    p.offset_aff = mm - p.scale_aff * mc;
    p.quantized = datapath::quantize_params(p.scale_aff, p.offset_aff);
    out[i] = p;
  }
  return out;
}

// CV across the population per level. Optional correction applies each
// ADC's affine parameters, in real arithmetic or with the quantized
// register values.
inline CvProfile compute_cv(const std::vector<AdcCurve>& pop,
                            const std::vector<AffineParams>* correction = nullptr,
                            bool quantized = false) {
  if (pop.empty()) throw ParameterError("empty population");
  if (correction && correction->size() != pop.size())
    throw ParameterError("correction list size mismatch");
  CvProfile prof;
  prof.levels.reserve(kCurveSamples);
  double agg = 0.0;
  int used = 0;
  for (int k = 0; k < kCurveSamples; ++k) {
    double sum = 0.0, sum_sq = 0.0;
    for (size_t i = 0; i < pop.size(); ++i) {
      double v = pop[i].counts[k];
      if (correction) {
        const auto& p = (*correction)[i];
        if (quantized) {
          const auto& q = p.quantized;
          v = v * std::ldexp(q.scale_fx.value(), -q.shift) + q.offset_fx.value();
        } else {
          v = v * p.scale_aff + p.offset_aff;
        }
      }
      sum += v;
      sum_sq += v * v;
    }
    const double n = double(pop.size());
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    const double sd = std::sqrt(var);
    CvLevel lv{level_at(k), mean, sd, mean > 0.0 ? sd / mean : 0.0};
    prof.levels.push_back(lv);
    if (mean >= 32.0) {  // low-count levels excluded: cv blows up as mean -> 0
      agg += lv.cv;
      ++used;
    }
  }
  prof.levels_used = used;
  prof.aggregate_cv = used > 0 ? agg / used : 0.0;
  return prof;
}

// Piecewise-linear lookup of a normalized bit-line current.
inline int convert(const AdcCurve& curve, double current) {
  const double x = std::clamp(current, 0.0, 1.0);
  const double pos = x * (kCurveSamples - 1);
  const int i = std::min(int(pos), kCurveSamples - 2);
  const double t = pos - i;
  const double v = (1.0 - t) * curve.counts[i] + t * curve.counts[i + 1];
  return int(std::clamp(std::floor(v + 0.5), 0.0, 1023.0));
}

// ---- serialization ----

inline std::string population_csv(const std::vector<AdcCurve>& pop) {
  std::ostringstream os;
  os << "level";
  for (size_t i = 0; i < pop.size(); ++i) os << ",adc" << i;
  os << '\n';
  for (int k = 0; k < kCurveSamples; ++k) {
    os << fmt_fixed(level_at(k), 6);
    for (const auto& c : pop) os << ',' << c.counts[k];
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json calibration_json(const std::vector<AffineParams>& params) {
  nlohmann::json j = nlohmann::json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    nlohmann::json e;
    e["adc"] = i;
    e["scale_aff"] = p.scale_aff;
    e["offset_aff"] = p.offset_aff;
    e["scale_raw"] = p.quantized.scale_fx.raw;
    e["shift"] = p.quantized.shift;
    e["offset_raw"] = p.quantized.offset_fx.raw;
    e["scale_text"] = fixed::to_string(p.quantized.scale_fx);
    e["offset_text"] = fixed::to_string(p.quantized.offset_fx);
    j.push_back(e);
  }
  return j;
}

inline nlohmann::json cv_summary_json(const CvProfile& before, const CvProfile& real_corr,
                                      const CvProfile& quant_corr) {
  nlohmann::json j;
  j["cv_before"] = before.aggregate_cv;
  j["cv_after_real"] = real_corr.aggregate_cv;
  j["cv_after_quantized"] = quant_corr.aggregate_cv;
  j["levels_used"] = before.levels_used;
  return j;
}

}  // namespace nmpu::adc

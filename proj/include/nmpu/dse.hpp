#pragma once

// Design-space exploration over the 15 first/second-stage method pairs:
// seeded Gaussian stimulus, per-sample parameter draws, quantization-error
// statistics against the fixed-point golden reference, and CSV/JSON report
// emission.
//
// Error accounting: out_golden is the transfer function evaluated with the
// *same* register values the hardware path uses, in full precision, then
// floor-integerized and saturated like the output stage. Q_err against that
// baseline isolates what the cut/round stages themselves cost, which is the
// quantity the stage comparison ranks. The report also carries RMS errors
// against the real-valued (unquantized) parameter reference so parameter
// quantization cost stays visible; see q_err_rel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "datapath.hpp"
#include "half.hpp"
#include "util.hpp"

#include "json.hpp"

namespace nmpu::dse {

using datapath::FirstStageMethod;
using datapath::NmpuConfig;
using datapath::SecondStageMethod;

struct Architecture {
  std::string id;  // e.g. "M2-S1"
  FirstStageMethod first_stage = FirstStageMethod::M5;
  SecondStageMethod second_stage = SecondStageMethod::S1;
};

inline std::vector<Architecture> all_architectures() {
  std::vector<Architecture> v;
  for (int f = 0; f < 5; ++f) {
    for (int s = 0; s < 3; ++s) {
      const auto fs = FirstStageMethod(f);
      const auto ss = SecondStageMethod(s);
      v.push_back({std::string(datapath::to_string(fs)) + "-" + datapath::to_string(ss),
                   fs, ss});
    }
  }
  return v;
}

inline std::optional<Architecture> find_architecture(const std::string& id) {
  for (const auto& a : all_architectures())
    if (a.id == id) return a;
  return std::nullopt;
}

// One input pair; the stimulus keeps one branch idle per sample, mirroring
// how a signed value splits onto the positive/negative current paths.
struct Sample {
  int in_p = 0;
  int in_n = 0;
};

// Per-sample parameter draw. scale_p/scale_n are correction factors in the
// observed calibration range; shift spreads the effective scale over the
// full shifter range; offset spans the measured-offset budget.
struct CfgDraw {
  double scale_p = 1.0;
  double scale_n = 1.0;
  int shift = 0;
  double offset = 0.0;

  double eff_scale_p() const { return std::ldexp(scale_p, -shift); }
  double eff_scale_n() const { return std::ldexp(scale_n, -shift); }
};

struct Stimulus {
  std::vector<Sample> samples;
  std::vector<CfgDraw> cfg_draws;  // indexed modulo size
  uint64_t seed = 0;
  double gain = 256.0;
};

inline Sample sample_from_z(double z, double gain) {
  const auto code = [&](double v) {
    return int(std::clamp(std::floor(gain * v + 0.5), 0.0, 1023.0));
  };
  if (z >= 0.0) return Sample{code(z), 0};
  return Sample{0, code(-z)};
}

inline Stimulus gen_stimulus(int n, uint64_t seed, double gain) {
  if (n < 1) throw std::invalid_argument("stimulus needs n >= 1");
  if (!(gain > 0.0)) throw std::invalid_argument("gain must be positive");
  Stimulus st;
  st.seed = seed;
  st.gain = gain;
  st.samples.reserve(n);
  st.cfg_draws.reserve(n);
  Rng zrng(seed, 0);
  Rng crng(seed, 1);
  for (int i = 0; i < n; ++i) {
    st.samples.push_back(sample_from_z(zrng.next_normal(), gain));
    CfgDraw d;
    d.scale_p = crng.next_uniform(0.88, 1.17);
    d.scale_n = crng.next_uniform(0.88, 1.17);
    d.shift = int(crng.next_below(4));
    d.offset = crng.next_uniform(-8.0, 8.0);
    st.cfg_draws.push_back(d);
  }
  return st;
}

// Full input grid under a single parameter draw, for brute-force runs.
inline Stimulus grid_stimulus(const CfgDraw& draw) {
  Stimulus st;
  st.samples.reserve(1024 * 1024);
  for (int p = 0; p < 1024; ++p)
    for (int n = 0; n < 1024; ++n) st.samples.push_back(Sample{p, n});
  st.cfg_draws.push_back(draw);
  return st;
}

inline double q_err(long long hw, double baseline) {
  return std::fabs(double(hw) - baseline);
}

inline double q_err_rel(double impl_err, double hw_op_err) {
  if (!(hw_op_err > 0.0))
    throw datapath::DomainError("hw_op_err must be positive");
  return (impl_err - hw_op_err) / hw_op_err;
}

// Registers for one draw: both branches share the shifter, so the shift is
// the most precise one valid for both effective scales.
inline NmpuConfig make_hw_config(const CfgDraw& draw, const Architecture& arch,
                                 bool relu) {
  const auto qp = datapath::quantize_params(draw.eff_scale_p(), draw.offset);
  const auto qn = datapath::quantize_params(draw.eff_scale_n(), 0.0);
  const int shift = std::min(qp.shift, qn.shift);
  const auto requant = [&](double eff) {
    return fixed::fx_quantize(std::ldexp(eff, shift), datapath::kScaleFormat,
                              fixed::RoundMode::HalfUp);
  };
  NmpuConfig cfg;
  cfg.scale_p = requant(draw.eff_scale_p());
  cfg.scale_n = requant(draw.eff_scale_n());
  cfg.shift = shift;
  cfg.offset = qp.offset_fx;
  cfg.first_stage = arch.first_stage;
  cfg.second_stage = arch.second_stage;
  cfg.relu_enabled = relu;
  return cfg;
}

// Golden output: dequantized registers, full-precision transfer function,
// floor to integer, then the same ReLU/saturation as the output stage.
inline int golden_output(int in_p, int in_n, const NmpuConfig& cfg) {
  const double sp = std::ldexp(cfg.scale_p.value(), -cfg.shift);
  const double sn = std::ldexp(cfg.scale_n.value(), -cfg.shift);
  const double v = double(in_p) * sp - double(in_n) * sn + cfg.offset.value();
  long long out = (long long)std::floor(v);
  if (cfg.relu_enabled && out < 0) out = 0;
  return int(std::clamp(out, -128ll, 127ll));
}

// Behavioral half-precision post-processing: every operand and intermediate
// is rounded to binary16, the result to an integer (nearest-even) saturated
// to the 8-bit output range.
inline double fp16_baseline(int in_p, int in_n, const datapath::RealConfig& cfg) {
  const auto h = half::round_to_half;
  const double tp = h(h(double(in_p)) * h(cfg.scale_p));
  const double tn = h(h(double(in_n)) * h(cfg.scale_n));
  double acc = h(h(tp - tn) + h(cfg.offset));
  if (cfg.relu && acc < 0.0) acc = 0.0;
  const double rounded = std::nearbyint(acc);
  return std::clamp(rounded, -128.0, 127.0);
}

constexpr int kHistogramBins = 9;  // Q_err = 0..7, last bin >= 8

struct ArchReport {
  Architecture arch;
  std::string label;  // A/B best two, C/D/E worst per second stage
  size_t n = 0;
  size_t count_ge_half = 0;
  double frac_ge_half = 0.0;
  double mean_q_err = 0.0;
  double l2_err = 0.0;
  std::vector<int64_t> histogram = std::vector<int64_t>(kHistogramBins, 0);
  double impl_rms = 0.0;   // RMS vs real-parameter reference
  double hw_op_rms = 0.0;  // RMS of the golden path vs the same reference
  double rel_excess = 0.0; // (impl_rms - hw_op_rms) / hw_op_rms
};

struct ErrorReport {
  size_t n = 0;
  uint64_t seed = 0;
  double gain = 0.0;
  bool relu = false;
  std::vector<ArchReport> rows;  // ranked by frac_ge_half ascending
};

inline ErrorReport explore(const Stimulus& stimulus,
                           const std::vector<Architecture>& architectures,
                           bool relu = false) {
  if (stimulus.samples.empty()) throw std::invalid_argument("empty stimulus");
  if (stimulus.cfg_draws.empty()) throw std::invalid_argument("stimulus has no draws");
  ErrorReport report;
  report.n = stimulus.samples.size();
  report.seed = stimulus.seed;
  report.gain = stimulus.gain;
  report.relu = relu;
  report.rows.resize(architectures.size());

  parallel_for(architectures.size(), [&](size_t ai) {
    const Architecture& arch = architectures[ai];
    ArchReport row;
    row.arch = arch;
    row.n = stimulus.samples.size();
    double sum = 0.0, sum_sq = 0.0, impl_sq = 0.0, hwop_sq = 0.0;
    // Per-draw configs repeat with period cfg_draws.size(); cache them.
    std::vector<NmpuConfig> cfgs;
    cfgs.reserve(stimulus.cfg_draws.size());
    for (const auto& d : stimulus.cfg_draws) cfgs.push_back(make_hw_config(d, arch, relu));

    for (size_t i = 0; i < stimulus.samples.size(); ++i) {
      const Sample& s = stimulus.samples[i];
      const size_t di = i % stimulus.cfg_draws.size();
      const NmpuConfig& cfg = cfgs[di];
      const CfgDraw& draw = stimulus.cfg_draws[di];

      const int hw = datapath::nmpu_process(s.in_p, s.in_n, cfg).value;
      const int golden = golden_output(s.in_p, s.in_n, cfg);
      const double qe = q_err(hw, golden);
      if (qe >= 0.5) ++row.count_ge_half;
      sum += qe;
      sum_sq += qe * qe;
      ++row.histogram[std::min<int>(int(qe), kHistogramBins - 1)];

      const datapath::RealConfig ref{draw.eff_scale_p(), draw.eff_scale_n(),
                                     draw.offset, relu};
      const double baseline = std::clamp(
          datapath::nmpu_reference(s.in_p, s.in_n, ref), -128.0, 127.0);
      impl_sq += (hw - baseline) * (hw - baseline);
      hwop_sq += (golden - baseline) * (golden - baseline);
    }
    const double n = double(row.n);
    row.frac_ge_half = double(row.count_ge_half) / n;
    row.mean_q_err = sum / n;
    row.l2_err = std::sqrt(sum_sq / n);
    row.impl_rms = std::sqrt(impl_sq / n);
    row.hw_op_rms = std::sqrt(hwop_sq / n);
    row.rel_excess = row.hw_op_rms > 0.0 ? q_err_rel(row.impl_rms, row.hw_op_rms) : 0.0;
    report.rows[ai] = row;
  });

  // Rank ascending by mismatch fraction; ties resolve by id for stable output.
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ArchReport& a, const ArchReport& b) {
              if (a.frac_ge_half != b.frac_ge_half) return a.frac_ge_half < b.frac_ge_half;
              return a.arch.id < b.arch.id;
            });

  // Letter labels from the measured ranking: the two best get A and B, the
  // worst per second-stage method gets C/D/E (in stage order).
  if (report.rows.size() >= 2) {
    report.rows[0].label = "A";
    report.rows[1].label = "B";
  }
  const char* worst_labels[3] = {"C", "D", "E"};
  for (int s = 0; s < 3; ++s) {
    int worst = -1;
    for (int i = 0; i < int(report.rows.size()); ++i) {
      if (int(report.rows[i].arch.second_stage) != s) continue;
      if (worst < 0 || report.rows[i].frac_ge_half >= report.rows[worst].frac_ge_half)
        worst = i;
    }
    if (worst >= 0 && report.rows[worst].label.empty())
      report.rows[worst].label = worst_labels[s];
  }
  return report;
}

inline const ArchReport* find_row(const ErrorReport& report, const std::string& id) {
  for (const auto& r : report.rows)
    if (r.arch.id == id) return &r;
  return nullptr;
}

// ---- report emission ----

inline std::string report_csv(const ErrorReport& report) {
  std::ostringstream os;
  os << "id,first_stage,second_stage,label,frac_ge_half,mean_q_err,l2_err,"
        "impl_rms,hw_op_rms,rel_excess\n";
  for (const auto& r : report.rows) {
    os << r.arch.id << ',' << datapath::to_string(r.arch.first_stage) << ','
       << datapath::to_string(r.arch.second_stage) << ',' << r.label << ','
       << fmt_fixed(r.frac_ge_half, 6) << ',' << fmt_fixed(r.mean_q_err, 6) << ','
       << fmt_fixed(r.l2_err, 6) << ',' << fmt_fixed(r.impl_rms, 6) << ','
       << fmt_fixed(r.hw_op_rms, 6) << ',' << fmt_fixed(r.rel_excess, 6) << '\n';
  }
  return os.str();
}

inline nlohmann::json report_json(const ErrorReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["seed"] = report.seed;
  j["gain"] = report.gain;
  j["relu"] = report.relu;
  j["architectures"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json a;
    a["id"] = r.arch.id;
    a["first_stage"] = datapath::to_string(r.arch.first_stage);
    a["second_stage"] = datapath::to_string(r.arch.second_stage);
    a["label"] = r.label;
    a["frac_ge_half"] = r.frac_ge_half;
    a["mean_q_err"] = r.mean_q_err;
    a["l2_err"] = r.l2_err;
    a["impl_rms"] = r.impl_rms;
    a["hw_op_rms"] = r.hw_op_rms;
    a["rel_excess"] = r.rel_excess;
    a["histogram"] = r.histogram;
    j["architectures"].push_back(a);
  }
  return j;
}

inline std::string histogram_csv(const ArchReport& row) {
  std::ostringstream os;
  os << "q_err,count\n";
  for (int b = 0; b < kHistogramBins; ++b) {
    if (b + 1 == kHistogramBins)
      os << b << "+," << row.histogram[b] << '\n';
    else
      os << b << ',' << row.histogram[b] << '\n';
  }
  return os.str();
}

}  // namespace nmpu::dse

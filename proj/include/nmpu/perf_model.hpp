#pragma once

// Analytical latency/area model for the post-processing options: replicated
// time-multiplexed fixed-point units versus a single serial-pipelined
// half-precision block. Built-in specs carry the 14nm post-layout reference
// numbers; power figures are stored constants surfaced in reports, never
// derived.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace nmpu::perf {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LatencyMode { ParallelMultiplexed, SerialPipelined };

struct PerfSpec {
  std::string name;
  double area_kge = 0.0;          // per unit
  double unit_latency_ns = 0.0;   // per output, parallel mode
  double init_latency_ns = 0.0;   // pipeline fill, serial mode
  double issue_interval_ns = 0.0; // per output, serial mode
  int units = 1;
  int columns_per_unit = 1;
  LatencyMode mode = LatencyMode::ParallelMultiplexed;
  std::optional<double> power_mw_ss;
  std::optional<double> power_mw_ff;
};

inline std::vector<PerfSpec> builtin_specs() {
  return {
      // Single fixed-point unit multiplexed over the whole tile.
      {"archA", 3.3, 1.0, 0.0, 0.0, 1, 256, LatencyMode::ParallelMultiplexed, 0.383,
       0.524},
      // 64 replicas, 4 columns each.
      {"archA_x64", 3.3, 1.0, 0.0, 0.0, 64, 4, LatencyMode::ParallelMultiplexed, 24.5,
       33.5},
      // Half-precision block shared by all 256 columns, serial pipelined.
      {"fp16_ref", 1666.0, 46.0, 46.0, 2.0, 1, 256, LatencyMode::SerialPipelined, 27.0,
       32.0},
  };
}

inline PerfSpec find_spec(const std::string& name) {
  for (const auto& s : builtin_specs())
    if (s.name == name) return s;
  throw SpecError("unknown spec '" + name + "'");
}

inline double total_latency(const PerfSpec& spec, int n_outputs, LatencyMode mode) {
  if (n_outputs < 1) throw SpecError("n_outputs must be >= 1");
  if (spec.units < 1) throw SpecError("units must be >= 1");
  switch (mode) {
    case LatencyMode::ParallelMultiplexed:
      return std::ceil(double(n_outputs) / double(spec.units)) * spec.unit_latency_ns;
    case LatencyMode::SerialPipelined:
      return spec.init_latency_ns + double(n_outputs) * spec.issue_interval_ns;
  }
  return 0.0;
}

inline double total_latency(const PerfSpec& spec, int n_outputs) {
  return total_latency(spec, n_outputs, spec.mode);
}

inline double area_total(const PerfSpec& spec) {
  return spec.units > 1 ? spec.area_kge * spec.units : spec.area_kge;
}

// Area the way the reference table prints it: one decimal below 10 kGE,
// whole numbers above.
inline double reported_area(const PerfSpec& spec) {
  const double a = area_total(spec);
  return a < 10.0 ? std::round(a * 10.0) / 10.0 : std::round(a);
}

struct Comparison {
  double speedup = 1.0;     // latency(b) / latency(a)
  double area_ratio = 1.0;  // area(b) / area(a)
};

inline Comparison compare(const PerfSpec& a, const PerfSpec& b, int n_outputs) {
  return Comparison{total_latency(b, n_outputs) / total_latency(a, n_outputs),
                    area_total(b) / area_total(a)};
}

inline nlohmann::json spec_json(const PerfSpec& s, int n_outputs = 256) {
  nlohmann::json j;
  j["name"] = s.name;
  j["area_kge"] = reported_area(s);
  j["unit_latency_ns"] = s.unit_latency_ns;
  j["total_latency_ns"] = total_latency(s, n_outputs);
  j["units"] = s.units;
  j["columns_per_unit"] = s.columns_per_unit;
  j["mode"] = s.mode == LatencyMode::ParallelMultiplexed ? "parallel_multiplexed"
                                                         : "serial_pipelined";
  if (s.power_mw_ss) j["power_mw_ss"] = *s.power_mw_ss;
  if (s.power_mw_ff) j["power_mw_ff"] = *s.power_mw_ff;
  return j;
}

inline std::string table_csv(int n_outputs = 256) {
  std::string out = "name,area_kge,latency_ns,total_latency_ns,power_mw_ss,power_mw_ff\n";
  for (const auto& s : builtin_specs()) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%g,%g,%g,%g,%g\n", s.name.c_str(),
                  reported_area(s), s.unit_latency_ns, total_latency(s, n_outputs),
                  s.power_mw_ss.value_or(0.0), s.power_mw_ff.value_or(0.0));
    out += buf;
  }
  return out;
}

}  // namespace nmpu::perf

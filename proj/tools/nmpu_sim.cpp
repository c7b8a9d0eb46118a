// Command-line front end for the fixed-point post-processing simulator:
// design-space exploration, ADC calibration studies, end-to-end network
// simulation, latency/area comparisons and test-vector emission.
//
// Every run writes a manifest (INI form, re-runnable via --config, plus a
// JSON echo) into the output directory, and all outputs are byte-stable for
// a fixed seed.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nmpu/adc_model.hpp"
#include "nmpu/aimc_sim.hpp"
#include "nmpu/datapath.hpp"
#include "nmpu/dse.hpp"
#include "nmpu/perf_model.hpp"
#include "nmpu/util.hpp"

namespace fs = std::filesystem;
using namespace nmpu;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Manifest in CLI11 INI form: one section per command, every resolved value
// spelled out, re-runnable via `nmpu_sim --config manifest.cfg`.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& command) { os_ << "[" << command << "]\n"; }

  ManifestWriter& add(const std::string& key, const std::string& v) {
    os_ << key << "=\"" << v << "\"\n";
    return *this;
  }
  ManifestWriter& add(const std::string& key, uint64_t v) {
    os_ << key << "=" << v << "\n";
    return *this;
  }
  ManifestWriter& add(const std::string& key, int v) {
    os_ << key << "=" << v << "\n";
    return *this;
  }
  ManifestWriter& add(const std::string& key, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os_ << key << "=" << buf << "\n";
    return *this;
  }
  ManifestWriter& add_flag(const std::string& key, bool v) {
    os_ << key << "=" << (v ? "true" : "false") << "\n";
    return *this;
  }
  ManifestWriter& add_list(const std::string& key, const std::vector<std::string>& vs) {
    if (vs.empty()) return *this;
    os_ << key << "=";
    for (size_t i = 0; i < vs.size(); ++i) os_ << (i ? " " : "") << "\"" << vs[i] << "\"";
    os_ << "\n";
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

void write_manifest(const fs::path& out_dir, const ManifestWriter& m,
                    const nlohmann::json& echo) {
  atomic_write_file(out_dir / "manifest.cfg", m.str());
  atomic_write_file(out_dir / "manifest.json", echo.dump(2) + "\n");
}

std::vector<dse::Architecture> resolve_architectures(const std::vector<std::string>& ids) {
  if (ids.empty()) return dse::all_architectures();
  std::vector<dse::Architecture> archs;
  for (const auto& id : ids) {
    const auto a = dse::find_architecture(id);
    if (!a) throw UsageError("unknown architecture '" + id + "' (expect M1..M5-S1..S3)");
    archs.push_back(*a);
  }
  return archs;
}

dse::Architecture best_architecture_by_exploration() {
  // Small seeded exploration; the ranking is stable well below this size.
  const auto report =
      dse::explore(dse::gen_stimulus(4000, 42, 256.0), dse::all_architectures(), false);
  return report.rows.front().arch;
}

// ---- explore ----

struct ExploreArgs {
  int n = 10000;
  uint64_t seed = 42;
  double gain = 256.0;
  std::vector<std::string> archs;
  bool relu = false;
  bool exhaustive = false;
  double scale_p = 1.171875;
  double scale_n = 1.171875;
  int shift = 1;
  double offset = 0.5;
  std::string out = "out-explore";
};

int run_explore(const ExploreArgs& a) {
  const auto archs = resolve_architectures(a.archs);
  dse::Stimulus st;
  if (a.exhaustive) {
    st = dse::grid_stimulus(dse::CfgDraw{a.scale_p, a.scale_n, a.shift, a.offset});
    st.seed = a.seed;
    st.gain = a.gain;
  } else {
    st = dse::gen_stimulus(a.n, a.seed, a.gain);
  }
  const auto report = dse::explore(st, archs, a.relu);

  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write_file(out / "report.csv", dse::report_csv(report));
  atomic_write_file(out / "report.json", dse::report_json(report).dump(2) + "\n");
  for (const auto& row : report.rows)
    atomic_write_file(out / ("hist_" + row.arch.id + ".csv"), dse::histogram_csv(row));

  nlohmann::json echo;
  echo["command"] = "explore";
  echo["n"] = st.samples.size();
  echo["seed"] = a.seed;
  echo["gain"] = a.gain;
  echo["relu"] = a.relu;
  echo["exhaustive"] = a.exhaustive;
  echo["architectures"] = nlohmann::json::array();
  for (const auto& arch : archs) echo["architectures"].push_back(arch.id);

  ManifestWriter m("explore");
  m.add("n", a.n)
      .add("seed", a.seed)
      .add("gain", a.gain)
      .add_list("arch", a.archs)
      .add_flag("relu", a.relu)
      .add_flag("exhaustive", a.exhaustive)
      .add("scale-p", a.scale_p)
      .add("scale-n", a.scale_n)
      .add("shift", a.shift)
      .add("offset", a.offset)
      .add("out", a.out);
  write_manifest(out, m, echo);

  std::cout << "explored " << archs.size() << " architectures over " << st.samples.size()
            << " samples -> " << (out / "report.csv").string() << "\n";
  for (const auto& row : report.rows) {
    if (!row.label.empty())
      std::cout << "  " << row.label << " = " << row.arch.id
                << "  frac(Q_err>=0.5) = " << fmt_fixed(row.frac_ge_half, 4) << "\n";
  }
  return 0;
}

// ---- adc ----

struct AdcArgs {
  int n = 256;
  double cv = 0.07;
  double nonlinearity = 0.3;
  uint64_t seed = 7;
  std::string out = "out-adc";
};

int run_adc(const AdcArgs& a) {
  const auto pop = adc::gen_adc_population(a.n, a.cv, a.nonlinearity, a.seed);
  const auto params = adc::calibrate_affine(pop);
  const auto before = adc::compute_cv(pop);
  const auto real_c = adc::compute_cv(pop, &params, false);
  const auto quant_c = adc::compute_cv(pop, &params, true);

  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write_file(out / "population.csv", adc::population_csv(pop));
  atomic_write_file(out / "calibration.json",
                    adc::calibration_json(params).dump(2) + "\n");
  atomic_write_file(out / "cv_summary.json",
                    adc::cv_summary_json(before, real_c, quant_c).dump(2) + "\n");

  nlohmann::json echo;
  echo["command"] = "adc";
  echo["n"] = a.n;
  echo["cv"] = a.cv;
  echo["nonlinearity"] = a.nonlinearity;
  echo["seed"] = a.seed;

  ManifestWriter m("adc");
  m.add("n", a.n)
      .add("cv", a.cv)
      .add("nonlinearity", a.nonlinearity)
      .add("seed", a.seed)
      .add("out", a.out);
  write_manifest(out, m, echo);

  std::cout << "cv before " << fmt_fixed(before.aggregate_cv, 4) << ", after "
            << fmt_fixed(real_c.aggregate_cv, 4) << " (real) / "
            << fmt_fixed(quant_c.aggregate_cv, 4) << " (quantized)\n";
  return 0;
}

// ---- simulate ----

struct SimulateArgs {
  std::vector<std::string> peripheries{"fp32", "fp16", "nmpu:best"};
  int reps = 10;
  double noise = 0.0;
  double drift = 1.0;
  std::string adc_mode = "synthetic";
  uint64_t seed = 1;
  int train_n = 2000;
  int test_n = 1000;
  std::string weights;       // optional network container to load
  std::string save_weights;  // optional path to export the trained network
  std::string dataset;       // optional test-set CSV
  std::string out = "out-simulate";
};

struct PeripherySel {
  std::string label;
  aimc::PeripheryKind kind;
  dse::Architecture arch;
};

std::vector<PeripherySel> resolve_peripheries(const std::vector<std::string>& specs) {
  std::vector<PeripherySel> out;
  std::optional<dse::Architecture> best;
  for (const auto& s : specs) {
    if (s == "fp32") {
      out.push_back({s, aimc::PeripheryKind::Fp32Reference, {}});
    } else if (s == "fp16") {
      out.push_back({s, aimc::PeripheryKind::Fp16Behavioral, {}});
    } else if (s.rfind("nmpu:", 0) == 0) {
      const std::string id = s.substr(5);
      dse::Architecture arch;
      if (id == "best") {
        if (!best) best = best_architecture_by_exploration();
        arch = *best;
      } else {
        const auto a = dse::find_architecture(id);
        if (!a) throw UsageError("unknown architecture in periphery '" + s + "'");
        arch = *a;
      }
      out.push_back({"nmpu:" + arch.id, aimc::PeripheryKind::FixedPointNmpu, arch});
    } else {
      throw UsageError("unknown periphery '" + s + "' (fp32 | fp16 | nmpu:<arch|best>)");
    }
  }
  return out;
}

int run_simulate(const SimulateArgs& a) {
  if (a.adc_mode != "synthetic" && a.adc_mode != "linear")
    throw UsageError("--adc must be 'synthetic' or 'linear'");
  const auto selections = resolve_peripheries(a.peripheries);

  const auto train = aimc::make_toy_dataset(a.train_n, 11);
  aimc::Dataset test;
  if (!a.dataset.empty()) {
    if (!fs::exists(a.dataset)) throw UsageError("dataset file not found: " + a.dataset);
    test = aimc::parse_dataset_csv(read_file(a.dataset));
  } else {
    test = aimc::make_toy_dataset(a.test_n, 22);
  }

  aimc::Mlp net;
  if (!a.weights.empty()) {
    if (!fs::exists(a.weights)) throw UsageError("weight file not found: " + a.weights);
    net = aimc::load_network(a.weights);
  } else {
    net = aimc::train_reference_mlp(train, 5);
  }
  if (!a.save_weights.empty()) aimc::save_network(a.save_weights, net);

  const auto quant = aimc::calibrate_network(net, train);

  std::vector<adc::AdcCurve> pop;
  std::vector<adc::AffineParams> corr;
  if (a.adc_mode == "synthetic") {
    pop = adc::gen_adc_population(256, 0.07, 0.3, 7);
    corr = adc::calibrate_affine(pop);
  }

  const double software_acc = aimc::quantized_reference_accuracy(net, quant, test);

  struct Row {
    std::string label;
    double mean = 0.0;
    double stddev = 0.0;
  };
  std::vector<Row> rows;
  for (const auto& sel : selections) {
    std::vector<double> accs(a.reps, 0.0);
    parallel_for(size_t(a.reps), [&](size_t rep) {
      aimc::SimOptions o;
      o.periphery = sel.kind;
      o.arch = sel.arch;
      o.noise_sigma = a.noise;
      o.drift = a.drift;
      o.seed = a.seed + rep;
      if (a.adc_mode == "synthetic") {
        o.adcs = &pop;
        o.adc_correction = &corr;
      }
      accs[rep] = aimc::run_network(net, quant, test, o);
    });
    Row r;
    r.label = sel.label;
    for (double v : accs) r.mean += v;
    r.mean /= double(a.reps);
    double var = 0.0;
    for (double v : accs) var += (v - r.mean) * (v - r.mean);
    r.stddev = a.reps > 1 ? std::sqrt(var / double(a.reps - 1)) : 0.0;
    rows.push_back(r);
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  std::string csv = "periphery,mean_accuracy,stddev,reps\n";
  for (const auto& r : rows)
    csv += r.label + "," + fmt_fixed(r.mean, 6) + "," + fmt_fixed(r.stddev, 6) + "," +
           std::to_string(a.reps) + "\n";
  atomic_write_file(out / "accuracy.csv", csv);

  nlohmann::json j;
  j["software_reference_accuracy"] = software_acc;
  j["noise_sigma"] = a.noise;
  j["noise_model"] = "synthetic multiplicative gaussian on conductances";
  j["drift"] = a.drift;
  j["adc"] = a.adc_mode;
  j["seed"] = a.seed;
  j["reps"] = a.reps;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"periphery", r.label}, {"mean", r.mean}, {"stddev", r.stddev}});
  atomic_write_file(out / "accuracy.json", j.dump(2) + "\n");

  nlohmann::json echo = j;
  echo["command"] = "simulate";

  ManifestWriter m("simulate");
  m.add_list("peripheries", a.peripheries)
      .add("reps", a.reps)
      .add("noise", a.noise)
      .add("drift", a.drift)
      .add("adc", a.adc_mode)
      .add("seed", a.seed)
      .add("train-n", a.train_n)
      .add("test-n", a.test_n);
  if (!a.weights.empty()) m.add("weights", a.weights);
  if (!a.save_weights.empty()) m.add("save-weights", a.save_weights);
  if (!a.dataset.empty()) m.add("dataset", a.dataset);
  m.add("out", a.out);
  write_manifest(out, m, echo);

  std::cout << "software reference accuracy " << fmt_fixed(software_acc, 4) << "\n";
  for (const auto& r : rows)
    std::cout << "  " << r.label << ": " << fmt_fixed(r.mean, 4) << " +/- "
              << fmt_fixed(r.stddev, 4) << "\n";
  return 0;
}

// ---- perf ----

struct PerfArgs {
  int n_outputs = 256;
  std::vector<std::string> compare;  // two spec names
  std::string spec;                  // single spec to print
  std::string out = "out-perf";
};

int run_perf(const PerfArgs& a) {
  const fs::path out(a.out);
  fs::create_directories(out);

  nlohmann::json j;
  j["n_outputs"] = a.n_outputs;
  j["specs"] = nlohmann::json::array();
  try {
    if (!a.spec.empty()) {
      j["specs"].push_back(perf::spec_json(perf::find_spec(a.spec), a.n_outputs));
    } else {
      for (const auto& s : perf::builtin_specs())
        j["specs"].push_back(perf::spec_json(s, a.n_outputs));
    }
    if (!a.compare.empty()) {
      const auto sa = perf::find_spec(a.compare[0]);
      const auto sb = perf::find_spec(a.compare[1]);
      const auto c = perf::compare(sa, sb, a.n_outputs);
      j["compare"] = {{"a", sa.name},
                      {"b", sb.name},
                      {"speedup", c.speedup},
                      {"area_ratio", c.area_ratio}};
      std::cout << sa.name << " vs " << sb.name << ": speedup "
                << fmt_fixed(c.speedup, 1) << "x, area ratio "
                << fmt_fixed(c.area_ratio, 2) << "x\n";
    }
  } catch (const perf::SpecError& e) {
    throw UsageError(e.what());
  }

  atomic_write_file(out / "table.csv", perf::table_csv(a.n_outputs));
  atomic_write_file(out / "perf.json", j.dump(2) + "\n");

  nlohmann::json echo;
  echo["command"] = "perf";
  echo["n_outputs"] = a.n_outputs;

  ManifestWriter m("perf");
  m.add("n-outputs", a.n_outputs);
  m.add_list("compare", a.compare);
  if (!a.spec.empty()) m.add("spec", a.spec);
  m.add("out", a.out);
  write_manifest(out, m, echo);

  std::cout << perf::table_csv(a.n_outputs);
  return 0;
}

// ---- vectors ----

struct VectorsArgs {
  std::string arch = "M5-S1";
  double scale_p = 1.171875;
  double scale_n = 1.171875;
  int shift = 1;
  double offset = 0.5;
  bool relu = false;
  bool exhaustive = false;
  int n = 10000;
  uint64_t seed = 42;
  std::string out = "out-vectors";
};

int run_vectors(const VectorsArgs& a) {
  const auto arch = dse::find_architecture(a.arch);
  if (!arch) throw UsageError("unknown architecture '" + a.arch + "'");
  const auto cfg =
      dse::make_hw_config(dse::CfgDraw{a.scale_p, a.scale_n, a.shift, a.offset}, *arch,
                          a.relu);

  std::string lines;
  lines.reserve(a.exhaustive ? size_t(1024) * 1024 * 14 : size_t(a.n) * 14);
  char buf[64];
  const auto emit = [&](int p, int n) {
    const auto r = datapath::nmpu_process(p, n, cfg);
    std::snprintf(buf, sizeof(buf), "%d %d %d %d\n", p, n, r.value, r.overflow ? 1 : 0);
    lines += buf;
  };
  if (a.exhaustive) {
    for (int p = 0; p < 1024; ++p)
      for (int n = 0; n < 1024; ++n) emit(p, n);
  } else {
    Rng rng(a.seed, 17);
    for (int i = 0; i < a.n; ++i)
      emit(int(rng.next_below(1024)), int(rng.next_below(1024)));
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write_file(out / "vectors.txt", lines);
  atomic_write_file(out / "config.txt", datapath::dump_config(cfg));

  nlohmann::json echo;
  echo["command"] = "vectors";
  echo["arch"] = arch->id;
  echo["exhaustive"] = a.exhaustive;
  echo["lines"] = a.exhaustive ? 1024 * 1024 : a.n;

  ManifestWriter m("vectors");
  m.add("arch", a.arch)
      .add("scale-p", a.scale_p)
      .add("scale-n", a.scale_n)
      .add("shift", a.shift)
      .add("offset", a.offset)
      .add_flag("relu", a.relu)
      .add_flag("exhaustive", a.exhaustive)
      .add("n", a.n)
      .add("seed", a.seed)
      .add("out", a.out);
  write_manifest(out, m, echo);

  std::cout << "wrote " << (a.exhaustive ? 1024 * 1024 : a.n) << " vectors to "
            << (out / "vectors.txt").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-point near-memory post-processing simulator"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "Read options from an INI config file (manifest.cfg)");

  ExploreArgs ea;
  auto* explore = app.add_subcommand("explore", "Design-space exploration over the "
                                                "cut/round method pairs");
  explore->configurable();
  explore->add_option("--n", ea.n, "Sample count")->check(CLI::PositiveNumber);
  explore->add_option("--seed", ea.seed, "RNG seed");
  explore->add_option("--gain", ea.gain, "Gaussian-to-code gain")
      ->check(CLI::PositiveNumber);
  explore->add_option("--arch", ea.archs, "Architecture filter (repeatable)");
  explore->add_flag("--relu", ea.relu, "Enable ReLU in the explored configs");
  explore->add_flag("--exhaustive", ea.exhaustive,
                    "Sweep the full 1024x1024 input grid under one fixed config");
  explore->add_option("--scale-p", ea.scale_p, "Fixed config: branch-p scale");
  explore->add_option("--scale-n", ea.scale_n, "Fixed config: branch-n scale");
  explore->add_option("--shift", ea.shift, "Fixed config: right shift")
      ->check(CLI::Range(0, 3));
  explore->add_option("--offset", ea.offset, "Fixed config: offset");
  explore->add_option("--out", ea.out, "Output directory");

  AdcArgs aa;
  auto* adc_cmd = app.add_subcommand("adc", "Synthetic ADC population calibration study");
  adc_cmd->configurable();
  adc_cmd->add_option("--n", aa.n, "Population size")->check(CLI::Range(2, 4096));
  adc_cmd->add_option("--cv", aa.cv, "Target coefficient of variation")
      ->check(CLI::Range(0.0, 0.2));
  adc_cmd->add_option("--nonlinearity", aa.nonlinearity, "Curve bow amount")
      ->check(CLI::Range(0.0, 1.0));
  adc_cmd->add_option("--seed", aa.seed, "RNG seed");
  adc_cmd->add_option("--out", aa.out, "Output directory");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "End-to-end toy network accuracy "
                                                  "comparison across peripheries");
  simulate->configurable();
  simulate->add_option("--peripheries", sa.peripheries,
                       "Comma/space separated: fp32 fp16 nmpu:<arch|best>")
      ->delimiter(',');
  simulate->add_option("--reps", sa.reps, "Seeded repetitions")->check(CLI::PositiveNumber);
  simulate->add_option("--noise", sa.noise, "Conductance noise sigma")
      ->check(CLI::Range(0.0, 0.5));
  simulate->add_option("--drift", sa.drift, "Global conductance drift factor")
      ->check(CLI::Range(0.05, 1.5));
  simulate->add_option("--adc", sa.adc_mode, "ADC model: synthetic | linear");
  simulate->add_option("--seed", sa.seed, "Base RNG seed");
  simulate->add_option("--train-n", sa.train_n, "Training-set size")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--test-n", sa.test_n, "Test-set size")->check(CLI::PositiveNumber);
  simulate->add_option("--weights", sa.weights, "Load network from a tensor container");
  simulate->add_option("--save-weights", sa.save_weights,
                       "Export the network to a tensor container");
  simulate->add_option("--dataset", sa.dataset, "Load the test set from CSV");
  simulate->add_option("--out", sa.out, "Output directory");

  PerfArgs pa;
  auto* perf_cmd = app.add_subcommand("perf", "Latency/area model and comparisons");
  perf_cmd->configurable();
  perf_cmd->add_option("--n-outputs", pa.n_outputs, "Outputs per tile")
      ->check(CLI::PositiveNumber);
  perf_cmd->add_option("--compare", pa.compare, "Two spec names to compare")
      ->expected(2);
  perf_cmd->add_option("--spec", pa.spec, "Print a single spec");
  perf_cmd->add_option("--out", pa.out, "Output directory");

  VectorsArgs va;
  auto* vectors = app.add_subcommand("vectors", "Emit datapath test vectors "
                                                "(in_p in_n out overflow)");
  vectors->configurable();
  vectors->add_option("--arch", va.arch, "Architecture id, e.g. M5-S1");
  vectors->add_option("--scale-p", va.scale_p, "Branch-p scale");
  vectors->add_option("--scale-n", va.scale_n, "Branch-n scale");
  vectors->add_option("--shift", va.shift, "Right shift")->check(CLI::Range(0, 3));
  vectors->add_option("--offset", va.offset, "Offset");
  vectors->add_flag("--relu", va.relu, "Enable ReLU");
  vectors->add_flag("--exhaustive", va.exhaustive, "All 1024x1024 input pairs");
  vectors->add_option("--n", va.n, "Sampled vector count")->check(CLI::PositiveNumber);
  vectors->add_option("--seed", va.seed, "Sampling seed");
  vectors->add_option("--out", va.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  try {
    if (explore->parsed()) return run_explore(ea);
    if (adc_cmd->parsed()) return run_adc(aa);
    if (simulate->parsed()) return run_simulate(sa);
    if (perf_cmd->parsed()) return run_perf(pa);
    if (vectors->parsed()) return run_vectors(va);
    std::cerr << app.help() << std::flush;
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
}

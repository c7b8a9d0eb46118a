#include "nmpu/aimc_sim.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "support/pipeline_oracle.hpp"

using namespace nmpu;
using namespace nmpu::aimc;

namespace {

const dse::Architecture kBestArch{"M4-S1", datapath::FirstStageMethod::M4,
                                  datapath::SecondStageMethod::S1};

// Trained task shared across tests (training runs once per binary).
struct Task {
  Dataset train = make_toy_dataset(2000, 11);
  Dataset test = make_toy_dataset(1000, 22);
  Mlp net = train_reference_mlp(train, 5);
  NetworkQuant quant = calibrate_network(net, train);
};

const Task& task() {
  static Task t;
  return t;
}

TEST(ProgramWeights, ExactWithoutNoise) {
  Matrix w(8, 6);
  Rng rng(3, 0);
  for (auto& v : w.d) v = rng.next_uniform(-2.0, 2.0);
  const auto tile = program_weights(w, 0.0, 1);
  const auto back = dequantize_weights(tile);
  for (size_t i = 0; i < w.d.size(); ++i) ASSERT_NEAR(back.d[i], w.d[i], 1e-12);
}

TEST(ProgramWeights, IdentityMapsToDiagonal) {
  Matrix w(5, 5);
  for (int i = 0; i < 5; ++i) w.at(i, i) = 1.0;
  const auto tile = program_weights(w, 0.0, 1);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      EXPECT_DOUBLE_EQ(tile.g_pos.at(r, c), r == c ? 1.0 : 0.0);
      EXPECT_DOUBLE_EQ(tile.g_neg.at(r, c), 0.0);
    }
  }
}

TEST(ProgramWeights, NoiseMatchesRequestedMagnitude) {
  Matrix w(64, 64);
  Rng rng(9, 0);
  for (auto& v : w.d) v = rng.next_uniform(-1.0, 1.0);
  const auto tile = program_weights(w, 0.05, 77);
  const auto back = dequantize_weights(tile);
  double err_sq = 0.0, ref_sq = 0.0;
  for (size_t i = 0; i < w.d.size(); ++i) {
    err_sq += (back.d[i] - w.d[i]) * (back.d[i] - w.d[i]);
    ref_sq += w.d[i] * w.d[i];
  }
  const double rel_rms = std::sqrt(err_sq / ref_sq);
  EXPECT_NEAR(rel_rms, 0.05, 0.05 * 0.2);
}

TEST(Mvm, ZeroInputGivesZeroCurrentCounts) {
  Matrix w(4, 3);
  for (auto& v : w.d) v = 0.5;
  const auto tile = program_weights(w, 0.0, 1);
  const auto pop = adc::gen_adc_population(3, 0.05, 0.3, 4);
  const auto counts = mvm(tile, {0, 0, 0, 0}, &pop);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(counts[c].p, pop[c].counts[0]);
    EXPECT_EQ(counts[c].n, pop[c].counts[0]);
  }
}

TEST(Mvm, SingleRowLinearPath) {
  Matrix w(4, 1);
  w.at(2, 0) = 0.5;  // only row 2 active, the rest zero
  const auto tile = program_weights(w, 0.0, 1);
  // weight_scale = 0.5 so g = 1.0 on the active cell.
  for (int code : {0, 100, 400, 1023}) {
    const auto counts = mvm(tile, {0, 0, code, 0}, nullptr, 1.0 / 1023.0);
    EXPECT_EQ(counts[0].p, code);
    EXPECT_EQ(counts[0].n, 0);
  }
}

TEST(Mvm, ShapeValidation) {
  Matrix w(4, 2);
  const auto tile = program_weights(w, 0.0, 1);
  EXPECT_THROW(mvm(tile, {1, 2, 3}), ShapeError);
  EXPECT_THROW(program_weights(Matrix(0, 4), 0.0, 1), ShapeError);
  EXPECT_THROW(program_weights(Matrix(300, 4), 0.0, 1), ShapeError);
}

TEST(TileForward, IdentityLayerPassesCodesThrough) {
  const int n = 16;
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) w.at(i, i) = 1.0;
  const auto tile = program_weights(w, 0.0, 1);
  std::vector<ColumnPeriphery> periph(
      n, make_column_periphery(1.0, 0.0, true, kBestArch));
  std::vector<int> codes(n);
  for (int i = 0; i < n; ++i) codes[i] = (i * 9) % 128;
  for (auto kind : {PeripheryKind::Fp32Reference, PeripheryKind::Fp16Behavioral,
                    PeripheryKind::FixedPointNmpu}) {
    const auto out = tile_forward(tile, codes, kind, periph, nullptr, 1.0 / 1023.0);
    for (int i = 0; i < n; ++i) ASSERT_EQ(out[i], codes[i]) << to_string(kind);
  }
}

TEST(TileForward, DriftCompensationWithinOneCount) {
  const auto& t = task();
  SimOptions nominal;
  nominal.periphery = PeripheryKind::FixedPointNmpu;
  nominal.arch = kBestArch;
  nominal.seed = 5;
  SimOptions drifted = nominal;
  drifted.drift = 0.9;  // compensation folds 1/0.9 into the scales

  const auto base_layers = prepare_layers(t.net, t.quant, nominal);
  const auto comp_layers = prepare_layers(t.net, t.quant, drifted);

  std::vector<double> f(t.test.x.cols);
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < t.test.x.cols; ++c) f[c] = t.test.x.at(i, c);
    const auto codes = quantize_input(f, t.quant.input_gain);
    const auto a = tile_forward(base_layers[0].tile, codes, nominal.periphery,
                                base_layers[0].peripheries, nullptr,
                                base_layers[0].tile_gain);
    const auto b = tile_forward(comp_layers[0].tile, codes, drifted.periphery,
                                comp_layers[0].peripheries, nullptr,
                                comp_layers[0].tile_gain);
    for (size_t c = 0; c < a.size(); ++c)
      ASSERT_LE(std::abs(a[c] - b[c]), 1) << "sample " << i << " col " << c;
  }
}

TEST(TileForward, IdentityBnEqualsNoBn) {
  const auto& t = task();
  Mlp with_bn = t.net;
  for (auto& L : with_bn.layers) {
    BnLayer bn;
    bn.gamma.assign(L.W.cols, 1.0);
    bn.beta.assign(L.W.cols, 0.0);
    bn.mean.assign(L.W.cols, 0.0);
    bn.var.assign(L.W.cols, 1.0);
    bn.eps = 0.0;
    L.bn = bn;
  }
  const auto q_bn = calibrate_network(with_bn, t.train);
  SimOptions o;
  o.periphery = PeripheryKind::FixedPointNmpu;
  o.arch = kBestArch;
  o.seed = 3;
  EXPECT_DOUBLE_EQ(run_network(t.net, t.quant, t.test, o),
                   run_network(with_bn, q_bn, t.test, o));
}

// The layer's per-column quantization errors, judged exactly as the
// explorer judges a sample: fixed-point output against the floor-integerized
// golden model of the same registers. The golden model must also agree with
// the independent dyadic oracle.
TEST(CrossModule, LayerErrorsMatchExplorerSemantics) {
  const auto& t = task();
  SimOptions o;
  o.periphery = PeripheryKind::FixedPointNmpu;
  o.arch = kBestArch;
  o.seed = 1;
  const auto layers = prepare_layers(t.net, t.quant, o);
  const auto& pl = layers[0];

  size_t total = 0, mismatched = 0;
  std::vector<double> f(t.test.x.cols);
  for (int i = 0; i < 200; ++i) {
    for (int c = 0; c < t.test.x.cols; ++c) f[c] = t.test.x.at(i, c);
    const auto codes = quantize_input(f, t.quant.input_gain);
    const auto counts = mvm(pl.tile, codes, nullptr, pl.tile_gain);
    for (size_t c = 0; c < counts.size(); ++c) {
      const auto& cfg = pl.peripheries[c].cfg;
      const int hw = datapath::nmpu_process(counts[c].p, counts[c].n, cfg).value;
      const int golden = dse::golden_output(counts[c].p, counts[c].n, cfg);

      oracle::OracleConfig oc;
      oc.scale_p_raw = cfg.scale_p.raw;
      oc.scale_n_raw = cfg.scale_n.raw;
      oc.shift = cfg.shift;
      oc.offset_raw = cfg.offset.raw;
      oc.relu = cfg.relu_enabled;
      const auto want = oracle::oracle_uncut_floor(counts[c].p, counts[c].n, oc);
      ASSERT_EQ(golden, want.value);

      ++total;
      if (dse::q_err(hw, golden) >= 0.5) ++mismatched;
    }
  }
  // A cut-both architecture keeps integer mismatches rare.
  EXPECT_LT(double(mismatched) / double(total), 0.15);
}

TEST(RunNetwork, ReferenceAccuracyAndPeripheryGaps) {
  const auto& t = task();
  EXPECT_GE(mlp_accuracy(t.net, t.test), 0.95);

  double acc[3] = {0, 0, 0};
  const PeripheryKind kinds[3] = {PeripheryKind::Fp32Reference,
                                  PeripheryKind::Fp16Behavioral,
                                  PeripheryKind::FixedPointNmpu};
  const int reps = 5;
  for (int k = 0; k < 3; ++k) {
    for (int rep = 0; rep < reps; ++rep) {
      SimOptions o;
      o.periphery = kinds[k];
      o.arch = kBestArch;
      o.noise_sigma = 0.02;
      o.seed = 400 + rep;
      acc[k] += run_network(t.net, t.quant, t.test, o);
    }
    acc[k] /= reps;
  }
  EXPECT_GE(acc[0], 0.95);
  const double nmpu_drop = acc[0] - acc[2];
  const double fp16_drop = acc[0] - acc[1];
  EXPECT_LE(nmpu_drop, 0.01);
  EXPECT_LE(nmpu_drop, fp16_drop + 0.01);
}

TEST(RunNetwork, IdealPathEqualsSoftwareReference) {
  const auto& t = task();
  SimOptions o;
  o.periphery = PeripheryKind::Fp32Reference;
  o.noise_sigma = 0.0;
  o.seed = 9;
  EXPECT_DOUBLE_EQ(run_network(t.net, t.quant, t.test, o),
                   quantized_reference_accuracy(t.net, t.quant, t.test));

  // Integer activations equal across the whole forward pass.
  const auto layers = prepare_layers(t.net, t.quant, o);
  std::vector<double> f(t.test.x.cols);
  for (int i = 0; i < 50; ++i) {
    for (int c = 0; c < t.test.x.cols; ++c) f[c] = t.test.x.at(i, c);
    ASSERT_EQ(network_forward(layers, t.quant, f, o),
              quantized_reference_forward(t.net, t.quant, f));
  }
}

TEST(RunNetwork, MvmNoiseDominatesPeripheryChoice) {
  const auto& t = task();
  const PeripheryKind kinds[3] = {PeripheryKind::Fp32Reference,
                                  PeripheryKind::Fp16Behavioral,
                                  PeripheryKind::FixedPointNmpu};
  const int reps = 4;
  double acc[2][3] = {};
  const double noises[2] = {0.0, 0.1};
  for (int ni = 0; ni < 2; ++ni) {
    for (int k = 0; k < 3; ++k) {
      for (int rep = 0; rep < reps; ++rep) {
        SimOptions o;
        o.periphery = kinds[k];
        o.arch = kBestArch;
        o.noise_sigma = noises[ni];
        o.seed = 900 + rep;
        acc[ni][k] += run_network(t.net, t.quant, t.test, o);
      }
      acc[ni][k] /= reps;
    }
  }
  double min_noise_delta = 1.0, max_swap_delta = 0.0;
  for (int k = 0; k < 3; ++k)
    min_noise_delta = std::min(min_noise_delta, std::fabs(acc[0][k] - acc[1][k]));
  for (int ni = 0; ni < 2; ++ni)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        max_swap_delta = std::max(max_swap_delta, std::fabs(acc[ni][a] - acc[ni][b]));
  EXPECT_GT(min_noise_delta, max_swap_delta);
}

TEST(Containers, NetworkRoundTrip) {
  const auto& t = task();
  Mlp with_bn = t.net;
  BnLayer bn;
  const int cols = with_bn.layers[0].W.cols;
  bn.gamma.assign(cols, 1.25);
  bn.beta.assign(cols, -0.5);
  bn.mean.assign(cols, 0.1);
  bn.var.assign(cols, 2.0);
  bn.eps = 1e-4;
  with_bn.layers[0].bn = bn;

  const auto path = std::filesystem::temp_directory_path() / "nmpu_net_test.bin";
  save_network(path.string(), with_bn);
  const auto back = load_network(path.string());
  ASSERT_EQ(back.layers.size(), with_bn.layers.size());
  for (size_t li = 0; li < back.layers.size(); ++li) {
    ASSERT_EQ(back.layers[li].W.d, with_bn.layers[li].W.d);
    ASSERT_EQ(back.layers[li].bias, with_bn.layers[li].bias);
    ASSERT_EQ(back.layers[li].relu, with_bn.layers[li].relu);
    ASSERT_EQ(back.layers[li].bn.has_value(), with_bn.layers[li].bn.has_value());
  }
  ASSERT_TRUE(back.layers[0].bn.has_value());
  EXPECT_EQ(back.layers[0].bn->gamma, bn.gamma);
  EXPECT_EQ(back.layers[0].bn->eps, bn.eps);
  std::filesystem::remove(path);

  EXPECT_THROW(load_network("/nonexistent/net.bin"), std::runtime_error);
}

TEST(Containers, DatasetCsvRoundTrip) {
  const auto d = make_toy_dataset(20, 123, 8, 4);
  const auto text = dataset_csv(d);
  const auto back = parse_dataset_csv(text, 4);
  ASSERT_EQ(back.x.rows, d.x.rows);
  ASSERT_EQ(back.x.cols, d.x.cols);
  EXPECT_EQ(back.labels, d.labels);
  for (size_t i = 0; i < d.x.d.size(); ++i) ASSERT_NEAR(back.x.d[i], d.x.d[i], 1e-9);
  EXPECT_THROW(parse_dataset_csv("", 4), ShapeError);
}

TEST(Calibration, ScalesRepresentable) {
  const auto& t = task();
  for (const auto& cal : t.quant.layers) {
    for (double s : cal.col_scale) {
      EXPECT_GT(s, 0.0);
      EXPECT_LE(s, 1.9);
      EXPECT_NO_THROW(datapath::quantize_params(s, 0.0));
    }
  }
}

}  // namespace

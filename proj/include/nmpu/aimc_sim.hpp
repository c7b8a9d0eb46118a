#pragma once

// Toy-scale analog in-memory compute harness: differential conductance
// tiles with programming noise and drift, ADC conversion through the
// synthetic curve population (or an ideal linear converter), and pluggable
// per-column digital periphery (wide-float reference, behavioral binary16,
// or the fixed-point unit). A small dense-network trainer and a synthetic
// classification task feed the end-to-end accuracy comparisons.
//
// Code conventions along the chain:
//   * layer inputs are unsigned codes, 10 bits at the first layer, the
//     8-bit non-negative activations (zero-extended) afterwards;
//   * a per-layer analog gain maps accumulated charge onto the converter
//     range, calibrated so the strongest calibration-set column peaks near
//     90% of full scale;
//   * the periphery scale/offset absorb the layer's activation rescaling,
//     bias, batch-norm folding, per-ADC correction and drift compensation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adc_model.hpp"
#include "datapath.hpp"
#include "dse.hpp"
#include "util.hpp"

namespace nmpu::aimc {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), d(size_t(r) * c, 0.0) {}
  double& at(int r, int c) { return d[size_t(r) * cols + c]; }
  double at(int r, int c) const { return d[size_t(r) * cols + c]; }
};

constexpr int kMaxTileDim = 256;

struct Tile {
  Matrix g_pos;  // conductances in [0, 1]
  Matrix g_neg;
  double weight_scale = 1.0;  // w ~ (g_pos - g_neg) * weight_scale
  double noise_sigma = 0.0;
  double drift_factor = 1.0;

  int rows() const { return g_pos.rows; }
  int cols() const { return g_pos.cols; }
};

// Map signed weights onto the differential conductance pair, normalized so
// the largest magnitude hits conductance 1, with multiplicative programming
// noise.
inline Tile program_weights(const Matrix& w, double noise_sigma, uint64_t seed,
                            double drift_factor = 1.0) {
  if (w.rows < 1 || w.cols < 1 || w.rows > kMaxTileDim || w.cols > kMaxTileDim)
    throw ShapeError("tile dimensions out of range");
  Tile t;
  t.g_pos = Matrix(w.rows, w.cols);
  t.g_neg = Matrix(w.rows, w.cols);
  t.noise_sigma = noise_sigma;
  t.drift_factor = drift_factor;
  double wmax = 0.0;
  for (double v : w.d) wmax = std::max(wmax, std::fabs(v));
  t.weight_scale = wmax > 0.0 ? wmax : 1.0;
  for (int c = 0; c < w.cols; ++c) {
    Rng rng(seed, uint64_t(c));  // one noise stream per column
    for (int r = 0; r < w.rows; ++r) {
      const double v = w.at(r, c) / t.weight_scale;
      double gp = v > 0.0 ? v : 0.0;
      double gn = v < 0.0 ? -v : 0.0;
      if (noise_sigma > 0.0) {
        gp *= 1.0 + noise_sigma * rng.next_normal();
        gn *= 1.0 + noise_sigma * rng.next_normal();
      } else {
        rng.next_normal();  // keep streams aligned across noise settings
        rng.next_normal();
      }
      t.g_pos.at(r, c) = std::clamp(gp, 0.0, 1.0);
      t.g_neg.at(r, c) = std::clamp(gn, 0.0, 1.0);
    }
  }
  return t;
}

// Recover the stored weights from the conductance pair (test hook; exact
// when programmed without noise).
inline Matrix dequantize_weights(const Tile& t) {
  Matrix w(t.rows(), t.cols());
  for (size_t i = 0; i < w.d.size(); ++i)
    w.d[i] = (t.g_pos.d[i] - t.g_neg.d[i]) * t.weight_scale;
  return w;
}

struct ColumnCounts {
  int p = 0;
  int n = 0;
};

inline int ideal_adc(double current) {
  return int(std::clamp(std::floor(1023.0 * std::clamp(current, 0.0, 1.0) + 0.5),
                        0.0, 1023.0));
}

// Differential analog accumulation followed by conversion. tile_gain maps
// accumulated charge onto the normalized current range; 0 selects the
// conservative worst-case normalization 1 / (1023 * rows). A null ADC
// population selects the ideal linear converter.
inline std::vector<ColumnCounts> mvm(const Tile& tile, const std::vector<int>& codes,
                                     const std::vector<adc::AdcCurve>* adcs = nullptr,
                                     double tile_gain = 0.0) {
  if (int(codes.size()) != tile.rows())
    throw ShapeError("input length " + std::to_string(codes.size()) +
                     " does not match tile rows " + std::to_string(tile.rows()));
  const double gain = tile_gain > 0.0 ? tile_gain : 1.0 / (1023.0 * tile.rows());
  std::vector<ColumnCounts> out(tile.cols());
  for (int c = 0; c < tile.cols(); ++c) {
    double yp = 0.0, yn = 0.0;
    for (int r = 0; r < tile.rows(); ++r) {
      yp += double(codes[r]) * tile.g_pos.at(r, c);
      yn += double(codes[r]) * tile.g_neg.at(r, c);
    }
    const double ip = std::clamp(yp * tile.drift_factor * gain, 0.0, 1.0);
    const double in = std::clamp(yn * tile.drift_factor * gain, 0.0, 1.0);
    if (adcs) {
      const auto& curve = (*adcs)[c % adcs->size()];
      out[c] = ColumnCounts{adc::convert(curve, ip), adc::convert(curve, in)};
    } else {
      out[c] = ColumnCounts{ideal_adc(ip), ideal_adc(in)};
    }
  }
  return out;
}

enum class PeripheryKind { Fp32Reference, Fp16Behavioral, FixedPointNmpu };

inline const char* to_string(PeripheryKind k) {
  switch (k) {
    case PeripheryKind::Fp32Reference: return "fp32";
    case PeripheryKind::Fp16Behavioral: return "fp16";
    case PeripheryKind::FixedPointNmpu: return "nmpu";
  }
  return "?";
}

// Per-column post-processing parameters: the real-valued pair drives the
// float peripheries, the quantized registers drive the fixed-point unit.
struct ColumnPeriphery {
  double scale = 1.0;
  double offset = 0.0;
  bool relu = true;
  datapath::NmpuConfig cfg;
};

inline ColumnPeriphery make_column_periphery(double scale, double offset, bool relu,
                                             const dse::Architecture& arch) {
  ColumnPeriphery p;
  p.scale = scale;
  p.offset = offset;
  p.relu = relu;
  const auto qp = datapath::quantize_params(scale, offset);
  p.cfg.scale_p = qp.scale_fx;
  p.cfg.scale_n = qp.scale_fx;
  p.cfg.shift = qp.shift;
  p.cfg.offset = qp.offset_fx;
  p.cfg.first_stage = arch.first_stage;
  p.cfg.second_stage = arch.second_stage;
  p.cfg.relu_enabled = relu;
  return p;
}

inline int clamp_i8(double v) { return int(std::clamp(v, -128.0, 127.0)); }

inline int apply_periphery(const ColumnCounts& counts, const ColumnPeriphery& p,
                           PeripheryKind kind) {
  switch (kind) {
    case PeripheryKind::Fp32Reference: {
      const datapath::RealConfig rc{p.scale, p.scale, p.offset, p.relu};
      const double v = datapath::nmpu_reference(counts.p, counts.n, rc);
      return clamp_i8(std::floor(v + 0.5));
    }
    case PeripheryKind::Fp16Behavioral: {
      const datapath::RealConfig rc{p.scale, p.scale, p.offset, p.relu};
      return int(dse::fp16_baseline(counts.p, counts.n, rc));
    }
    case PeripheryKind::FixedPointNmpu:
      return datapath::nmpu_process(counts.p, counts.n, p.cfg).value;
  }
  return 0;
}

inline std::vector<int> tile_forward(const Tile& tile, const std::vector<int>& codes,
                                     PeripheryKind kind,
                                     const std::vector<ColumnPeriphery>& peripheries,
                                     const std::vector<adc::AdcCurve>* adcs = nullptr,
                                     double tile_gain = 0.0) {
  if (int(peripheries.size()) != tile.cols())
    throw ShapeError("periphery list does not match tile columns");
  const auto counts = mvm(tile, codes, adcs, tile_gain);
  std::vector<int> out(tile.cols());
  for (int c = 0; c < tile.cols(); ++c)
    out[c] = apply_periphery(counts[c], peripheries[c], kind);
  return out;
}

// ---- network description ----

struct BnLayer {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;
};

struct LayerSpec {
  Matrix W;                  // in x out
  std::vector<double> bias;  // per output unit
  bool relu = true;
  std::optional<BnLayer> bn;
};

struct Mlp {
  std::vector<LayerSpec> layers;
};

// Float forward pass (the software network the tiles approximate).
inline std::vector<double> mlp_forward(const Mlp& net, const std::vector<double>& x) {
  std::vector<double> act = x;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const auto& L = net.layers[li];
    if (int(act.size()) != L.W.rows) throw ShapeError("layer input size mismatch");
    std::vector<double> next(L.W.cols, 0.0);
    for (int c = 0; c < L.W.cols; ++c) {
      double a = L.bias.empty() ? 0.0 : L.bias[c];
      for (int r = 0; r < L.W.rows; ++r) a += act[r] * L.W.at(r, c);
      if (L.bn) {
        const auto& bn = *L.bn;
        a = bn.gamma[c] * (a - bn.mean[c]) / std::sqrt(bn.var[c] + bn.eps) + bn.beta[c];
      }
      next[c] = (L.relu && a < 0.0) ? 0.0 : a;
    }
    act = std::move(next);
  }
  return act;
}

struct Dataset {
  Matrix x;  // samples x features, values in [0, 1]
  std::vector<int> labels;
  int classes = 10;
};

inline int argmax_index(const std::vector<double>& v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double mlp_accuracy(const Mlp& net, const Dataset& data) {
  int hits = 0;
  std::vector<double> x(data.x.cols);
  for (int i = 0; i < data.x.rows; ++i) {
    for (int c = 0; c < data.x.cols; ++c) x[c] = data.x.at(i, c);
    if (argmax_index(mlp_forward(net, x)) == data.labels[i]) ++hits;
  }
  return double(hits) / double(data.x.rows);
}

// Synthetic 10-class task in the unit cube: five well-separated class
// pairs whose two members sit a controlled margin apart. Class centers come
// from a fixed task stream so train/test splits generated with different
// seeds share the same geometry. The pair margin sets how much of the task
// rides on tight decision boundaries that analog weight noise can flip.
inline Dataset make_toy_dataset(int n, uint64_t seed, int features = 64,
                                int classes = 10, double spread = 0.20,
                                double pair_margin = 0.95) {
  constexpr uint64_t kTaskSeed = 0xA1C0DA7Aull;
  Dataset d;
  d.classes = classes;
  d.x = Matrix(n, features);
  d.labels.resize(n);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(features));
  for (int k = 0; k + 1 < classes; k += 2) {
    Rng rng(kTaskSeed, uint64_t(k));
    std::vector<double> axis(features);
    double norm = 0.0;
    for (int f = 0; f < features; ++f) {
      axis[f] = rng.next_normal();
      norm += axis[f] * axis[f];
    }
    norm = std::sqrt(norm);
    for (int f = 0; f < features; ++f) {
      const double base = 0.25 + 0.5 * rng.next_unit();
      const double delta = 0.5 * pair_margin * axis[f] / norm;
      centers[k][f] = base + delta;
      centers[k + 1][f] = base - delta;
    }
  }
  Rng rng(seed, 1);
  for (int i = 0; i < n; ++i) {
    const int label = i % classes;
    d.labels[i] = label;
    for (int f = 0; f < features; ++f)
      d.x.at(i, f) = std::clamp(centers[label][f] + spread * rng.next_normal(), 0.0, 1.0);
  }
  return d;
}

// Minimal softmax-cross-entropy SGD trainer for the bundled task.
inline Mlp train_reference_mlp(const Dataset& train, uint64_t seed, int hidden = 32,
                               int epochs = 40, double lr0 = 0.02) {
  const int in_dim = train.x.cols;
  const int out_dim = train.classes;
  Mlp net;
  net.layers.resize(2);
  net.layers[0].W = Matrix(in_dim, hidden);
  net.layers[0].bias.assign(hidden, 0.0);
  net.layers[0].relu = true;
  net.layers[1].W = Matrix(hidden, out_dim);
  net.layers[1].bias.assign(out_dim, 0.0);
  net.layers[1].relu = false;

  Rng init(seed, 100);
  for (auto& v : net.layers[0].W.d) v = std::sqrt(2.0 / in_dim) * init.next_normal();
  for (auto& v : net.layers[1].W.d) v = std::sqrt(2.0 / hidden) * init.next_normal();

  const int n = train.x.rows;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng shuffle_rng(seed, 200);

  std::vector<double> x(in_dim), h(hidden), z(out_dim), p(out_dim), dh(hidden);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr0 * std::pow(0.5, epoch / 15);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[size_t(shuffle_rng.next_below(uint64_t(i + 1)))]);
    for (int idx : order) {
      for (int f = 0; f < in_dim; ++f) x[f] = train.x.at(idx, f);
      auto& L0 = net.layers[0];
      auto& L1 = net.layers[1];
      for (int j = 0; j < hidden; ++j) {
        double a = L0.bias[j];
        for (int f = 0; f < in_dim; ++f) a += x[f] * L0.W.at(f, j);
        h[j] = a > 0.0 ? a : 0.0;
      }
      double zmax = -1e300;
      for (int k = 0; k < out_dim; ++k) {
        double a = L1.bias[k];
        for (int j = 0; j < hidden; ++j) a += h[j] * L1.W.at(j, k);
        z[k] = a;
        zmax = std::max(zmax, a);
      }
      double zsum = 0.0;
      for (int k = 0; k < out_dim; ++k) zsum += std::exp(z[k] - zmax);
      for (int k = 0; k < out_dim; ++k) p[k] = std::exp(z[k] - zmax) / zsum;

      const int y = train.labels[idx];
      // Hidden gradient uses the pre-update output weights.
      for (int j = 0; j < hidden; ++j) {
        if (h[j] <= 0.0) {
          dh[j] = 0.0;
          continue;
        }
        double g = 0.0;
        for (int k = 0; k < out_dim; ++k) g += (p[k] - (k == y ? 1.0 : 0.0)) * L1.W.at(j, k);
        dh[j] = g;
      }
      for (int k = 0; k < out_dim; ++k) {
        const double dz = p[k] - (k == y ? 1.0 : 0.0);
        for (int j = 0; j < hidden; ++j) L1.W.at(j, k) -= lr * dz * h[j];
        L1.bias[k] -= lr * dz;
      }
      for (int j = 0; j < hidden; ++j) {
        if (dh[j] == 0.0) continue;
        for (int f = 0; f < in_dim; ++f) L0.W.at(f, j) -= lr * dh[j] * x[f];
        L0.bias[j] -= lr * dh[j];
      }
    }
  }
  return net;
}

// ---- activation quantization calibration ----

struct LayerCalib {
  double tile_gain = 0.0;
  double code_per_act = 1.0;              // k_out: output codes per unit activation
  std::vector<double> col_scale;          // periphery scale before ADC correction
  std::vector<double> col_offset;
};

struct NetworkQuant {
  std::vector<LayerCalib> layers;
  double input_gain = 1023.0;  // codes per unit feature at the first layer
};

inline std::vector<int> quantize_input(const std::vector<double>& f, double gain) {
  std::vector<int> codes(f.size());
  for (size_t i = 0; i < f.size(); ++i)
    codes[i] = int(std::clamp(std::floor(gain * std::clamp(f[i], 0.0, 1.0) + 0.5),
                              0.0, 1023.0));
  return codes;
}

// Ideal-path calibration: per layer pick the analog gain so the hottest
// calibration column peaks near 90% of the converter range, then choose the
// activation scale so the hottest output sits near code 100.
inline NetworkQuant calibrate_network(const Mlp& net, const Dataset& calib) {
  NetworkQuant q;
  q.layers.resize(net.layers.size());

  // Float activations per layer for the activation-range estimate.
  std::vector<std::vector<double>> acts(calib.x.rows, std::vector<double>(calib.x.cols));
  for (int i = 0; i < calib.x.rows; ++i)
    for (int c = 0; c < calib.x.cols; ++c) acts[i][c] = calib.x.at(i, c);

  double k_in = q.input_gain;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const auto& L = net.layers[li];
    auto& cal = q.layers[li];
    double wmax = 0.0;
    for (double v : L.W.d) wmax = std::max(wmax, std::fabs(v));
    if (wmax == 0.0) wmax = 1.0;

    // Max accumulated charge over the calibration set, per polarity.
    double ymax = 0.0;
    for (const auto& f : acts) {
      for (int c = 0; c < L.W.cols; ++c) {
        double yp = 0.0, yn = 0.0;
        for (int r = 0; r < L.W.rows; ++r) {
          const double g = L.W.at(r, c) / wmax;
          const double code = std::floor(k_in * std::clamp(f[r], 0.0, 1e18) + 0.5);
          if (g > 0.0)
            yp += code * g;
          else
            yn -= code * g;
        }
        ymax = std::max({ymax, yp, yn});
      }
    }
    cal.tile_gain = ymax > 0.0 ? 0.9 / ymax : 1.0;
    const double beta = 1023.0 * cal.tile_gain * k_in / wmax;  // counts per weight-sum

    // Post-BN pre-activation range on the float path.
    double amax = 0.0;
    std::vector<std::vector<double>> next(acts.size());
    for (size_t i = 0; i < acts.size(); ++i) {
      std::vector<double> a(L.W.cols, 0.0);
      for (int c = 0; c < L.W.cols; ++c) {
        double s = L.bias.empty() ? 0.0 : L.bias[c];
        for (int r = 0; r < L.W.rows; ++r) s += acts[i][r] * L.W.at(r, c);
        if (L.bn) {
          const auto& bn = *L.bn;
          s = bn.gamma[c] * (s - bn.mean[c]) / std::sqrt(bn.var[c] + bn.eps) + bn.beta[c];
        }
        a[c] = s;
        amax = std::max(amax, std::fabs(s));
      }
      for (auto& v : a)
        if (L.relu && v < 0.0) v = 0.0;
      next[i] = std::move(a);
    }
    if (amax == 0.0) amax = 1.0;
    double k_out = 100.0 / amax;

    // Periphery registers must stay inside the representable scale range.
    const auto fold_col = [&](int c) {
      datapath::AffinePair affine{1.0 / beta, L.bias.empty() ? 0.0 : L.bias[c]};
      if (L.bn) {
        const auto& bn = *L.bn;
        return datapath::fold_bn(affine,
                                 {bn.gamma[c], bn.beta[c], bn.mean[c], bn.var[c], bn.eps});
      }
      return affine;
    };
    double max_scale = 0.0;
    for (int c = 0; c < L.W.cols; ++c)
      max_scale = std::max(max_scale, std::fabs(fold_col(c).scale));
    if (k_out * max_scale > 1.9) k_out = 1.9 / max_scale;

    cal.code_per_act = k_out;
    cal.col_scale.resize(L.W.cols);
    cal.col_offset.resize(L.W.cols);
    for (int c = 0; c < L.W.cols; ++c) {
      const auto folded = fold_col(c);
      cal.col_scale[c] = k_out * folded.scale;
      cal.col_offset[c] = k_out * folded.offset;
    }
    acts = std::move(next);
    k_in = k_out;
  }
  return q;
}

// ---- end-to-end runs ----

struct SimOptions {
  PeripheryKind periphery = PeripheryKind::Fp32Reference;
  dse::Architecture arch = {"M5-S1", datapath::FirstStageMethod::M5,
                            datapath::SecondStageMethod::S1};
  double noise_sigma = 0.0;
  double drift = 1.0;
  bool compensate_drift = true;
  const std::vector<adc::AdcCurve>* adcs = nullptr;            // null = ideal linear
  const std::vector<adc::AffineParams>* adc_correction = nullptr;  // optional, with adcs
  uint64_t seed = 0;
};

struct PreparedLayer {
  Tile tile;
  std::vector<ColumnPeriphery> peripheries;
  double tile_gain = 0.0;
};

inline std::vector<PreparedLayer> prepare_layers(const Mlp& net, const NetworkQuant& q,
                                                 const SimOptions& opts) {
  if (net.layers.size() != q.layers.size())
    throw ShapeError("calibration does not match network depth");
  std::vector<PreparedLayer> out(net.layers.size());
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const auto& L = net.layers[li];
    const auto& cal = q.layers[li];
    PreparedLayer pl;
    pl.tile = program_weights(L.W, opts.noise_sigma, opts.seed + li * 7919, opts.drift);
    pl.tile_gain = cal.tile_gain;
    pl.peripheries.reserve(L.W.cols);
    const double drift_comp =
        (opts.compensate_drift && opts.drift > 0.0) ? 1.0 / opts.drift : 1.0;
    for (int c = 0; c < L.W.cols; ++c) {
      double scale = cal.col_scale[c] * drift_comp;
      if (opts.adcs && opts.adc_correction)
        scale *= (*opts.adc_correction)[c % opts.adc_correction->size()].scale_aff;
      pl.peripheries.push_back(
          make_column_periphery(scale, cal.col_offset[c], L.relu, opts.arch));
    }
    out[li] = std::move(pl);
  }
  return out;
}

inline std::vector<int> network_forward(const std::vector<PreparedLayer>& layers,
                                        const NetworkQuant& q,
                                        const std::vector<double>& features,
                                        const SimOptions& opts) {
  std::vector<int> codes = quantize_input(features, q.input_gain);
  for (size_t li = 0; li < layers.size(); ++li) {
    const auto& pl = layers[li];
    codes = tile_forward(pl.tile, codes, opts.periphery, pl.peripheries, opts.adcs,
                         pl.tile_gain);
    if (li + 1 < layers.size()) {
      // ReLU outputs are non-negative 8-bit codes; zero-extend to the next
      // tile's input width.
      for (auto& v : codes) v = std::max(v, 0);
    }
  }
  return codes;
}

inline double run_network(const Mlp& net, const NetworkQuant& q, const Dataset& test,
                          const SimOptions& opts) {
  const auto layers = prepare_layers(net, q, opts);
  std::vector<int> hits(test.x.rows, 0);
  parallel_for(size_t(test.x.rows), [&](size_t i) {
    std::vector<double> f(test.x.cols);
    for (int c = 0; c < test.x.cols; ++c) f[c] = test.x.at(int(i), c);
    const auto logits = network_forward(layers, q, f, opts);
    const int pred = int(std::max_element(logits.begin(), logits.end()) - logits.begin());
    hits[i] = pred == test.labels[int(i)] ? 1 : 0;
  });
  int total = 0;
  for (int h : hits) total += h;
  return double(total) / double(test.x.rows);
}

// Plain software mirror of the ideal analog path (no tiles, no curves):
// exact reference for the zero-nonideality equality check and the software
// accuracy row.
inline std::vector<int> quantized_reference_forward(const Mlp& net, const NetworkQuant& q,
                                                    const std::vector<double>& features) {
  std::vector<int> codes = quantize_input(features, q.input_gain);
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const auto& L = net.layers[li];
    const auto& cal = q.layers[li];
    double wmax = 0.0;
    for (double v : L.W.d) wmax = std::max(wmax, std::fabs(v));
    if (wmax == 0.0) wmax = 1.0;
    std::vector<int> next(L.W.cols, 0);
    for (int c = 0; c < L.W.cols; ++c) {
      double yp = 0.0, yn = 0.0;
      for (int r = 0; r < L.W.rows; ++r) {
        const double g = L.W.at(r, c) / wmax;
        if (g > 0.0)
          yp += double(codes[r]) * g;
        else
          yn -= double(codes[r]) * g;
      }
      const int cp = ideal_adc(yp * cal.tile_gain);
      const int cn = ideal_adc(yn * cal.tile_gain);
      const double v =
          double(cp) * cal.col_scale[c] - double(cn) * cal.col_scale[c] + cal.col_offset[c];
      const double relu_v = (L.relu && v < 0.0) ? 0.0 : v;
      next[c] = clamp_i8(std::floor(relu_v + 0.5));
    }
    codes.assign(next.begin(), next.end());
    if (li + 1 < net.layers.size())
      for (auto& v : codes) v = std::max(v, 0);
  }
  return codes;
}

inline double quantized_reference_accuracy(const Mlp& net, const NetworkQuant& q,
                                           const Dataset& test) {
  int hits = 0;
  std::vector<double> f(test.x.cols);
  for (int i = 0; i < test.x.rows; ++i) {
    for (int c = 0; c < test.x.cols; ++c) f[c] = test.x.at(i, c);
    const auto logits = quantized_reference_forward(net, q, f);
    const int pred = int(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == test.labels[i]) ++hits;
  }
  return double(hits) / double(test.x.rows);
}

// ---- portable tensor container and dataset CSV ----

namespace io {

constexpr char kMagic[8] = {'N', 'M', 'P', 'U', 'T', 'N', 'S', '1'};

struct NamedArray {
  std::string name;
  std::vector<uint64_t> dims;
  std::vector<double> data;
};

inline void write_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
inline void write_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

inline std::string pack_arrays(const std::vector<NamedArray>& arrays) {
  std::string out(kMagic, sizeof(kMagic));
  write_u32(out, uint32_t(arrays.size()));
  for (const auto& a : arrays) {
    write_u32(out, uint32_t(a.name.size()));
    out += a.name;
    write_u32(out, uint32_t(a.dims.size()));
    uint64_t count = 1;
    for (uint64_t d : a.dims) {
      write_u64(out, d);
      count *= d;
    }
    if (count != a.data.size()) throw ShapeError("array dims mismatch in " + a.name);
    for (double v : a.data) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      write_u64(out, bits);
    }
  }
  return out;
}

inline std::vector<NamedArray> unpack_arrays(const std::string& blob) {
  size_t pos = 0;
  const auto need = [&](size_t n) {
    if (pos + n > blob.size()) throw ShapeError("truncated tensor container");
  };
  const auto read_u32 = [&]() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(blob[pos++])) << (8 * i);
    return v;
  };
  const auto read_u64 = [&]() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(blob[pos++])) << (8 * i);
    return v;
  };
  need(sizeof(kMagic));
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw ShapeError("bad tensor container magic");
  pos = sizeof(kMagic);
  std::vector<NamedArray> arrays(read_u32());
  for (auto& a : arrays) {
    const uint32_t name_len = read_u32();
    need(name_len);
    a.name = blob.substr(pos, name_len);
    pos += name_len;
    a.dims.resize(read_u32());
    uint64_t count = 1;
    for (auto& d : a.dims) {
      d = read_u64();
      count *= d;
    }
    a.data.resize(count);
    for (auto& v : a.data) {
      const uint64_t bits = read_u64();
      std::memcpy(&v, &bits, 8);
    }
  }
  return arrays;
}

}  // namespace io

inline void save_network(const std::string& path, const Mlp& net) {
  std::vector<io::NamedArray> arrays;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const auto& L = net.layers[li];
    const std::string prefix = "L" + std::to_string(li) + ".";
    arrays.push_back({prefix + "W",
                      {uint64_t(L.W.rows), uint64_t(L.W.cols)},
                      L.W.d});
    arrays.push_back({prefix + "b", {uint64_t(L.bias.size())}, L.bias});
    arrays.push_back({prefix + "relu", {1}, {L.relu ? 1.0 : 0.0}});
    if (L.bn) {
      arrays.push_back({prefix + "bn.gamma", {uint64_t(L.bn->gamma.size())}, L.bn->gamma});
      arrays.push_back({prefix + "bn.beta", {uint64_t(L.bn->beta.size())}, L.bn->beta});
      arrays.push_back({prefix + "bn.mean", {uint64_t(L.bn->mean.size())}, L.bn->mean});
      arrays.push_back({prefix + "bn.var", {uint64_t(L.bn->var.size())}, L.bn->var});
      arrays.push_back({prefix + "bn.eps", {1}, {L.bn->eps}});
    }
  }
  atomic_write_file(path, io::pack_arrays(arrays));
}

inline Mlp load_network(const std::string& path) {
  const auto arrays = io::unpack_arrays(read_file(path));
  const auto find = [&](const std::string& name) -> const io::NamedArray* {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  };
  Mlp net;
  for (size_t li = 0;; ++li) {
    const std::string prefix = "L" + std::to_string(li) + ".";
    const auto* w = find(prefix + "W");
    if (!w) break;
    if (w->dims.size() != 2) throw ShapeError("weight array must be 2-d");
    LayerSpec L;
    L.W = Matrix(int(w->dims[0]), int(w->dims[1]));
    L.W.d = w->data;
    if (const auto* b = find(prefix + "b")) L.bias = b->data;
    if (const auto* r = find(prefix + "relu")) L.relu = r->data.at(0) != 0.0;
    if (const auto* g = find(prefix + "bn.gamma")) {
      BnLayer bn;
      bn.gamma = g->data;
      bn.beta = find(prefix + "bn.beta")->data;
      bn.mean = find(prefix + "bn.mean")->data;
      bn.var = find(prefix + "bn.var")->data;
      bn.eps = find(prefix + "bn.eps")->data.at(0);
      L.bn = bn;
    }
    net.layers.push_back(std::move(L));
  }
  if (net.layers.empty()) throw ShapeError("container holds no layers");
  return net;
}

inline std::string dataset_csv(const Dataset& d) {
  std::ostringstream os;
  for (int c = 0; c < d.x.cols; ++c) os << 'f' << c << ',';
  os << "label\n";
  for (int i = 0; i < d.x.rows; ++i) {
    for (int c = 0; c < d.x.cols; ++c) os << fmt_general(d.x.at(i, c)) << ',';
    os << d.labels[i] << '\n';
  }
  return os.str();
}

inline Dataset parse_dataset_csv(const std::string& text, int classes = 10) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == 'f') continue;  // header
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2) throw ShapeError("dataset row too short");
    labels.push_back(int(vals.back()));
    vals.pop_back();
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ShapeError("empty dataset");
  Dataset d;
  d.classes = classes;
  d.x = Matrix(int(rows.size()), int(rows[0].size()));
  d.labels = labels;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != size_t(d.x.cols)) throw ShapeError("ragged dataset rows");
    for (int c = 0; c < d.x.cols; ++c) d.x.at(int(i), c) = rows[i][c];
  }
  return d;
}

}  // namespace nmpu::aimc

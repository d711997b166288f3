#pragma once

// Two-layer LSTM with a logistic read-out, trained by full-sequence
// backpropagation through time with Adam and gradient-norm clipping.
// The streaming step and the batch forward share one cell kernel, so both
// routes produce bitwise-identical activations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/errors.hpp"
#include "iid/features.hpp"
#include "iid/metrics.hpp"
#include "iid/rng.hpp"

namespace iid {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 240;
  double grad_clip = 5.0;
  double weight_decay = 0.0;    // decoupled, applied after the Adam step
  double input_dropout = -1.0;  // per-sequence feature blanking probability;
                                // -1 selects the per-kind default
  int patience = 30;
  double positive_weight = 0.0;  // 0 selects (#negative / #positive) frames
  int hidden_dim = 0;            // 0 selects the per-kind default
  int proj_dim = -1;  // input bottleneck width; -1 per-kind default, 0 off
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Hidden width per feature set, scaled roughly with the input dimension.
inline int default_hidden_dim(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::C: return 12;
    case FeatureSetKind::CH: return 32;
    case FeatureSetKind::M: return 10;
    case FeatureSetKind::CHM: return 34;
    case FeatureSetKind::FULL: return 32;
  }
  throw Error("unreachable feature kind");
}

/// Width of the linear bottleneck in front of the recurrence. Only the
/// landmark-bearing set is wide enough to need one.
inline int default_proj_dim(FeatureSetKind kind) {
  return kind == FeatureSetKind::FULL ? 20 : 0;
}

/// Per-sequence input dropout, scaled to how wide and collinear the set is.
inline double default_input_dropout(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::C: return 0.3;
    case FeatureSetKind::CH: return 0.3;
    case FeatureSetKind::M: return 0.0;
    case FeatureSetKind::CHM: return 0.2;
    case FeatureSetKind::FULL: return 0.3;
  }
  throw Error("unreachable feature kind");
}

// Flat parameter vector layout. Gate rows within each 4H block are ordered
// input, forget, cell, output.
struct LstmLayout {
  int D = 0, H = 0;
  int Pj = 0;          // linear input projection width; 0 = none
  std::size_t pw = 0;  // projection matrix, Pj x D (bias-free)
  std::size_t w0 = 0, u0 = 0, b0 = 0;  // layer 0: input Pj (or D)
  std::size_t w1 = 0, u1 = 0, b1 = 0;  // layer 1: input H
  std::size_t hw = 0, hb = 0;          // logistic head
  std::size_t total = 0;

  int din0() const { return Pj > 0 ? Pj : D; }
};

inline LstmLayout make_layout(int input_dim, int hidden_dim,
                              int proj_dim = 0) {
  if (input_dim < 1 || hidden_dim < 1 || proj_dim < 0) {
    throw ConfigError("bad lstm dims");
  }
  LstmLayout l;
  l.D = input_dim;
  l.H = hidden_dim;
  l.Pj = proj_dim;
  const std::size_t h = static_cast<std::size_t>(hidden_dim);
  const std::size_t d = static_cast<std::size_t>(input_dim);
  const std::size_t din = proj_dim > 0 ? static_cast<std::size_t>(proj_dim)
                                       : d;
  l.pw = 0;
  l.w0 = l.pw + (proj_dim > 0 ? din * d : 0);
  l.u0 = l.w0 + 4 * h * din;
  l.b0 = l.u0 + 4 * h * h;
  l.w1 = l.b0 + 4 * h;
  l.u1 = l.w1 + 4 * h * h;
  l.b1 = l.u1 + 4 * h * h;
  l.hw = l.b1 + 4 * h;
  l.hb = l.hw + h;
  l.total = l.hb + 1;
  return l;
}

struct LstmModel {
  FeatureSetKind kind = FeatureSetKind::C;
  int input_dim = 0;
  int hidden_dim = 0;
  int proj_dim = 0;  // width of the linear input bottleneck; 0 = none
  std::vector<double> params;
  // Per-feature affine standardization fitted on the training frames and
  // applied inside every forward pass; empty means identity.
  std::vector<double> input_mean, input_scale;
  TrainConfig config;  // resolved values used in training
  int epochs_run = 0;
  double best_val_auroc = 0.0;

  LstmLayout layout() const {
    return make_layout(input_dim, hidden_dim, proj_dim);
  }

  friend bool operator==(const LstmModel&, const LstmModel&) = default;
};

/// Fresh model with uniform(-1/sqrt(H), +1/sqrt(H)) parameters, drawn in
/// flat layout order, and forget-gate biases offset by +1. The projection
/// block, when present, is redrawn at 1/sqrt(D) so its outputs stay near
/// unit scale for standardized inputs.
inline LstmModel make_lstm(FeatureSetKind kind, int input_dim, int hidden_dim,
                           std::uint64_t seed, int proj_dim = 0) {
  LstmModel m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.proj_dim = proj_dim;
  const LstmLayout l = m.layout();
  m.params.resize(l.total);
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  Rng rng(derive_seed(seed, 0x11157));
  for (double& p : m.params) p = rng.uniform(-s, s);
  if (l.Pj > 0) {
    const double sp = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (std::size_t k = l.pw; k < l.w0; ++k) m.params[k] = rng.uniform(-sp, sp);
  }
  const std::size_t h = static_cast<std::size_t>(hidden_dim);
  for (std::size_t j = 0; j < h; ++j) {
    m.params[l.b0 + h + j] += 1.0;
    m.params[l.b1 + h + j] += 1.0;
  }
  return m;
}

struct StreamState {
  std::vector<double> h0, c0, h1, c1;
  long long frames_seen = 0;

  explicit StreamState(int hidden)
      : h0(hidden, 0.0), c0(hidden, 0.0), h1(hidden, 0.0), c1(hidden, 0.0) {}

  void reset() {
    std::fill(h0.begin(), h0.end(), 0.0);
    std::fill(c0.begin(), c0.end(), 0.0);
    std::fill(h1.begin(), h1.end(), 0.0);
    std::fill(c1.begin(), c1.end(), 0.0);
    frames_seen = 0;
  }
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One cell update. gates_out receives the activated i, f, g, o blocks and
// tanh_c_out the tanh of the new cell state; both are required (the
// streaming caller passes scratch space).
inline void lstm_cell(int H, int Din, const double* W, const double* U,
                      const double* b, const double* x, const double* h_prev,
                      const double* c_prev, double* h_out, double* c_out,
                      double* gates_out, double* tanh_c_out) {
  for (int k = 0; k < 4 * H; ++k) {
    double acc = b[k];
    const double* wrow = W + static_cast<std::size_t>(k) * Din;
    for (int j = 0; j < Din; ++j) acc += wrow[j] * x[j];
    const double* urow = U + static_cast<std::size_t>(k) * H;
    for (int j = 0; j < H; ++j) acc += urow[j] * h_prev[j];
    gates_out[k] = acc;
  }
  for (int j = 0; j < H; ++j) gates_out[j] = sigmoid(gates_out[j]);
  for (int j = H; j < 2 * H; ++j) gates_out[j] = sigmoid(gates_out[j]);
  for (int j = 2 * H; j < 3 * H; ++j) gates_out[j] = std::tanh(gates_out[j]);
  for (int j = 3 * H; j < 4 * H; ++j) gates_out[j] = sigmoid(gates_out[j]);
  const double* gi = gates_out;
  const double* gf = gates_out + H;
  const double* gg = gates_out + 2 * H;
  const double* go = gates_out + 3 * H;
  for (int j = 0; j < H; ++j) {
    c_out[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
    tanh_c_out[j] = std::tanh(c_out[j]);
    h_out[j] = go[j] * tanh_c_out[j];
  }
}

// Full forward over one sequence with everything the backward pass needs.
struct ForwardCache {
  int T = 0;
  std::vector<double> x;   // standardized inputs, T x D
  std::vector<double> xp;  // projected inputs, T x Pj (when projecting)
  // per layer: gates (T x 4H), c (T x H), tanh_c (T x H), h (T x H)
  std::vector<double> gates0, c0, tc0, h0;
  std::vector<double> gates1, c1, tc1, h1;
  std::vector<double> z, p;  // head pre-activation and probability, T each
};

// Applies the model's input standardization to one frame.
inline void standardize_input(const LstmModel& m, const double* raw,
                              double* out) {
  const int D = m.input_dim;
  if (m.input_mean.empty()) {
    std::copy(raw, raw + D, out);
    return;
  }
  if (static_cast<int>(m.input_mean.size()) != D ||
      static_cast<int>(m.input_scale.size()) != D) {
    throw ShapeError("standardization size does not match input dim");
  }
  for (int j = 0; j < D; ++j) {
    out[j] = (raw[j] - m.input_mean[j]) / m.input_scale[j];
  }
}

inline void forward_cached(const LstmModel& m,
                           const std::vector<FeatureVector>& feats,
                           ForwardCache& cache) {
  const LstmLayout l = m.layout();
  const int H = l.H, D = l.D, T = static_cast<int>(feats.size());
  cache.T = T;
  cache.x.assign(static_cast<std::size_t>(T) * D, 0.0);
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(feats[t].values.size()) != D) {
      throw ShapeError("feature dimension mismatch at frame " +
                       std::to_string(t));
    }
    standardize_input(m, feats[t].values.data(),
                      &cache.x[static_cast<std::size_t>(t) * D]);
  }
  cache.gates0.assign(static_cast<std::size_t>(T) * 4 * H, 0.0);
  cache.c0.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.tc0.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.h0.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.gates1.assign(static_cast<std::size_t>(T) * 4 * H, 0.0);
  cache.c1.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.tc1.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.h1.assign(static_cast<std::size_t>(T) * H, 0.0);
  cache.z.assign(T, 0.0);
  cache.p.assign(T, 0.0);
  const double* P = m.params.data();
  const int din = l.din0();
  if (l.Pj > 0) {
    cache.xp.assign(static_cast<std::size_t>(T) * l.Pj, 0.0);
    for (int t = 0; t < T; ++t) {
      const double* xt = &cache.x[static_cast<std::size_t>(t) * D];
      double* out = &cache.xp[static_cast<std::size_t>(t) * l.Pj];
      for (int q = 0; q < l.Pj; ++q) {
        const double* row = P + l.pw + static_cast<std::size_t>(q) * D;
        double acc = 0.0;
        for (int j = 0; j < D; ++j) acc += row[j] * xt[j];
        out[q] = acc;
      }
    }
  } else {
    cache.xp.clear();
  }
  const std::vector<double> zeros(H, 0.0);
  for (int t = 0; t < T; ++t) {
    const double* in0 =
        l.Pj > 0 ? &cache.xp[static_cast<std::size_t>(t) * l.Pj]
                 : &cache.x[static_cast<std::size_t>(t) * D];
    const double* h0p = t ? &cache.h0[(t - 1) * static_cast<std::size_t>(H)]
                          : zeros.data();
    const double* c0p = t ? &cache.c0[(t - 1) * static_cast<std::size_t>(H)]
                          : zeros.data();
    lstm_cell(H, din, P + l.w0, P + l.u0, P + l.b0, in0, h0p,
              c0p, &cache.h0[t * static_cast<std::size_t>(H)],
              &cache.c0[t * static_cast<std::size_t>(H)],
              &cache.gates0[t * static_cast<std::size_t>(4 * H)],
              &cache.tc0[t * static_cast<std::size_t>(H)]);
    const double* h1p = t ? &cache.h1[(t - 1) * static_cast<std::size_t>(H)]
                          : zeros.data();
    const double* c1p = t ? &cache.c1[(t - 1) * static_cast<std::size_t>(H)]
                          : zeros.data();
    lstm_cell(H, H, P + l.w1, P + l.u1, P + l.b1,
              &cache.h0[t * static_cast<std::size_t>(H)], h1p, c1p,
              &cache.h1[t * static_cast<std::size_t>(H)],
              &cache.c1[t * static_cast<std::size_t>(H)],
              &cache.gates1[t * static_cast<std::size_t>(4 * H)],
              &cache.tc1[t * static_cast<std::size_t>(H)]);
    double z = P[l.hb];
    const double* h1 = &cache.h1[t * static_cast<std::size_t>(H)];
    for (int j = 0; j < H; ++j) z += P[l.hw + j] * h1[j];
    cache.z[t] = z;
    cache.p[t] = sigmoid(z);
  }
}

// Backward through one cached layer at time t. dh carries the total h
// gradient at t, dc the cell gradient carried from t+1; both are replaced
// with the gradients for t-1. dpre is scratch (4H). dx, when non-null,
// receives the gradient w.r.t. the layer input (overwritten, size Din).
inline void backward_cell(int H, int Din, const double* W, const double* U,
                          const double* gates, const double* tanh_c,
                          const double* c_prev, const double* h_prev,
                          const double* x, std::vector<double>& dh,
                          std::vector<double>& dc, std::vector<double>& dpre,
                          double* gW, double* gU, double* gb, double* dx) {
  const double* gi = gates;
  const double* gf = gates + H;
  const double* gg = gates + 2 * H;
  const double* go = gates + 3 * H;
  for (int j = 0; j < H; ++j) {
    const double d_o = dh[j] * tanh_c[j];
    dpre[3 * H + j] = d_o * go[j] * (1.0 - go[j]);
    dc[j] += dh[j] * go[j] * (1.0 - tanh_c[j] * tanh_c[j]);
    const double d_i = dc[j] * gg[j];
    dpre[j] = d_i * gi[j] * (1.0 - gi[j]);
    const double d_f = dc[j] * c_prev[j];
    dpre[H + j] = d_f * gf[j] * (1.0 - gf[j]);
    const double d_g = dc[j] * gi[j];
    dpre[2 * H + j] = d_g * (1.0 - gg[j] * gg[j]);
  }
  for (int k = 0; k < 4 * H; ++k) {
    const double dp = dpre[k];
    double* gwrow = gW + static_cast<std::size_t>(k) * Din;
    for (int j = 0; j < Din; ++j) gwrow[j] += dp * x[j];
    double* gurow = gU + static_cast<std::size_t>(k) * H;
    for (int j = 0; j < H; ++j) gurow[j] += dp * h_prev[j];
    gb[k] += dp;
  }
  if (dx) {
    for (int j = 0; j < Din; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4 * H; ++k) {
        acc += W[static_cast<std::size_t>(k) * Din + j] * dpre[k];
      }
      dx[j] = acc;
    }
  }
  for (int j = 0; j < H; ++j) {
    double acc = 0.0;
    for (int k = 0; k < 4 * H; ++k) {
      acc += U[static_cast<std::size_t>(k) * H + j] * dpre[k];
    }
    dh[j] = acc;
    dc[j] *= gf[j];
  }
}

inline double stable_bce(double z, bool label) {
  // -[y log p + (1-y) log(1-p)] for p = sigmoid(z), computed from z directly.
  const double y = label ? 1.0 : 0.0;
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace detail

/// Advance the streaming state by one frame and return the intent
/// probability after seeing it.
inline double lstm_step(const LstmModel& m, StreamState& st,
                        const std::vector<double>& x) {
  const LstmLayout l = m.layout();
  if (static_cast<int>(x.size()) != l.D) {
    throw ShapeError("input has " + std::to_string(x.size()) +
                     " features, model expects " + std::to_string(l.D));
  }
  if (static_cast<int>(st.h0.size()) != l.H) {
    throw ShapeError("stream state width does not match the model");
  }
  const double* P = m.params.data();
  std::vector<double> xs(l.D);
  detail::standardize_input(m, x.data(), xs.data());
  std::vector<double> xp;
  if (l.Pj > 0) {
    xp.resize(l.Pj);
    for (int q = 0; q < l.Pj; ++q) {
      const double* row = P + l.pw + static_cast<std::size_t>(q) * l.D;
      double acc = 0.0;
      for (int j = 0; j < l.D; ++j) acc += row[j] * xs[j];
      xp[q] = acc;
    }
  }
  std::vector<double> gates(4 * l.H), tc(l.H), h_new(l.H), c_new(l.H);
  detail::lstm_cell(l.H, l.din0(), P + l.w0, P + l.u0, P + l.b0,
                    l.Pj > 0 ? xp.data() : xs.data(),
                    st.h0.data(), st.c0.data(), h_new.data(), c_new.data(),
                    gates.data(), tc.data());
  st.h0.swap(h_new);
  st.c0.swap(c_new);
  detail::lstm_cell(l.H, l.H, P + l.w1, P + l.u1, P + l.b1, st.h0.data(),
                    st.h1.data(), st.c1.data(), h_new.data(), c_new.data(),
                    gates.data(), tc.data());
  st.h1.swap(h_new);
  st.c1.swap(c_new);
  double z = P[l.hb];
  for (int j = 0; j < l.H; ++j) z += P[l.hw + j] * st.h1[j];
  for (int j = 0; j < l.H; ++j) {
    if (!std::isfinite(st.h1[j]) || !std::isfinite(st.c1[j])) {
      throw NumericalError("non-finite lstm state");
    }
  }
  ++st.frames_seen;
  return detail::sigmoid(z);
}

/// Whole-sequence forward pass; identical arithmetic to streaming steps
/// from a fresh state.
inline std::vector<double> forward_sequence(
    const LstmModel& m, const std::vector<FeatureVector>& feats) {
  detail::ForwardCache cache;
  detail::forward_cached(m, feats, cache);
  return cache.p;
}

/// Loss of one sequence: class weight times the frame-mean binary
/// cross-entropy. Adds parameter gradients into `grads` when non-null.
inline double sequence_loss(const LstmModel& m,
                            const std::vector<FeatureVector>& feats,
                            bool label, double pos_weight,
                            std::vector<double>* grads) {
  if (feats.empty()) throw ShapeError("empty sequence");
  const LstmLayout l = m.layout();
  const int H = l.H, T = static_cast<int>(feats.size());
  detail::ForwardCache cache;
  detail::forward_cached(m, feats, cache);
  const double w = label ? pos_weight : 1.0;
  double loss = 0.0;
  for (int t = 0; t < T; ++t) loss += detail::stable_bce(cache.z[t], label);
  loss = w * loss / static_cast<double>(T);
  if (!grads) return loss;

  if (grads->size() != l.total) throw ShapeError("gradient buffer size");
  const double* P = m.params.data();
  double* G = grads->data();
  const double y = label ? 1.0 : 0.0;
  const int din = l.din0();
  const std::vector<double> zeros(H, 0.0);
  std::vector<double> dh1(H, 0.0), dc1(H, 0.0), dh0(H, 0.0), dc0(H, 0.0);
  std::vector<double> dpre(4 * H), dx(H), dxp(l.Pj > 0 ? l.Pj : 0);
  for (int t = T - 1; t >= 0; --t) {
    const std::size_t th = static_cast<std::size_t>(t) * H;
    const std::size_t tg = static_cast<std::size_t>(t) * 4 * H;
    const double gz = w * (cache.p[t] - y) / static_cast<double>(T);
    const double* h1 = &cache.h1[th];
    for (int j = 0; j < H; ++j) {
      G[l.hw + j] += gz * h1[j];
      dh1[j] += gz * P[l.hw + j];
    }
    G[l.hb] += gz;
    const double* c1_prev = t ? &cache.c1[th - H] : zeros.data();
    const double* h1_prev = t ? &cache.h1[th - H] : zeros.data();
    detail::backward_cell(H, H, P + l.w1, P + l.u1, &cache.gates1[tg],
                          &cache.tc1[th], c1_prev, h1_prev, &cache.h0[th],
                          dh1, dc1, dpre, G + l.w1, G + l.u1, G + l.b1,
                          dx.data());
    for (int j = 0; j < H; ++j) dh0[j] += dx[j];
    const double* c0_prev = t ? &cache.c0[th - H] : zeros.data();
    const double* h0_prev = t ? &cache.h0[th - H] : zeros.data();
    const double* x0 =
        l.Pj > 0 ? &cache.xp[static_cast<std::size_t>(t) * l.Pj]
                 : &cache.x[static_cast<std::size_t>(t) * l.D];
    detail::backward_cell(H, din, P + l.w0, P + l.u0, &cache.gates0[tg],
                          &cache.tc0[th], c0_prev, h0_prev, x0, dh0,
                          dc0, dpre, G + l.w0, G + l.u0, G + l.b0,
                          l.Pj > 0 ? dxp.data() : nullptr);
    if (l.Pj > 0) {
      const double* xt = &cache.x[static_cast<std::size_t>(t) * l.D];
      for (int q = 0; q < l.Pj; ++q) {
        double* grow = G + l.pw + static_cast<std::size_t>(q) * l.D;
        const double dq = dxp[q];
        for (int j = 0; j < l.D; ++j) grow[j] += dq * xt[j];
      }
    }
  }
  return loss;
}

struct GradCheckReport {
  std::map<std::string, double> max_rel_by_block;
  double max_rel = 0.0;
};

/// Compare analytic BPTT gradients against central finite differences on a
/// batch of sequences. Relative error uses a small absolute floor so that
/// near-zero gradient pairs do not blow up the ratio.
inline GradCheckReport gradient_check(
    const LstmModel& model,
    const std::vector<std::pair<std::vector<FeatureVector>, bool>>& batch,
    double fd_step = 1e-5, double pos_weight = 1.0) {
  const LstmLayout l = model.layout();
  std::vector<double> analytic(l.total, 0.0);
  for (const auto& [feats, label] : batch) {
    sequence_loss(model, feats, label, pos_weight, &analytic);
  }
  auto batch_loss = [&](const LstmModel& m) {
    double s = 0.0;
    for (const auto& [feats, label] : batch) {
      s += sequence_loss(m, feats, label, pos_weight, nullptr);
    }
    return s;
  };
  auto block_name = [&](std::size_t k) -> std::string {
    if (k < l.u0) return "layer0.W";
    if (k < l.b0) return "layer0.U";
    if (k < l.w1) return "layer0.b";
    if (k < l.u1) return "layer1.W";
    if (k < l.b1) return "layer1.U";
    if (k < l.hw) return "layer1.b";
    if (k < l.hb) return "head.w";
    return "head.b";
  };
  GradCheckReport rep;
  LstmModel probe = model;
  for (std::size_t k = 0; k < l.total; ++k) {
    const double orig = probe.params[k];
    probe.params[k] = orig + fd_step;
    const double lp = batch_loss(probe);
    probe.params[k] = orig - fd_step;
    const double lm = batch_loss(probe);
    probe.params[k] = orig;
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double rel = std::abs(analytic[k] - fd) /
                       std::max(std::abs(analytic[k]) + std::abs(fd), 1e-4);
    double& cur = rep.max_rel_by_block[block_name(k)];
    cur = std::max(cur, rel);
    rep.max_rel = std::max(rep.max_rel, rel);
  }
  return rep;
}

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
};

inline void write_trainlog_csv(const std::vector<TrainLogRow>& rows,
                               std::ostream& os) {
  os << "epoch,train_loss,val_auroc\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << fmt_real(r.train_loss) << ','
       << fmt_real(r.val_auroc) << '\n';
  }
}

/// Sequential training: one Adam update per sequence, order reshuffled each
/// epoch, early stopping on the validation frame-level AUROC. Returns the
/// parameters of the best validation epoch.
inline LstmModel train_lstm(const Dataset& train, const Dataset& val,
                            FeatureSetKind kind, const TrainConfig& cfg,
                            const ForestModel* gaze = nullptr,
                            std::vector<TrainLogRow>* log = nullptr) {
  if (cfg.learning_rate <= 0 || cfg.epochs < 1 || cfg.patience < 1 ||
      cfg.grad_clip <= 0 || cfg.adam_eps <= 0 || cfg.beta1 <= 0 ||
      cfg.beta1 >= 1 || cfg.beta2 <= 0 || cfg.beta2 >= 1 ||
      cfg.positive_weight < 0 || cfg.hidden_dim < 0 || cfg.weight_decay < 0 ||
      cfg.proj_dim < -1 ||
      !(cfg.input_dropout == -1.0 ||
        (cfg.input_dropout >= 0 && cfg.input_dropout < 1))) {
    throw ConfigError("bad training configuration");
  }
  if (train.sequences.empty() || val.sequences.empty()) {
    throw ShapeError("empty training or validation split");
  }

  const std::size_t n = train.sequences.size();
  std::vector<std::vector<FeatureVector>> feats(n);
  std::vector<char> labels(n);
  std::size_t pos_frames = 0, neg_frames = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sequence& seq = train.sequences[i];
    feats[i] = feature_matrix(seq, kind, gaze);
    labels[i] = seq.label ? 1 : 0;
    (seq.label ? pos_frames : neg_frames) += seq.frames.size();
  }
  if (pos_frames == 0 || neg_frames == 0) {
    throw DegenerateLabels("training split is single-class");
  }
  std::vector<std::vector<FeatureVector>> vfeats(val.sequences.size());
  std::vector<char> vframe_labels;
  bool vpos = false, vneg = false;
  for (std::size_t i = 0; i < val.sequences.size(); ++i) {
    const Sequence& seq = val.sequences[i];
    vfeats[i] = feature_matrix(seq, kind, gaze);
    (seq.label ? vpos : vneg) = true;
    vframe_labels.insert(vframe_labels.end(), seq.frames.size(),
                         seq.label ? 1 : 0);
  }
  if (!vpos || !vneg) {
    throw DegenerateLabels("validation split is single-class");
  }

  const double pos_weight =
      cfg.positive_weight > 0
          ? cfg.positive_weight
          : static_cast<double>(neg_frames) / static_cast<double>(pos_frames);
  const int hidden = cfg.hidden_dim > 0 ? cfg.hidden_dim
                                        : default_hidden_dim(kind);
  const int proj = cfg.proj_dim >= 0 ? cfg.proj_dim : default_proj_dim(kind);
  const double input_dropout = cfg.input_dropout >= 0
                                   ? cfg.input_dropout
                                   : default_input_dropout(kind);
  LstmModel model = make_lstm(kind, feature_dim(kind), hidden, cfg.seed, proj);
  model.config = cfg;
  model.config.positive_weight = pos_weight;
  model.config.hidden_dim = hidden;
  model.config.proj_dim = proj;
  model.config.input_dropout = input_dropout;
  const LstmLayout l = model.layout();

  // Per-feature standardization from the training frames. Near-constant
  // features keep unit scale so they pass through merely centered.
  {
    const int D = l.D;
    std::vector<double> mean(D, 0.0), sq(D, 0.0);
    double count = 0.0;
    for (const auto& seq_feats : feats) {
      for (const FeatureVector& fv : seq_feats) {
        for (int j = 0; j < D; ++j) {
          mean[j] += fv.values[j];
          sq[j] += fv.values[j] * fv.values[j];
        }
        count += 1.0;
      }
    }
    for (int j = 0; j < D; ++j) {
      mean[j] /= count;
      const double var = std::max(0.0, sq[j] / count - mean[j] * mean[j]);
      const double sd = std::sqrt(var);
      sq[j] = sd > 1e-8 ? sd : 1.0;
    }
    model.input_mean = std::move(mean);
    model.input_scale = std::move(sq);
  }

  std::vector<double> grads(l.total), adam_m(l.total, 0.0),
      adam_v(l.total, 0.0);
  long long adam_t = 0;
  std::vector<double> best_params = model.params;
  double best_auroc = -1.0;
  int since_best = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Input dropout blanks whole feature channels for the span of one
  // sequence, which stops the optimizer from co-adapting to incidental
  // per-frame detail in wide inputs. Blanking means pinning the channel at
  // its training mean; kept channels are rescaled around the mean so the
  // standardized activations keep their expected magnitude.
  std::vector<FeatureVector> dropped;
  std::vector<char> keep(l.D);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0xE000ull + static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    double loss_sum = 0.0, weight_sum = 0.0;
    for (std::size_t idx : order) {
      const std::vector<FeatureVector>* seq_in = &feats[idx];
      if (input_dropout > 0.0) {
        const double keep_p = 1.0 - input_dropout;
        bool all = true;
        for (int j = 0; j < l.D; ++j) {
          keep[j] = erng.uniform() < keep_p ? 1 : 0;
          all = all && keep[j];
        }
        if (!all) {
          dropped = feats[idx];
          for (FeatureVector& fv : dropped) {
            for (int j = 0; j < l.D; ++j) {
              const double mu = model.input_mean[j];
              fv.values[j] = keep[j] ? mu + (fv.values[j] - mu) / keep_p : mu;
            }
          }
          seq_in = &dropped;
        }
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      const double loss =
          sequence_loss(model, *seq_in, labels[idx], pos_weight, &grads);
      if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
      double sq = 0.0;
      for (double g : grads) sq += g * g;
      const double norm = std::sqrt(sq);
      const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      ++adam_t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
      for (std::size_t k = 0; k < l.total; ++k) {
        const double g = grads[k] * scale;
        adam_m[k] = cfg.beta1 * adam_m[k] + (1.0 - cfg.beta1) * g;
        adam_v[k] = cfg.beta2 * adam_v[k] + (1.0 - cfg.beta2) * g * g;
        model.params[k] -= cfg.learning_rate * (adam_m[k] / bc1) /
                               (std::sqrt(adam_v[k] / bc2) + cfg.adam_eps) +
                           cfg.learning_rate * cfg.weight_decay *
                               model.params[k];
      }
      loss_sum += loss;
      weight_sum += labels[idx] ? pos_weight : 1.0;
    }
    for (double p : model.params) {
      if (!std::isfinite(p)) throw NumericalError("non-finite parameter");
    }

    std::vector<double> vscores;
    vscores.reserve(vframe_labels.size());
    for (const auto& vf : vfeats) {
      const std::vector<double> probs = forward_sequence(model, vf);
      vscores.insert(vscores.end(), probs.begin(), probs.end());
    }
    const double val_auroc = auroc(vscores, vframe_labels);
    if (log) log->push_back({epoch, loss_sum / weight_sum, val_auroc});
    model.epochs_run = epoch;
    if (val_auroc > best_auroc) {
      best_auroc = val_auroc;
      best_params = model.params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.params = std::move(best_params);
  model.best_val_auroc = best_auroc;
  return model;
}

/// Streaming intent probabilities for every frame of a sequence, from a
/// fresh zero state.
inline std::vector<double> predict_sequence(const LstmModel& m,
                                            const Sequence& seq,
                                            const ForestModel* gaze = nullptr) {
  const std::vector<FeatureVector> feats = feature_matrix(seq, m.kind, gaze);
  StreamState st(m.hidden_dim);
  std::vector<double> probs;
  probs.reserve(feats.size());
  for (const auto& fv : feats) probs.push_back(lstm_step(m, st, fv.values));
  return probs;
}

// ---------------------------------------------------------------------------
// Persistence: line-oriented text container, exact double round-trip.

inline void save_lstm(const LstmModel& m, std::ostream& os) {
  os << "IIDM1\n";
  os << "features " << to_string(m.kind) << '\n';
  os << "input_dim " << m.input_dim << '\n';
  os << "hidden_dim " << m.hidden_dim << '\n';
  os << "proj_dim " << m.proj_dim << '\n';
  os << "learning_rate " << fmt_real(m.config.learning_rate) << '\n';
  os << "beta1 " << fmt_real(m.config.beta1) << '\n';
  os << "beta2 " << fmt_real(m.config.beta2) << '\n';
  os << "adam_eps " << fmt_real(m.config.adam_eps) << '\n';
  os << "epochs " << m.config.epochs << '\n';
  os << "grad_clip " << fmt_real(m.config.grad_clip) << '\n';
  os << "weight_decay " << fmt_real(m.config.weight_decay) << '\n';
  os << "input_dropout " << fmt_real(m.config.input_dropout) << '\n';
  os << "patience " << m.config.patience << '\n';
  os << "positive_weight " << fmt_real(m.config.positive_weight) << '\n';
  os << "hidden_override " << m.config.hidden_dim << '\n';
  os << "proj_override " << m.config.proj_dim << '\n';
  os << "seed " << m.config.seed << '\n';
  os << "epochs_run " << m.epochs_run << '\n';
  os << "best_val_auroc " << fmt_real(m.best_val_auroc) << '\n';
  auto write_block = [&os](const char* key, const std::vector<double>& v) {
    os << key << ' ' << v.size() << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) {
      os << fmt_real(v[i]);
      os << ((i % 8 == 7 || i + 1 == v.size()) ? '\n' : ' ');
    }
  };
  write_block("input_mean", m.input_mean);
  write_block("input_scale", m.input_scale);
  write_block("params", m.params);
  if (!os) throw IoError("lstm write failed");
}

inline void save_lstm(const LstmModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  save_lstm(m, os);
}

namespace detail {

inline std::string expect_kv(std::istream& is, int& ln, const std::string& key) {
  const std::string line = next_line(is, ln);
  std::istringstream ss(line);
  std::string k, rest;
  if (!(ss >> k >> rest) || k != key) {
    throw ParseError(ln, "expected '" + key + " <value>'");
  }
  return rest;
}

}  // namespace detail

inline LstmModel load_lstm(std::istream& is) {
  int ln = 0;
  if (detail::next_line(is, ln) != "IIDM1") {
    throw ParseError(1, "bad magic, expected IIDM1");
  }
  LstmModel m;
  m.kind = parse_feature_kind(detail::expect_kv(is, ln, "features"));
  m.input_dim = std::stoi(detail::expect_kv(is, ln, "input_dim"));
  m.hidden_dim = std::stoi(detail::expect_kv(is, ln, "hidden_dim"));
  m.proj_dim = std::stoi(detail::expect_kv(is, ln, "proj_dim"));
  m.config.learning_rate =
      std::strtod(detail::expect_kv(is, ln, "learning_rate").c_str(), nullptr);
  m.config.beta1 =
      std::strtod(detail::expect_kv(is, ln, "beta1").c_str(), nullptr);
  m.config.beta2 =
      std::strtod(detail::expect_kv(is, ln, "beta2").c_str(), nullptr);
  m.config.adam_eps =
      std::strtod(detail::expect_kv(is, ln, "adam_eps").c_str(), nullptr);
  m.config.epochs = std::stoi(detail::expect_kv(is, ln, "epochs"));
  m.config.grad_clip =
      std::strtod(detail::expect_kv(is, ln, "grad_clip").c_str(), nullptr);
  m.config.weight_decay =
      std::strtod(detail::expect_kv(is, ln, "weight_decay").c_str(), nullptr);
  m.config.input_dropout =
      std::strtod(detail::expect_kv(is, ln, "input_dropout").c_str(), nullptr);
  m.config.patience = std::stoi(detail::expect_kv(is, ln, "patience"));
  m.config.positive_weight = std::strtod(
      detail::expect_kv(is, ln, "positive_weight").c_str(), nullptr);
  m.config.hidden_dim = std::stoi(detail::expect_kv(is, ln, "hidden_override"));
  m.config.proj_dim = std::stoi(detail::expect_kv(is, ln, "proj_override"));
  m.config.seed = std::stoull(detail::expect_kv(is, ln, "seed"));
  m.epochs_run = std::stoi(detail::expect_kv(is, ln, "epochs_run"));
  m.best_val_auroc =
      std::strtod(detail::expect_kv(is, ln, "best_val_auroc").c_str(), nullptr);
  auto read_block = [&is, &ln](const std::string& key,
                               std::vector<double>& out) {
    const std::size_t count =
        std::stoull(detail::expect_kv(is, ln, key));
    out.clear();
    out.reserve(count);
    while (out.size() < count) {
      const std::string line = detail::next_line(is, ln);
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) {
        if (out.size() >= count) {
          throw ParseError(ln, "too many values in " + key);
        }
        out.push_back(std::strtod(tok.c_str(), nullptr));
      }
    }
  };
  read_block("input_mean", m.input_mean);
  read_block("input_scale", m.input_scale);
  read_block("params", m.params);
  if (m.input_dim != feature_dim(m.kind)) {
    throw ParseError(ln, "input_dim inconsistent with feature kind");
  }
  if (m.params.size() != m.layout().total) {
    throw ParseError(ln, "parameter count inconsistent with dimensions");
  }
  const std::size_t dim = static_cast<std::size_t>(m.input_dim);
  if ((!m.input_mean.empty() && m.input_mean.size() != dim) ||
      m.input_scale.size() != m.input_mean.size()) {
    throw ParseError(ln, "standardization size inconsistent with input_dim");
  }
  return m;
}

inline LstmModel load_lstm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return load_lstm(is);
}

}  // namespace iid

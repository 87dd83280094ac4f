#ifndef EEGEMO_NET_HPP
#define EEGEMO_NET_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegemo/linalg.hpp"
#include "eegemo/rng.hpp"
#include "eegemo/tensor.hpp"
#include "eegemo/threadpool.hpp"

namespace eegemo::net {

enum class DropoutMode { Train, Inference };
enum class Activation { Identity, Relu, Softmax };

// Layer stack: BiLSTM (concat merge, sequences) -> dropout -> stacked LSTMs
// (all but the last return sequences; the last emits its final step) with a
// dropout after each -> dense+ReLU -> dense+softmax.
struct ModelConfig {
  uint32_t input_dim = 1;
  uint32_t bilstm_units = 128;
  std::vector<uint32_t> lstm_units{256, 64, 64, 32};
  std::vector<double> dropout_rates{0.6, 0.6, 0.6, 0.6, 0.4};
  uint32_t dense_units = 16;
  uint32_t n_classes = 9;

  void validate() const;
  size_t param_count() const;
};

enum class BlockKind { LstmKernel, LstmRecurrent, LstmBias, DenseKernel, DenseBias };

struct ParamBlock {
  std::string name;
  BlockKind kind;
  size_t offset = 0;
  size_t rows = 0, cols = 0;  // biases: rows = 1
  size_t hidden = 0;          // LSTM unit count, 0 for dense blocks
  size_t size() const { return rows * cols; }
};

// Canonical parameter order: bilstm forward, bilstm backward, stacked LSTMs
// in stack order, dense1, dense2; W, U, b within each LSTM. Gate columns are
// packed as (i, f, g, o), each hidden-wide.
std::vector<ParamBlock> layout_blocks(const ModelConfig& cfg);

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<ParamBlock> blocks;
  std::vector<T> data;

  size_t size() const { return data.size(); }
  T* block(size_t i) { return data.data() + blocks[i].offset; }
  const T* block(size_t i) const { return data.data() + blocks[i].offset; }
};

// Glorot-uniform kernels, zero biases except the LSTM forget-gate slice (1.0).
// One generator stream, blocks drawn in canonical order.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed);

// ---------------------------------------------------------------------------
// Primitive math

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
struct LstmParamView {
  const T* W;  // input_dim x 4H
  const T* U;  // hidden x 4H
  const T* b;  // 4H
  size_t input_dim = 0, hidden = 0;
};

// Post-activation state of one layer over a batch, stored time-major; slab t
// holds step t of the original (un-reversed) time axis.
template <typename T>
struct LstmLayerCache {
  size_t steps = 0, batch = 0, hidden = 0;
  std::vector<T> gates;   // steps*batch*4H, (i, f, g, o) after nonlinearity
  std::vector<T> c;       // steps*batch*H
  std::vector<T> tanh_c;  // steps*batch*H
};

// Single cell step (reference path used by the tests and the public ops).
// Writes h_out/c_out; when cache slots are given, stores gate activations.
template <typename T>
void lstm_cell_forward(std::span<const T> x, std::span<const T> h_prev,
                       std::span<const T> c_prev, const LstmParamView<T>& p,
                       std::span<T> h_out, std::span<T> c_out,
                       std::vector<T>* gate_cache = nullptr);

// Batched layer forward. x is time-major steps*batch*in_dim; h_out receives
// steps*batch*H aligned with the original time axis. reverse scans the
// sequence back-to-front (outputs stay slot-aligned). Zero initial state.
template <typename T>
void lstm_forward_batch(const T* x, size_t steps, size_t batch, size_t in_dim,
                        const LstmParamView<T>& p, bool reverse, T* h_out,
                        LstmLayerCache<T>* cache, ThreadPool* pool);

// Backward through time for one layer. dh_out is the upstream gradient w.r.t.
// h_out (steps*batch*H). dW/dU/db are accumulated; dx, when non-null, is
// accumulated with steps*batch*in_dim layout.
template <typename T>
void lstm_backward_batch(const T* x, const T* h_out, const LstmLayerCache<T>& cache,
                         const LstmParamView<T>& p, bool reverse, const T* dh_out,
                         T* dW, T* dU, T* db, T* dx, ThreadPool* pool);

// ---------------------------------------------------------------------------
// Public single-sequence ops

// seq: (steps x input_dim). Returns (steps x hidden) or (hidden).
template <typename T>
Tensor<T> lstm_layer_forward(const Tensor<T>& seq, const LstmParamView<T>& p,
                             bool backward_direction, bool return_sequences);

// Concatenation [forward ; backward] per step: (steps x 2*hidden).
template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& seq, const LstmParamView<T>& fwd,
                         const LstmParamView<T>& bwd);

// Inverted dropout: train mode keeps with probability 1-rate and scales by
// 1/(1-rate); inference is the identity. Deterministic per seed.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, DropoutMode mode, uint64_t seed);

// y = act(x.W + b) for a batch of row vectors.
template <typename T>
void dense_forward(const T* x, size_t batch, size_t in_dim, const T* W, const T* b,
                   size_t out_dim, Activation act, T* y, ThreadPool* pool);

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b,
                Activation act);

// ---------------------------------------------------------------------------
// Whole-model forward/backward

template <typename T>
struct ModelCache {
  bool train_mode = false;
  size_t batch = 0, steps = 0;
  std::vector<T> x_tm;  // input, time-major
  LstmLayerCache<T> bi_f, bi_b;
  std::vector<T> bi_hf, bi_hb;
  std::vector<std::vector<T>> lstm_in;  // post-dropout input per stacked LSTM
  std::vector<LstmLayerCache<T>> lstm;
  std::vector<std::vector<T>> lstm_h;
  std::vector<std::vector<T>> drop_factors;  // per dropout slot
  std::vector<T> dense_in;    // B x H_last, post-dropout
  std::vector<T> dense1_out;  // B x dense_units, post-ReLU
  std::vector<T> probs;       // B x n_classes
};

// x: (batch x steps x input_dim). Returns class probabilities (batch x
// n_classes). Train mode records everything backward needs into `cache`.
template <typename T>
Tensor<T> model_forward(const Tensor<T>& x, const ModelParams<T>& params,
                        DropoutMode mode, uint64_t dropout_seed,
                        ModelCache<T>* cache, ThreadPool* pool);

// Fused softmax + cross-entropy gradient: d logits = (p - onehot(target)) / B.
// Returns gradients for every parameter, congruent with params.data.
template <typename T>
std::vector<T> model_backward(const ModelCache<T>& cache, const ModelParams<T>& params,
                              const std::vector<uint8_t>& target_classes,
                              ThreadPool* pool);

// ---------------------------------------------------------------------------
// Implementation

void validate_dropout_rate(double rate);

// Debug builds verify the everything-finite tensor invariant at layer
// boundaries; release builds skip the scan.
template <typename T>
inline void debug_check_finite(const std::vector<T>& values, const char* what) {
#ifndef NDEBUG
  for (T v : values)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string("non-finite value after ") + what);
#else
  (void)values;
  (void)what;
#endif
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  p.config = cfg;
  p.blocks = layout_blocks(cfg);
  p.data.assign(cfg.param_count(), T(0));
  rng::Xoshiro256 gen(seed);
  for (const auto& blk : p.blocks) {
    T* dst = p.data.data() + blk.offset;
    switch (blk.kind) {
      case BlockKind::LstmKernel:
      case BlockKind::LstmRecurrent:
      case BlockKind::DenseKernel: {
        const double bound =
            std::sqrt(6.0 / (static_cast<double>(blk.rows) + static_cast<double>(blk.cols)));
        for (size_t i = 0; i < blk.size(); ++i)
          dst[i] = static_cast<T>(bound * (2.0 * gen.next_double() - 1.0));
        break;
      }
      case BlockKind::LstmBias:
        for (size_t j = blk.hidden; j < 2 * blk.hidden; ++j) dst[j] = T(1);
        break;
      case BlockKind::DenseBias:
        break;
    }
  }
  return p;
}

template <typename T>
void lstm_cell_forward(std::span<const T> x, std::span<const T> h_prev,
                       std::span<const T> c_prev, const LstmParamView<T>& p,
                       std::span<T> h_out, std::span<T> c_out,
                       std::vector<T>* gate_cache) {
  const size_t H = p.hidden;
  if (x.size() != p.input_dim || h_prev.size() != H || c_prev.size() != H ||
      h_out.size() != H || c_out.size() != H)
    throw ShapeError("lstm cell: state/input sizes disagree with parameters");
  if (gate_cache != nullptr) gate_cache->resize(4 * H);
  std::vector<T> z(4 * H);
  for (size_t j = 0; j < 4 * H; ++j) z[j] = p.b[j];
  for (size_t k = 0; k < p.input_dim; ++k) {
    const T xv = x[k];
    const T* wrow = p.W + k * 4 * H;
    for (size_t j = 0; j < 4 * H; ++j) z[j] += xv * wrow[j];
  }
  for (size_t k = 0; k < H; ++k) {
    const T hv = h_prev[k];
    const T* urow = p.U + k * 4 * H;
    for (size_t j = 0; j < 4 * H; ++j) z[j] += hv * urow[j];
  }
  for (size_t j = 0; j < H; ++j) {
    const T i = sigmoid(z[j]);
    const T f = sigmoid(z[H + j]);
    const T g = std::tanh(z[2 * H + j]);
    const T o = sigmoid(z[3 * H + j]);
    const T c = f * c_prev[j] + i * g;
    c_out[j] = c;
    h_out[j] = o * std::tanh(c);
    if (gate_cache != nullptr) {
      (*gate_cache)[j] = i;
      (*gate_cache)[H + j] = f;
      (*gate_cache)[2 * H + j] = g;
      (*gate_cache)[3 * H + j] = o;
    }
  }
}

template <typename T>
void lstm_forward_batch(const T* x, size_t steps, size_t batch, size_t in_dim,
                        const LstmParamView<T>& p, bool reverse, T* h_out,
                        LstmLayerCache<T>* cache, ThreadPool* pool) {
  if (steps == 0) throw InvalidArg("lstm layer needs at least one step");
  const size_t H = p.hidden;
  const size_t g4 = 4 * H;

  // Input contribution for every step at once: Z = X.W + b.
  std::vector<T> z(steps * batch * g4);
  {
    auto fill_bias = [&](size_t r0, size_t r1) {
      for (size_t r = r0; r < r1; ++r)
        for (size_t j = 0; j < g4; ++j) z[r * g4 + j] = p.b[j];
    };
    const size_t rows = steps * batch;
    if (pool != nullptr && rows > 1)
      pool->parallel_for(0, rows, fill_bias);
    else
      fill_bias(0, rows);
    linalg::matmul_add(x, p.W, z.data(), rows, in_dim, g4, pool);
  }

  if (cache != nullptr) {
    cache->steps = steps;
    cache->batch = batch;
    cache->hidden = H;
    cache->c.assign(steps * batch * H, T(0));
    cache->tanh_c.assign(steps * batch * H, T(0));
  }
  std::vector<T> c_scratch;
  if (cache == nullptr) c_scratch.assign(2 * batch * H, T(0));

  const T* h_prev = nullptr;  // null means zero state
  const T* c_prev = nullptr;
  for (size_t s = 0; s < steps; ++s) {
    const size_t t = reverse ? steps - 1 - s : s;
    T* zt = z.data() + t * batch * g4;
    if (h_prev != nullptr)
      linalg::matmul_add(h_prev, p.U, zt, batch, H, g4, pool);

    T* ht = h_out + t * batch * H;
    T* ct = cache != nullptr ? cache->c.data() + t * batch * H
                             : c_scratch.data() + (s % 2) * batch * H;
    T* tct = cache != nullptr ? cache->tanh_c.data() + t * batch * H : nullptr;
    const T* cp = c_prev;
    auto activate = [=](size_t b0, size_t b1) {
      for (size_t b = b0; b < b1; ++b) {
        T* zrow = zt + b * g4;
        for (size_t j = 0; j < H; ++j) {
          const T i = sigmoid(zrow[j]);
          const T f = sigmoid(zrow[H + j]);
          const T g = std::tanh(zrow[2 * H + j]);
          const T o = sigmoid(zrow[3 * H + j]);
          const T c = f * (cp != nullptr ? cp[b * H + j] : T(0)) + i * g;
          const T tc = std::tanh(c);
          ct[b * H + j] = c;
          if (tct != nullptr) tct[b * H + j] = tc;
          ht[b * H + j] = o * tc;
          // z becomes the post-activation gate cache in place.
          zrow[j] = i;
          zrow[H + j] = f;
          zrow[2 * H + j] = g;
          zrow[3 * H + j] = o;
        }
      }
    };
    if (pool != nullptr && batch > 1)
      pool->parallel_for(0, batch, activate);
    else
      activate(0, batch);

    h_prev = ht;
    c_prev = ct;
  }
  if (cache != nullptr) cache->gates = std::move(z);
}

template <typename T>
void lstm_backward_batch(const T* x, const T* h_out, const LstmLayerCache<T>& cache,
                         const LstmParamView<T>& p, bool reverse, const T* dh_out,
                         T* dW, T* dU, T* db, T* dx, ThreadPool* pool) {
  const size_t steps = cache.steps, batch = cache.batch, H = cache.hidden;
  const size_t g4 = 4 * H;
  const std::vector<T> u_t = linalg::transpose(p.U, H, g4);
  std::vector<T> dz(steps * batch * g4, T(0));
  std::vector<T> dh_rec(batch * H, T(0));
  std::vector<T> dc(batch * H, T(0));
  bool have_rec = false;

  for (size_t s = steps; s-- > 0;) {
    const size_t t = reverse ? steps - 1 - s : s;
    const size_t t_prev = reverse ? steps - s : s - 1;  // valid only when s > 0
    const T* gates_t = cache.gates.data() + t * batch * g4;
    const T* tanh_ct = cache.tanh_c.data() + t * batch * H;
    const T* c_prev = s > 0 ? cache.c.data() + t_prev * batch * H : nullptr;
    const T* dh_up = dh_out + t * batch * H;
    T* dz_t = dz.data() + t * batch * g4;
    const T* rec = have_rec ? dh_rec.data() : nullptr;

    auto gate_grads = [=, &dc](size_t b0, size_t b1) {
      for (size_t b = b0; b < b1; ++b) {
        const T* grow = gates_t + b * g4;
        T* dzrow = dz_t + b * g4;
        for (size_t j = 0; j < H; ++j) {
          const T i = grow[j], f = grow[H + j], g = grow[2 * H + j], o = grow[3 * H + j];
          const T tc = tanh_ct[b * H + j];
          const T dh = dh_up[b * H + j] + (rec != nullptr ? rec[b * H + j] : T(0));
          T dcv = dc[b * H + j] + dh * o * (T(1) - tc * tc);
          const T dov = dh * tc;
          const T div = dcv * g;
          const T dgv = dcv * i;
          const T dfv = dcv * (c_prev != nullptr ? c_prev[b * H + j] : T(0));
          dc[b * H + j] = dcv * f;
          dzrow[j] = div * i * (T(1) - i);
          dzrow[H + j] = dfv * f * (T(1) - f);
          dzrow[2 * H + j] = dgv * (T(1) - g * g);
          dzrow[3 * H + j] = dov * o * (T(1) - o);
        }
      }
    };
    if (pool != nullptr && batch > 1)
      pool->parallel_for(0, batch, gate_grads);
    else
      gate_grads(0, batch);

    if (s > 0) {
      linalg::matmul(dz_t, u_t.data(), dh_rec.data(), batch, g4, H, pool);
      have_rec = true;
    }
  }

  const size_t rows = steps * batch;
  for (size_t r = 0; r < rows; ++r) {
    const T* row = dz.data() + r * g4;
    for (size_t j = 0; j < g4; ++j) db[j] += row[j];
  }
  linalg::matmul_tn_add(x, dz.data(), dW, rows, p.input_dim, g4, pool);

  // h_prev rows aligned with dz slots: slot t of scan step s holds the
  // previous scan step's output (zeros for the first scan step).
  std::vector<T> h_prev_all(rows * H, T(0));
  for (size_t s = 1; s < steps; ++s) {
    const size_t t = reverse ? steps - 1 - s : s;
    const size_t t_prev = reverse ? steps - s : s - 1;
    std::copy_n(h_out + t_prev * batch * H, batch * H,
                h_prev_all.data() + t * batch * H);
  }
  linalg::matmul_tn_add(h_prev_all.data(), dz.data(), dU, rows, H, g4, pool);

  if (dx != nullptr) {
    const std::vector<T> w_t = linalg::transpose(p.W, p.input_dim, g4);
    linalg::matmul_add(dz.data(), w_t.data(), dx, rows, g4, p.input_dim, pool);
  }
}

template <typename T>
Tensor<T> lstm_layer_forward(const Tensor<T>& seq, const LstmParamView<T>& p,
                             bool backward_direction, bool return_sequences) {
  seq.require_rank(2, "lstm_layer_forward");
  const size_t steps = seq.dim(0);
  if (steps == 0) throw InvalidArg("lstm layer needs at least one step");
  if (seq.dim(1) != p.input_dim)
    throw ShapeError("sequence feature dim does not match the kernel");
  std::vector<T> h(steps * p.hidden);
  lstm_forward_batch(seq.v.data(), steps, 1, p.input_dim, p, backward_direction,
                     h.data(), static_cast<LstmLayerCache<T>*>(nullptr), nullptr);
  if (return_sequences) {
    Tensor<T> out({steps, p.hidden});
    out.v = std::move(h);
    return out;
  }
  Tensor<T> out({p.hidden});
  const size_t t_last = backward_direction ? 0 : steps - 1;
  std::copy_n(h.data() + t_last * p.hidden, p.hidden, out.v.data());
  return out;
}

template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& seq, const LstmParamView<T>& fwd,
                         const LstmParamView<T>& bwd) {
  if (fwd.hidden != bwd.hidden)
    throw ShapeError("bilstm: direction hidden sizes differ");
  const Tensor<T> hf = lstm_layer_forward(seq, fwd, false, true);
  const Tensor<T> hb = lstm_layer_forward(seq, bwd, true, true);
  const size_t steps = seq.dim(0), H = fwd.hidden;
  Tensor<T> out({steps, 2 * H});
  for (size_t t = 0; t < steps; ++t) {
    std::copy_n(hf.v.data() + t * H, H, out.v.data() + t * 2 * H);
    std::copy_n(hb.v.data() + t * H, H, out.v.data() + t * 2 * H + H);
  }
  return out;
}

template <typename T>
void dropout_fill_factors(std::vector<T>& factors, size_t n, double rate, uint64_t seed) {
  factors.resize(n);
  rng::Xoshiro256 gen(seed);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < n; ++i)
    factors[i] = gen.next_double() >= rate ? scale : T(0);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, DropoutMode mode, uint64_t seed) {
  validate_dropout_rate(rate);
  Tensor<T> out = x;
  if (mode == DropoutMode::Inference || rate == 0.0) return out;
  std::vector<T> factors;
  dropout_fill_factors(factors, x.numel(), rate, seed);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= factors[i];
  return out;
}

template <typename T>
void softmax_rows(T* y, size_t batch, size_t dim, ThreadPool* pool) {
  auto rows = [=](size_t b0, size_t b1) {
    for (size_t b = b0; b < b1; ++b) {
      T* row = y + b * dim;
      T m = row[0];
      for (size_t j = 1; j < dim; ++j) m = row[j] > m ? row[j] : m;
      T sum = T(0);
      for (size_t j = 0; j < dim; ++j) {
        row[j] = std::exp(row[j] - m);
        sum += row[j];
      }
      for (size_t j = 0; j < dim; ++j) row[j] /= sum;
    }
  };
  if (pool != nullptr && batch > 1)
    pool->parallel_for(0, batch, rows);
  else
    rows(0, batch);
}

template <typename T>
void dense_forward(const T* x, size_t batch, size_t in_dim, const T* W, const T* b,
                   size_t out_dim, Activation act, T* y, ThreadPool* pool) {
  auto rows = [=](size_t r0, size_t r1) {
    for (size_t r = r0; r < r1; ++r)
      for (size_t j = 0; j < out_dim; ++j) y[r * out_dim + j] = b[j];
  };
  if (pool != nullptr && batch > 1)
    pool->parallel_for(0, batch, rows);
  else
    rows(0, batch);
  linalg::matmul_add(x, W, y, batch, in_dim, out_dim, pool);
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (size_t i = 0; i < batch * out_dim; ++i)
        if (y[i] < T(0)) y[i] = T(0);
      break;
    case Activation::Softmax:
      softmax_rows(y, batch, out_dim, pool);
      break;
  }
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b,
                Activation act) {
  x.require_rank(2, "dense input");
  W.require_rank(2, "dense kernel");
  if (x.dim(1) != W.dim(0) || b.numel() != W.dim(1))
    throw ShapeError("dense: input/kernel/bias shapes disagree");
  Tensor<T> y({x.dim(0), W.dim(1)});
  dense_forward(x.v.data(), x.dim(0), x.dim(1), W.v.data(), b.v.data(), W.dim(1),
                act, y.v.data(), nullptr);
  return y;
}

template <typename T>
LstmParamView<T> lstm_view(const ModelParams<T>& params, size_t first_block,
                           size_t input_dim, size_t hidden) {
  return {params.block(first_block), params.block(first_block + 1),
          params.block(first_block + 2), input_dim, hidden};
}

template <typename T>
Tensor<T> model_forward(const Tensor<T>& x, const ModelParams<T>& params,
                        DropoutMode mode, uint64_t dropout_seed,
                        ModelCache<T>* cache, ThreadPool* pool) {
  const ModelConfig& cfg = params.config;
  x.require_rank(3, "model input");
  const size_t B = x.dim(0), steps = x.dim(1), in_dim = x.dim(2);
  if (in_dim != cfg.input_dim)
    throw ShapeError("model input dim does not match the configuration");
  if (steps == 0 || B == 0) throw InvalidArg("model input is empty");
  if (params.data.size() != cfg.param_count())
    throw ShapeError("parameter vector size does not match the configuration");
  const bool train = mode == DropoutMode::Train;

  ModelCache<T> local;
  ModelCache<T>& mc = cache != nullptr ? *cache : local;
  mc = ModelCache<T>{};
  mc.train_mode = train;
  mc.batch = B;
  mc.steps = steps;

  // Time-major input.
  mc.x_tm.resize(steps * B * in_dim);
  for (size_t b = 0; b < B; ++b)
    for (size_t t = 0; t < steps; ++t)
      std::copy_n(x.v.data() + (b * steps + t) * in_dim, in_dim,
                  mc.x_tm.data() + (t * B + b) * in_dim);

  const size_t Hb = cfg.bilstm_units;
  const auto p_f = lstm_view(params, 0, in_dim, Hb);
  const auto p_b = lstm_view(params, 3, in_dim, Hb);
  mc.bi_hf.resize(steps * B * Hb);
  mc.bi_hb.resize(steps * B * Hb);
  lstm_forward_batch(mc.x_tm.data(), steps, B, in_dim, p_f, false, mc.bi_hf.data(),
                     train ? &mc.bi_f : nullptr, pool);
  lstm_forward_batch(mc.x_tm.data(), steps, B, in_dim, p_b, true, mc.bi_hb.data(),
                     train ? &mc.bi_b : nullptr, pool);

  std::vector<T> concat(steps * B * 2 * Hb);
  for (size_t r = 0; r < steps * B; ++r) {
    std::copy_n(mc.bi_hf.data() + r * Hb, Hb, concat.data() + r * 2 * Hb);
    std::copy_n(mc.bi_hb.data() + r * Hb, Hb, concat.data() + r * 2 * Hb + Hb);
  }

  const size_t n_lstm = cfg.lstm_units.size();
  mc.lstm_in.resize(n_lstm);
  mc.lstm.resize(n_lstm);
  mc.lstm_h.resize(n_lstm);
  mc.drop_factors.resize(cfg.dropout_rates.size());

  // Dropout slot k sits after the k-th recurrent block.
  auto apply_dropout = [&](std::vector<T>& data, size_t slot) {
    const double rate = cfg.dropout_rates[slot];
    if (!train || rate == 0.0) return;
    auto& factors = mc.drop_factors[slot];
    dropout_fill_factors(factors, data.size(), rate,
                         rng::substream(dropout_seed, slot));
    for (size_t i = 0; i < data.size(); ++i) data[i] *= factors[i];
  };

  apply_dropout(concat, 0);
  mc.lstm_in[0] = std::move(concat);
  size_t cur_dim = 2 * Hb;
  size_t block_at = 6;
  for (size_t l = 0; l < n_lstm; ++l) {
    const size_t H = cfg.lstm_units[l];
    const auto pv = lstm_view(params, block_at, cur_dim, H);
    block_at += 3;
    mc.lstm_h[l].resize(steps * B * H);
    lstm_forward_batch(mc.lstm_in[l].data(), steps, B, cur_dim, pv, false,
                       mc.lstm_h[l].data(), train ? &mc.lstm[l] : nullptr, pool);
    debug_check_finite(mc.lstm_h[l], "lstm layer");
    cur_dim = H;
    if (l + 1 < n_lstm) {
      // Keep the raw output for backward; the next layer eats a dropped copy.
      mc.lstm_in[l + 1] = mc.lstm_h[l];
      apply_dropout(mc.lstm_in[l + 1], l + 1);
    }
  }

  // Final LSTM emits its last step.
  const size_t H_last = cfg.lstm_units.back();
  mc.dense_in.assign(mc.lstm_h[n_lstm - 1].data() + (steps - 1) * B * H_last,
                     mc.lstm_h[n_lstm - 1].data() + steps * B * H_last);
  apply_dropout(mc.dense_in, n_lstm);

  const size_t d1_block = block_at, d2_block = block_at + 2;
  mc.dense1_out.resize(B * cfg.dense_units);
  dense_forward(mc.dense_in.data(), B, H_last, params.block(d1_block),
                params.block(d1_block + 1), cfg.dense_units, Activation::Relu,
                mc.dense1_out.data(), pool);
  mc.probs.resize(B * cfg.n_classes);
  dense_forward(mc.dense1_out.data(), B, cfg.dense_units, params.block(d2_block),
                params.block(d2_block + 1), cfg.n_classes, Activation::Softmax,
                mc.probs.data(), pool);
  debug_check_finite(mc.probs, "softmax head");

  Tensor<T> out({B, static_cast<size_t>(cfg.n_classes)});
  out.v = mc.probs;
  return out;
}

template <typename T>
std::vector<T> model_backward(const ModelCache<T>& mc, const ModelParams<T>& params,
                              const std::vector<uint8_t>& target_classes,
                              ThreadPool* pool) {
  if (!mc.train_mode || mc.probs.empty())
    throw StateError("model_backward needs a cache from a train-mode forward pass");
  const ModelConfig& cfg = params.config;
  const size_t B = mc.batch, steps = mc.steps;
  if (target_classes.size() != B)
    throw ShapeError("target count does not match the cached batch");

  std::vector<T> grad(params.data.size(), T(0));
  const size_t n_lstm = cfg.lstm_units.size();
  const size_t d1_block = 6 + 3 * n_lstm, d2_block = d1_block + 2;

  // Fused softmax + cross-entropy.
  std::vector<T> dlogits(B * cfg.n_classes);
  const T inv_b = T(1) / static_cast<T>(B);
  for (size_t b = 0; b < B; ++b) {
    if (target_classes[b] >= cfg.n_classes)
      throw ShapeError("target class out of range");
    for (size_t j = 0; j < cfg.n_classes; ++j) {
      const T y = target_classes[b] == j ? T(1) : T(0);
      dlogits[b * cfg.n_classes + j] = (mc.probs[b * cfg.n_classes + j] - y) * inv_b;
    }
  }

  // dense2 (softmax handled by the fused gradient above).
  const size_t H_last = cfg.lstm_units.back();
  std::vector<T> d_dense1(B * cfg.dense_units, T(0));
  {
    const T* W2 = params.block(d2_block);
    linalg::matmul_tn_add(mc.dense1_out.data(), dlogits.data(), grad.data() + params.blocks[d2_block].offset,
                          B, cfg.dense_units, cfg.n_classes, pool);
    T* db2 = grad.data() + params.blocks[d2_block + 1].offset;
    for (size_t b = 0; b < B; ++b)
      for (size_t j = 0; j < cfg.n_classes; ++j)
        db2[j] += dlogits[b * cfg.n_classes + j];
    const std::vector<T> w2_t = linalg::transpose(W2, cfg.dense_units, cfg.n_classes);
    linalg::matmul_add(dlogits.data(), w2_t.data(), d_dense1.data(), B,
                       cfg.n_classes, cfg.dense_units, pool);
  }

  // dense1 ReLU.
  std::vector<T> d_dense_in(B * H_last, T(0));
  {
    for (size_t i = 0; i < d_dense1.size(); ++i)
      if (mc.dense1_out[i] <= T(0)) d_dense1[i] = T(0);
    const T* W1 = params.block(d1_block);
    linalg::matmul_tn_add(mc.dense_in.data(), d_dense1.data(),
                          grad.data() + params.blocks[d1_block].offset, B, H_last,
                          cfg.dense_units, pool);
    T* db1 = grad.data() + params.blocks[d1_block + 1].offset;
    for (size_t b = 0; b < B; ++b)
      for (size_t j = 0; j < cfg.dense_units; ++j)
        db1[j] += d_dense1[b * cfg.dense_units + j];
    const std::vector<T> w1_t = linalg::transpose(W1, H_last, cfg.dense_units);
    linalg::matmul_add(d_dense1.data(), w1_t.data(), d_dense_in.data(), B,
                       cfg.dense_units, H_last, pool);
  }

  auto dropout_backward = [&](std::vector<T>& d, size_t slot) {
    const auto& factors = mc.drop_factors[slot];
    if (factors.empty()) return;  // inference or rate 0
    if (factors.size() != d.size())
      throw StateError("dropout cache does not match gradient size");
    for (size_t i = 0; i < d.size(); ++i) d[i] *= factors[i];
  };

  dropout_backward(d_dense_in, n_lstm);

  // The last LSTM only receives gradient at its final step.
  std::vector<T> dh(steps * B * H_last, T(0));
  std::copy_n(d_dense_in.data(), B * H_last, dh.data() + (steps - 1) * B * H_last);

  for (size_t l = n_lstm; l-- > 0;) {
    const size_t in_dim = l == 0 ? 2 * static_cast<size_t>(cfg.bilstm_units)
                                 : cfg.lstm_units[l - 1];
    const size_t first_block = 6 + 3 * l;
    const auto pv = lstm_view(params, first_block, in_dim, cfg.lstm_units[l]);
    std::vector<T> dx(steps * B * in_dim, T(0));
    lstm_backward_batch(mc.lstm_in[l].data(), mc.lstm_h[l].data(), mc.lstm[l], pv,
                        false, dh.data(),
                        grad.data() + params.blocks[first_block].offset,
                        grad.data() + params.blocks[first_block + 1].offset,
                        grad.data() + params.blocks[first_block + 2].offset,
                        dx.data(), pool);
    if (l > 0) {
      dropout_backward(dx, l);
      dh = std::move(dx);
    } else {
      dropout_backward(dx, 0);
      // Split the concatenation back into the two directions.
      const size_t Hb = cfg.bilstm_units;
      std::vector<T> dhf(steps * B * Hb), dhb(steps * B * Hb);
      for (size_t r = 0; r < steps * B; ++r) {
        std::copy_n(dx.data() + r * 2 * Hb, Hb, dhf.data() + r * Hb);
        std::copy_n(dx.data() + r * 2 * Hb + Hb, Hb, dhb.data() + r * Hb);
      }
      const size_t in0 = cfg.input_dim;
      const auto p_f = lstm_view(params, 0, in0, Hb);
      const auto p_b = lstm_view(params, 3, in0, Hb);
      lstm_backward_batch(mc.x_tm.data(), mc.bi_hf.data(), mc.bi_f, p_f, false,
                          dhf.data(), grad.data() + params.blocks[0].offset,
                          grad.data() + params.blocks[1].offset,
                          grad.data() + params.blocks[2].offset,
                          static_cast<T*>(nullptr), pool);
      lstm_backward_batch(mc.x_tm.data(), mc.bi_hb.data(), mc.bi_b, p_b, true,
                          dhb.data(), grad.data() + params.blocks[3].offset,
                          grad.data() + params.blocks[4].offset,
                          grad.data() + params.blocks[5].offset,
                          static_cast<T*>(nullptr), pool);
    }
  }
  debug_check_finite(grad, "backward pass");
  return grad;
}

}  // namespace eegemo::net

#endif

#ifndef EEGEMO_TRAIN_HPP
#define EEGEMO_TRAIN_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eegemo/config.hpp"
#include "eegemo/data_model.hpp"
#include "eegemo/dsp.hpp"
#include "eegemo/net.hpp"
#include "eegemo/tensor.hpp"
#include "eegemo/threadpool.hpp"

namespace eegemo::train {

// TrainConfig lives inside the shared run configuration.
using TrainConfig = config::RunConfig;

constexpr double kProbClamp = 1e-12;

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig hp;
  uint64_t t = 0;
  std::vector<T> m, v;

  void init(size_t n, AdamConfig config) {
    hp = config;
    t = 0;
    m.assign(n, T(0));
    v.assign(n, T(0));
  }
};

// One bias-corrected Adam update; fails fast on non-finite gradients.
template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& s,
               ThreadPool* pool = nullptr);

// Mean negative log-likelihood of the target class, probabilities clamped to
// >= 1e-12.
template <typename T>
double cross_entropy(const T* probs, size_t batch, size_t n_classes,
                     const uint8_t* target_cls);

// One-hot interface used by the tests and public callers.
template <typename T>
double cross_entropy(const Tensor<T>& probs, const std::vector<ClassTarget>& targets);

struct Metrics {
  uint64_t n = 0;
  uint64_t correct = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<std::array<uint64_t, kNumClasses>, kNumClasses> confusion{};  // [actual][predicted]
};

// Argmax with ties broken toward the lowest class index.
template <typename T>
size_t argmax_row(const T* row, size_t n);

// Inference-mode evaluation over the given sample indices.
Metrics evaluate(const net::ModelParams<float>& params, const FeatureDataset& ds,
                 const std::vector<uint32_t>& indices, uint32_t batch_size,
                 ThreadPool* pool);

// Majority vote over each trial's windows (ties to the lowest class).
Metrics evaluate_vote_per_trial(const net::ModelParams<float>& params,
                                const FeatureDataset& ds,
                                const std::vector<uint32_t>& indices,
                                const std::vector<uint32_t>& trial_ids,
                                uint32_t batch_size, ThreadPool* pool);

// One pass over the training indices: shuffle by epoch seed, mini-batches
// (last short batch included), forward/backward/Adam. Returns the mean
// training loss over samples.
double train_epoch(net::ModelParams<float>& params, AdamState<float>& adam,
                   const FeatureDataset& ds, const std::vector<uint32_t>& train_idx,
                   const TrainConfig& cfg, uint32_t epoch, ThreadPool* pool);

struct EpochRow {
  uint32_t epoch = 0;
  std::string split;  // train | test
  double loss = 0.0;
  double accuracy = 0.0;  // -1 when not measured this epoch
};

struct FitResult {
  std::vector<EpochRow> history;
  SplitIndices split;
  dsp::NormStats stats;
  net::ModelParams<float> final_params;
  net::ModelParams<float> best_params;
  uint32_t best_epoch = 0;
  Metrics best_test;
  std::string checkpoint_path;  // empty when not persisted
};

// Full training run for cfg.label_dim on an (unnormalized) feature file:
// split, z-score with train statistics, epochs, periodic evaluation, best
// checkpoint. out_dir, when non-empty, receives model_<dim>.emoc,
// metrics.csv and effective.cfg.
FitResult fit(const dsp::FeatureFile& ff, const TrainConfig& cfg,
              const std::string& out_dir, ThreadPool* pool,
              std::ostream* log = nullptr);

// Same, starting from a raw recording.
FitResult fit(const TrialSet& ts, const TrainConfig& cfg, const std::string& out_dir,
              ThreadPool* pool, std::ostream* log = nullptr);

// extract_features + to_sequences per the run configuration.
dsp::FeatureFile build_features(const TrialSet& ts, const TrainConfig& cfg,
                                ThreadPool* pool);

// Split over samples, honoring split_unit (window-level or trial-level).
SplitIndices make_split(const dsp::FeatureFile& ff, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints ("EMOC"):
//   "EMOC" | u16 version=1 | u32 config_len | config text |
//   f32 params[count derived from config] | u8 has_adam |
//   (u64 t | f32 m[count] | f32 v[count])
struct Checkpoint {
  config::CheckpointMeta meta;
  net::ModelParams<float> params;
  std::optional<AdamState<float>> adam;
};

void save_checkpoint(const std::string& path, const net::ModelParams<float>& params,
                     const config::CheckpointMeta& meta,
                     const AdamState<float>* adam = nullptr);
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::string& path);

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows);

// Human-readable metrics block (accuracy, loss, per-class stats, confusion).
std::string format_metrics(const Metrics& m);

// Per-dimension accuracy summary, one column per rated dimension.
std::string format_accuracy_table(
    const std::array<std::optional<double>, kNumLabelDims>& accuracy);

// ---------------------------------------------------------------------------
// Templates

template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& s,
               ThreadPool* pool) {
  if (params.size() != grads.size() || params.size() != s.m.size() ||
      params.size() != s.v.size())
    throw ShapeError("adam: parameter/gradient/state sizes disagree");
  for (T g : grads)
    if (!std::isfinite(static_cast<double>(g)))
      throw NumericError("adam: non-finite gradient");
  s.t += 1;
  const double b1 = s.hp.beta1, b2 = s.hp.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  const double lr = s.hp.lr, eps = s.hp.epsilon;
  T* p = params.data();
  T* m = s.m.data();
  T* v = s.v.data();
  const T* g = grads.data();
  auto update = [=](size_t i0, size_t i1) {
    for (size_t i = i0; i < i1; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - step);
    }
  };
  if (pool != nullptr && params.size() > 4096)
    pool->parallel_for(0, params.size(), update);
  else
    update(0, params.size());
}

template <typename T>
double cross_entropy(const T* probs, size_t batch, size_t n_classes,
                     const uint8_t* target_cls) {
  double total = 0.0;
  for (size_t b = 0; b < batch; ++b) {
    const size_t cls = target_cls[b];
    if (cls >= n_classes) throw ShapeError("cross entropy: target class out of range");
    double p = static_cast<double>(probs[b * n_classes + cls]);
    if (p < kProbClamp) p = kProbClamp;
    total -= std::log(p);
  }
  return total / static_cast<double>(batch);
}

template <typename T>
double cross_entropy(const Tensor<T>& probs, const std::vector<ClassTarget>& targets) {
  probs.require_rank(2, "cross entropy probabilities");
  if (probs.dim(0) != targets.size())
    throw ShapeError("cross entropy: batch sizes disagree");
  if (probs.dim(1) != kNumClasses)
    throw ShapeError("cross entropy: expected 9 classes");
  std::vector<uint8_t> cls(targets.size());
  for (size_t i = 0; i < targets.size(); ++i)
    cls[i] = static_cast<uint8_t>(one_hot_decode(targets[i]) - 1);
  return cross_entropy(probs.v.data(), probs.dim(0), probs.dim(1), cls.data());
}

template <typename T>
size_t argmax_row(const T* row, size_t n) {
  size_t best = 0;
  for (size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace eegemo::train

#endif

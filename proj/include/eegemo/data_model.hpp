#ifndef EEGEMO_DATA_MODEL_HPP
#define EEGEMO_DATA_MODEL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eegemo/errors.hpp"

namespace eegemo {

// Rating dimensions, in the column order of the label array.
enum class LabelDim : uint32_t { Valence = 0, Arousal = 1, Dominance = 2, Liking = 3 };

LabelDim parse_label_dim(const std::string& name);       // ConfigError on unknown
const char* label_dim_name(LabelDim dim);
constexpr size_t kNumLabelDims = 4;

constexpr size_t kNumClasses = 9;

// One-hot target over the nine rating classes.
using ClassTarget = std::array<float, kNumClasses>;

// Raw multi-channel recording: (trial, channel, sample) row-major, plus one
// rating per trial and dimension, each in [1, 9].
struct TrialSet {
  uint32_t n_trials = 0;
  uint32_t n_channels = 0;
  uint32_t n_samples = 0;
  float sample_rate_hz = 0.0f;
  std::vector<float> data;    // n_trials * n_channels * n_samples
  std::vector<float> labels;  // n_trials * 4, columns V, A, D, L

  const float* channel(uint32_t trial, uint32_t ch) const {
    return data.data() + (static_cast<size_t>(trial) * n_channels + ch) * n_samples;
  }
  float label(uint32_t trial, LabelDim dim) const {
    return labels[static_cast<size_t>(trial) * kNumLabelDims + static_cast<uint32_t>(dim)];
  }

  // Checks counts, finiteness and label range. With lenient=true, finite
  // out-of-range labels are clamped into [1,9] and counted instead of fatal.
  size_t validate(bool lenient = false);
};

struct SplitIndices {
  std::vector<uint32_t> train;
  std::vector<uint32_t> test;
  uint64_t seed = 0;
};

// Extracted sample sequences for one label dimension.
struct FeatureDataset {
  uint32_t n_samples = 0;
  uint32_t seq_len = 0;
  uint32_t input_dim = 0;
  std::vector<float> features;       // n_samples * seq_len * input_dim
  std::vector<ClassTarget> targets;  // n_samples
  std::optional<std::pair<std::vector<float>, std::vector<float>>> feature_stats;

  size_t flat_dim() const { return static_cast<size_t>(seq_len) * input_dim; }
  const float* sample(size_t i) const { return features.data() + i * flat_dim(); }
};

// Maps a rating in [1,9] to its class one-hot. Rounds half away from zero,
// then clamps to the valid class range.
ClassTarget one_hot_encode(double rating);

// Inverse: returns the rating 1..9 for a well-formed one-hot vector.
int one_hot_decode(const ClassTarget& t);

// Deterministic shuffled split of 0..n-1; first round(fraction*n) are train.
SplitIndices split_indices(uint32_t n, double train_fraction, uint64_t seed);

// Column `dim` of the label array.
std::vector<float> select_target(const TrialSet& ts, LabelDim dim);

}  // namespace eegemo

#endif

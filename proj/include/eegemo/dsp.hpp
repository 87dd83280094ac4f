#ifndef EEGEMO_DSP_HPP
#define EEGEMO_DSP_HPP

#include <complex>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "eegemo/data_model.hpp"
#include "eegemo/threadpool.hpp"

namespace eegemo::dsp {

struct Band {
  std::string name;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

// Ascending, non-overlapping bands. Boundaries are half-open [low, high);
// only the last band of a table includes its upper edge.
struct BandTable {
  std::vector<Band> bands;

  static BandTable defaults() {
    return BandTable{{{"theta", 4.0, 8.0},
                      {"alpha", 8.0, 12.0},
                      {"lowbeta", 12.0, 16.0},
                      {"highbeta", 16.0, 30.0},
                      {"gamma", 30.0, 45.0}}};
  }
  void validate() const;
};

// Emotiv-style 14-channel subset mapped onto the standard 32-channel layout:
// AF3, F7, F3, FC5, T7, P7, O1, O2, P8, T8, FC6, F4, F8, AF4.
inline std::vector<uint32_t> default_channel_subset() {
  return {1, 3, 2, 4, 7, 11, 13, 31, 29, 25, 21, 19, 20, 17};
}

struct WindowPlan {
  uint32_t window_len = 256;
  uint32_t hop = 16;
  void validate() const;  // power-of-two length, 0 < hop <= window_len
};

struct Spectrum {
  std::vector<double> power;  // one-sided, window_len/2 + 1 bins
  double bin_hz = 0.0;
};

// Symmetric Hann window: w[i] = 0.5 * (1 - cos(2*pi*i / (n-1))).
std::vector<double> hann_window(size_t n);

// Iterative radix-2 decimation-in-time FFT with a precomputed twiddle table.
// Sizes must be powers of two.
class Fft {
 public:
  explicit Fft(size_t n);
  size_t size() const { return n_; }

  // Full complex spectrum of a real frame (n bins).
  void forward(std::span<const double> frame, std::vector<std::complex<double>>& out) const;

 private:
  size_t n_;
  std::vector<uint32_t> bit_reverse_;
  std::vector<std::complex<double>> twiddle_;  // exp(-2*pi*i*k/n), k < n/2
};

// One-sided power spectrum of an elementwise-windowed frame:
//   P[0] = |X0|^2/N^2, P[N/2] = |X_{N/2}|^2/N^2, P[k] = 2|Xk|^2/N^2 otherwise.
Spectrum rfft_power(std::span<const double> frame, std::span<const double> window,
                    double sample_rate_hz);

// Sum of P[k] over bins with low <= k*bin_hz < high; include_upper closes the
// upper edge (used for the last band of a table).
double band_power(const Spectrum& s, double low_hz, double high_hz,
                  bool include_upper = false);

// Per-window band-power features, flattened window-major.
struct RawFeatures {
  uint32_t n_trials = 0;
  uint32_t windows_per_trial = 0;
  uint32_t feat_dim = 0;                // channels * bands
  std::vector<float> values;            // (trial * windows_per_trial) x feat_dim
  std::vector<uint32_t> window_trial;   // source trial of each window row

  size_t n_windows() const { return static_cast<size_t>(n_trials) * windows_per_trial; }
};

// Slides the window plan over every trial; each window yields the
// concatenation over subset channels (in order) of the per-band powers.
// log_power applies ln(x + 1e-12) to each band power.
RawFeatures extract_features(const TrialSet& ts, const std::vector<uint32_t>& subset,
                             const BandTable& bands, const WindowPlan& plan,
                             bool log_power = false, bool allow_fs_mismatch = false,
                             ThreadPool* pool = nullptr);

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std_dev;  // floored at 1e-8
};

// Per-feature mean and population std over the given training rows.
NormStats zscore_fit(const float* features, size_t n_rows, size_t dim,
                     const std::vector<uint32_t>& train_rows);

// In-place (x - mean) / std over all rows.
void zscore_apply(float* features, size_t n_rows, size_t dim, const NormStats& stats);

enum class SequenceMode { FeatureAsSteps, WindowAsSteps };

SequenceMode parse_sequence_mode(const std::string& text, uint32_t* steps);
std::string sequence_mode_name(SequenceMode mode, uint32_t steps);

// Feature file ("FEAT" sidecar), little-endian:
//   "FEAT" | u16 version=1 | u16 flags | u32 n_samples | u32 seq_len |
//   u32 input_dim | u32 n_label_dims | f32 features | u8 targets
//   [n_samples x n_label_dims] | (flags&1) f32 mean + f32 std |
//   (flags&2) u32 trial_ids[n_samples]
struct FeatureFile {
  uint32_t n_samples = 0;
  uint32_t seq_len = 0;
  uint32_t input_dim = 0;
  std::vector<float> features;          // n_samples * seq_len * input_dim
  std::vector<uint8_t> targets;         // n_samples * kNumLabelDims, class 0..8
  std::vector<float> norm_mean, norm_std;  // optional, length seq_len*input_dim
  std::vector<uint32_t> trial_ids;      // optional, length n_samples

  size_t flat_dim() const { return static_cast<size_t>(seq_len) * input_dim; }
  bool has_stats() const { return !norm_mean.empty(); }
  bool has_trial_ids() const { return !trial_ids.empty(); }
};

// Groups windows into model samples. FeatureAsSteps turns each window into a
// (feat_dim x 1) sequence; WindowAsSteps groups `steps` consecutive windows
// of a trial into a (steps x feat_dim) sequence, dropping the remainder.
FeatureFile to_sequences(const RawFeatures& raw, SequenceMode mode, uint32_t steps,
                         const TrialSet& labels_source);

// View of one label dimension as a training dataset.
FeatureDataset select_dimension(const FeatureFile& ff, LabelDim dim);

void write_features(const FeatureFile& ff, const std::string& path);
FeatureFile read_features(std::istream& is);
FeatureFile read_features(const std::string& path);

}  // namespace eegemo::dsp

#endif

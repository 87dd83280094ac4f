#ifndef EEGEMO_INGEST_HPP
#define EEGEMO_INGEST_HPP

#include <array>
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "eegemo/data_model.hpp"

namespace eegemo::ingest {

// EEGB container, little-endian throughout:
//   "EEGB" | u16 version=1 | u16 flags=0 | u32 n_trials | u32 n_channels |
//   u32 n_samples | f32 sample_rate_hz | u32 n_label_dims (=4) |
//   f32 data[(trial, channel, sample) row-major] | f32 labels[trial-major]
constexpr size_t kEegbHeaderSize = 28;

void write_eegb(const TrialSet& ts, const std::string& path);

// lenient clamps finite out-of-range labels into [1,9]; *clamped, when given,
// receives the number of clamped values.
TrialSet read_eegb(std::istream& is, bool lenient = false, size_t* clamped = nullptr);
TrialSet read_eegb(const std::string& path, bool lenient = false, size_t* clamped = nullptr);

// Minimal NPY reader: version 1.0, C-order, "<f4" or "<f8" only.
// 64-bit payloads are narrowed to 32-bit.
struct NpyArray {
  std::vector<uint64_t> shape;
  std::vector<float> data;
};

NpyArray read_npy(std::istream& is);
NpyArray read_npy(const std::string& path);

// Pairs a (trials, channels, samples) data array with a (trials, 4) label
// array; the sample rate is not stored in NPY, so it comes from the caller.
TrialSet read_npy_pair(const std::string& data_path, const std::string& labels_path,
                       double sample_rate_hz, bool lenient = false,
                       size_t* clamped = nullptr);

// Band center frequencies used by the synthesizer (midpoints of the default
// band table).
constexpr std::array<double, 5> kSynthBandHz = {6.0, 10.0, 14.0, 23.0, 37.5};

// Synthetic labeled EEG. Trials cycle through classes 1..9; every channel is
// a sum of per-band sinusoids whose amplitudes depend on the trial class,
// plus Gaussian noise. Fully deterministic given the seed.
struct SynthSpec {
  uint32_t n_trials = 45;
  uint32_t n_channels = 14;
  uint32_t n_samples = 2048;
  double sample_rate_hz = 128.0;
  double noise_std = 0.1;
  uint64_t seed = 1234;
  LabelDim label_dim_to_drive = LabelDim::Valence;
  // class_band_map[k][b]: amplitude of band b for class k+1. Default: k+1.
  std::array<std::array<double, 5>, 9> class_band_map = default_band_map();

  static std::array<std::array<double, 5>, 9> default_band_map() {
    std::array<std::array<double, 5>, 9> m{};
    for (size_t k = 0; k < 9; ++k) m[k].fill(static_cast<double>(k + 1));
    return m;
  }
  void validate() const;
};

TrialSet synth_generate(const SynthSpec& spec);

}  // namespace eegemo::ingest

#endif

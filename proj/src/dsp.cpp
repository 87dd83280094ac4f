#include "eegemo/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>

#include "eegemo/byteio.hpp"

namespace eegemo::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-12;
constexpr float kStdFloor = 1e-8f;

bool is_pow2(uint32_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

void BandTable::validate() const {
  if (bands.empty()) throw ConfigError("band table is empty");
  double prev_high = 0.0;
  for (const auto& b : bands) {
    if (!(b.low_hz > 0.0 && b.low_hz < b.high_hz))
      throw ConfigError("band " + b.name + " must satisfy 0 < low < high");
    if (b.low_hz < prev_high)
      throw ConfigError("band " + b.name + " overlaps the previous band");
    prev_high = b.high_hz;
  }
}

void WindowPlan::validate() const {
  if (!is_pow2(window_len) || window_len < 2)
    throw ConfigError("window length must be a power of two >= 2");
  if (hop == 0 || hop > window_len)
    throw ConfigError("hop must satisfy 0 < hop <= window length");
}

std::vector<double> hann_window(size_t n) {
  if (n < 2) throw InvalidArg("hann window needs n >= 2");
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                 static_cast<double>(n - 1)));
  return w;
}

Fft::Fft(size_t n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0) throw InvalidArg("FFT size must be a power of two");
  int log2n = 0;
  while ((1u << log2n) < n) ++log2n;
  bit_reverse_.resize(n);
  for (size_t i = 0; i < n; ++i) {
    uint32_t r = 0;
    for (int b = 0; b < log2n; ++b)
      if (i & (1u << b)) r |= 1u << (log2n - 1 - b);
    bit_reverse_[i] = r;
  }
  twiddle_.resize(n / 2);
  for (size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
}

void Fft::forward(std::span<const double> frame,
                  std::vector<std::complex<double>>& out) const {
  if (frame.size() != n_) throw InvalidArg("frame length does not match FFT size");
  out.resize(n_);
  for (size_t i = 0; i < n_; ++i) out[bit_reverse_[i]] = {frame[i], 0.0};
  for (size_t len = 2; len <= n_; len <<= 1) {
    const size_t half = len >> 1;
    const size_t stride = n_ / len;
    for (size_t start = 0; start < n_; start += len) {
      for (size_t k = 0; k < half; ++k) {
        const std::complex<double> w = twiddle_[k * stride];
        const std::complex<double> odd = out[start + k + half] * w;
        const std::complex<double> even = out[start + k];
        out[start + k] = even + odd;
        out[start + k + half] = even - odd;
      }
    }
  }
}

Spectrum rfft_power(std::span<const double> frame, std::span<const double> window,
                    double sample_rate_hz) {
  if (frame.size() != window.size()) throw InvalidArg("frame/window length mismatch");
  const size_t n = frame.size();
  static thread_local std::unique_ptr<Fft> cached_fft;
  if (!cached_fft || cached_fft->size() != n) cached_fft = std::make_unique<Fft>(n);
  std::vector<double> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = frame[i] * window[i];
  std::vector<std::complex<double>> spec;
  cached_fft->forward(buf, spec);

  Spectrum s;
  s.bin_hz = sample_rate_hz / static_cast<double>(n);
  s.power.resize(n / 2 + 1);
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  s.power[0] = std::norm(spec[0]) * inv_n2;
  s.power[n / 2] = std::norm(spec[n / 2]) * inv_n2;
  for (size_t k = 1; k < n / 2; ++k) s.power[k] = 2.0 * std::norm(spec[k]) * inv_n2;
  return s;
}

double band_power(const Spectrum& s, double low_hz, double high_hz, bool include_upper) {
  const double nyquist = s.bin_hz * static_cast<double>(s.power.size() - 1);
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist))
    throw InvalidArg("band must satisfy 0 <= low < high <= Nyquist");
  double total = 0.0;
  for (size_t k = 0; k < s.power.size(); ++k) {
    const double f = static_cast<double>(k) * s.bin_hz;
    const bool in = f >= low_hz && (f < high_hz || (include_upper && f == high_hz));
    if (in) total += s.power[k];
  }
  return total;
}

RawFeatures extract_features(const TrialSet& ts, const std::vector<uint32_t>& subset,
                             const BandTable& bands, const WindowPlan& plan,
                             bool log_power, bool allow_fs_mismatch, ThreadPool* pool) {
  plan.validate();
  bands.validate();
  if (subset.empty()) throw ConfigError("channel subset is empty");
  for (size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] >= ts.n_channels)
      throw ConfigError("channel index " + std::to_string(subset[i]) +
                        " out of range for " + std::to_string(ts.n_channels) + " channels");
    for (size_t j = i + 1; j < subset.size(); ++j)
      if (subset[i] == subset[j])
        throw ConfigError("duplicate channel index " + std::to_string(subset[i]));
  }
  if (!allow_fs_mismatch && ts.sample_rate_hz != 128.0f)
    throw InvalidArg("expected a 128 Hz recording (pass the override to accept others)");
  if (ts.n_samples < plan.window_len)
    throw InvalidArg("trials are shorter than one analysis window");
  const double nyquist = ts.sample_rate_hz / 2.0;
  if (bands.bands.back().high_hz > nyquist)
    throw InvalidArg("band table exceeds the Nyquist frequency");

  RawFeatures raw;
  raw.n_trials = ts.n_trials;
  raw.windows_per_trial = (ts.n_samples - plan.window_len) / plan.hop + 1;
  raw.feat_dim = static_cast<uint32_t>(subset.size() * bands.bands.size());
  raw.values.resize(raw.n_windows() * raw.feat_dim);
  raw.window_trial.resize(raw.n_windows());

  const std::vector<double> window = hann_window(plan.window_len);
  const size_t n_bands = bands.bands.size();

  // Precompute the bin range of each band; last band closes its upper edge.
  const double bin_hz = static_cast<double>(ts.sample_rate_hz) / plan.window_len;
  std::vector<std::pair<size_t, size_t>> bin_range(n_bands);  // [first, last]
  for (size_t b = 0; b < n_bands; ++b) {
    const bool last = b + 1 == n_bands;
    const size_t n_bins = plan.window_len / 2 + 1;
    size_t first = n_bins, last_bin = 0;
    for (size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const bool in = f >= bands.bands[b].low_hz &&
                      (f < bands.bands[b].high_hz ||
                       (last && f == bands.bands[b].high_hz));
      if (in) {
        first = std::min(first, k);
        last_bin = std::max(last_bin, k);
      }
    }
    if (first > last_bin)
      throw InvalidArg("band " + bands.bands[b].name + " covers no FFT bin");
    bin_range[b] = {first, last_bin};
  }

  auto run_trials = [&](size_t t0, size_t t1) {
    std::vector<double> frame(plan.window_len);
    std::vector<std::complex<double>> spec;
    const Fft fft(plan.window_len);
    const double inv_n2 =
        1.0 / (static_cast<double>(plan.window_len) * static_cast<double>(plan.window_len));
    std::vector<double> power(plan.window_len / 2 + 1);

    for (size_t trial = t0; trial < t1; ++trial) {
      for (uint32_t w = 0; w < raw.windows_per_trial; ++w) {
        const size_t row = trial * raw.windows_per_trial + w;
        raw.window_trial[row] = static_cast<uint32_t>(trial);
        float* out = raw.values.data() + row * raw.feat_dim;
        for (size_t c = 0; c < subset.size(); ++c) {
          const float* src = ts.channel(static_cast<uint32_t>(trial), subset[c]) +
                             static_cast<size_t>(w) * plan.hop;
          for (uint32_t i = 0; i < plan.window_len; ++i)
            frame[i] = static_cast<double>(src[i]) * window[i];
          fft.forward(frame, spec);
          power[0] = std::norm(spec[0]) * inv_n2;
          power[plan.window_len / 2] = std::norm(spec[plan.window_len / 2]) * inv_n2;
          for (size_t k = 1; k < plan.window_len / 2; ++k)
            power[k] = 2.0 * std::norm(spec[k]) * inv_n2;
          for (size_t b = 0; b < n_bands; ++b) {
            double p = 0.0;
            for (size_t k = bin_range[b].first; k <= bin_range[b].second; ++k)
              p += power[k];
            if (log_power) p = std::log(p + kLogFloor);
            out[c * n_bands + b] = static_cast<float>(p);
          }
        }
      }
    }
  };

  if (pool != nullptr && ts.n_trials > 1) {
    pool->parallel_for(0, ts.n_trials, run_trials);
  } else {
    run_trials(0, ts.n_trials);
  }
  return raw;
}

NormStats zscore_fit(const float* features, size_t n_rows, size_t dim,
                     const std::vector<uint32_t>& train_rows) {
  if (train_rows.size() < 2) throw TooFewSamples("need at least 2 training samples");
  for (uint32_t r : train_rows)
    if (r >= n_rows) throw InvalidArg("training row index out of range");

  NormStats stats;
  stats.mean.resize(dim);
  stats.std_dev.resize(dim);
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  for (uint32_t r : train_rows) {
    const float* row = features + static_cast<size_t>(r) * dim;
    for (size_t j = 0; j < dim; ++j) {
      const double v = row[j];
      sum[j] += v;
      sum_sq[j] += v * v;
    }
  }
  const double n = static_cast<double>(train_rows.size());
  for (size_t j = 0; j < dim; ++j) {
    const double mean = sum[j] / n;
    const double var = std::max(0.0, sum_sq[j] / n - mean * mean);
    stats.mean[j] = static_cast<float>(mean);
    stats.std_dev[j] = std::max(kStdFloor, static_cast<float>(std::sqrt(var)));
  }
  return stats;
}

void zscore_apply(float* features, size_t n_rows, size_t dim, const NormStats& stats) {
  if (stats.mean.size() != dim || stats.std_dev.size() != dim)
    throw ShapeError("normalization stats length does not match feature dim");
  for (size_t r = 0; r < n_rows; ++r) {
    float* row = features + r * dim;
    for (size_t j = 0; j < dim; ++j)
      row[j] = (row[j] - stats.mean[j]) / stats.std_dev[j];
  }
}

SequenceMode parse_sequence_mode(const std::string& text, uint32_t* steps) {
  if (text == "feature_as_steps") {
    *steps = 0;
    return SequenceMode::FeatureAsSteps;
  }
  const std::string prefix = "window_as_steps:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string num = text.substr(prefix.size());
    char* end = nullptr;
    const unsigned long v = std::strtoul(num.c_str(), &end, 10);
    if (end == nullptr || *end != '\0' || v == 0)
      throw ConfigError("window_as_steps needs a positive step count");
    *steps = static_cast<uint32_t>(v);
    return SequenceMode::WindowAsSteps;
  }
  throw ConfigError("unknown sequence mode: " + text);
}

std::string sequence_mode_name(SequenceMode mode, uint32_t steps) {
  if (mode == SequenceMode::FeatureAsSteps) return "feature_as_steps";
  return "window_as_steps:" + std::to_string(steps);
}

FeatureFile to_sequences(const RawFeatures& raw, SequenceMode mode, uint32_t steps,
                         const TrialSet& labels_source) {
  if (labels_source.n_trials != raw.n_trials)
    throw ShapeError("label source trial count does not match features");

  // Per-trial class index for each label dimension.
  std::vector<uint8_t> trial_cls(static_cast<size_t>(raw.n_trials) * kNumLabelDims);
  for (uint32_t t = 0; t < raw.n_trials; ++t)
    for (size_t d = 0; d < kNumLabelDims; ++d) {
      const ClassTarget one_hot =
          one_hot_encode(labels_source.label(t, static_cast<LabelDim>(d)));
      trial_cls[t * kNumLabelDims + d] =
          static_cast<uint8_t>(one_hot_decode(one_hot) - 1);
    }

  FeatureFile ff;
  if (mode == SequenceMode::FeatureAsSteps) {
    ff.n_samples = static_cast<uint32_t>(raw.n_windows());
    ff.seq_len = raw.feat_dim;
    ff.input_dim = 1;
    ff.features = raw.values;
    ff.trial_ids = raw.window_trial;
    ff.targets.resize(static_cast<size_t>(ff.n_samples) * kNumLabelDims);
    for (size_t s = 0; s < ff.n_samples; ++s)
      for (size_t d = 0; d < kNumLabelDims; ++d)
        ff.targets[s * kNumLabelDims + d] =
            trial_cls[static_cast<size_t>(raw.window_trial[s]) * kNumLabelDims + d];
    return ff;
  }

  if (steps == 0 || steps > raw.windows_per_trial)
    throw InvalidArg("window_as_steps count exceeds windows per trial");
  const uint32_t per_trial = raw.windows_per_trial / steps;
  ff.n_samples = raw.n_trials * per_trial;
  ff.seq_len = steps;
  ff.input_dim = raw.feat_dim;
  ff.features.resize(static_cast<size_t>(ff.n_samples) * steps * raw.feat_dim);
  ff.targets.resize(static_cast<size_t>(ff.n_samples) * kNumLabelDims);
  ff.trial_ids.resize(ff.n_samples);
  size_t out = 0;
  for (uint32_t trial = 0; trial < raw.n_trials; ++trial) {
    for (uint32_t g = 0; g < per_trial; ++g, ++out) {
      const size_t first_row =
          static_cast<size_t>(trial) * raw.windows_per_trial + static_cast<size_t>(g) * steps;
      std::copy_n(raw.values.data() + first_row * raw.feat_dim,
                  static_cast<size_t>(steps) * raw.feat_dim,
                  ff.features.data() + out * steps * raw.feat_dim);
      ff.trial_ids[out] = trial;
      for (size_t d = 0; d < kNumLabelDims; ++d)
        ff.targets[out * kNumLabelDims + d] = trial_cls[trial * kNumLabelDims + d];
    }
  }
  return ff;
}

FeatureDataset select_dimension(const FeatureFile& ff, LabelDim dim) {
  FeatureDataset ds;
  ds.n_samples = ff.n_samples;
  ds.seq_len = ff.seq_len;
  ds.input_dim = ff.input_dim;
  ds.features = ff.features;
  ds.targets.resize(ff.n_samples);
  for (size_t s = 0; s < ff.n_samples; ++s) {
    const uint8_t cls = ff.targets[s * kNumLabelDims + static_cast<size_t>(dim)];
    if (cls >= kNumClasses) throw FormatError("feature file target class out of range");
    ClassTarget t{};
    t[cls] = 1.0f;
    ds.targets[s] = t;
  }
  if (ff.has_stats()) ds.feature_stats = {{ff.norm_mean, ff.norm_std}};
  return ds;
}

// ---------------------------------------------------------------------------
// FEAT file

void write_features(const FeatureFile& ff, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  uint16_t flags = 0;
  if (ff.has_stats()) flags |= 1;
  if (ff.has_trial_ids()) flags |= 2;
  os.write("FEAT", 4);
  byteio::put_u16(os, 1);
  byteio::put_u16(os, flags);
  byteio::put_u32(os, ff.n_samples);
  byteio::put_u32(os, ff.seq_len);
  byteio::put_u32(os, ff.input_dim);
  byteio::put_u32(os, static_cast<uint32_t>(kNumLabelDims));
  byteio::put_f32_array(os, ff.features.data(), ff.features.size());
  os.write(reinterpret_cast<const char*>(ff.targets.data()),
           static_cast<std::streamsize>(ff.targets.size()));
  if (ff.has_stats()) {
    byteio::put_f32_array(os, ff.norm_mean.data(), ff.norm_mean.size());
    byteio::put_f32_array(os, ff.norm_std.data(), ff.norm_std.size());
  }
  if (ff.has_trial_ids())
    for (uint32_t id : ff.trial_ids) byteio::put_u32(os, id);
  if (!os) throw IoError("write failed: " + path);
}

FeatureFile read_features(std::istream& is) {
  char magic[4];
  byteio::read_exact(is, magic, 4, "magic");
  if (std::string(magic, 4) != "FEAT") throw FormatError("bad magic, expected FEAT");
  if (byteio::get_u16(is, "version") != 1) throw FormatError("unsupported FEAT version");
  const uint16_t flags = byteio::get_u16(is, "flags");
  if ((flags & ~uint16_t(3)) != 0) throw FormatError("unsupported FEAT flags");

  FeatureFile ff;
  ff.n_samples = byteio::get_u32(is, "n_samples");
  ff.seq_len = byteio::get_u32(is, "seq_len");
  ff.input_dim = byteio::get_u32(is, "input_dim");
  const uint32_t n_label_dims = byteio::get_u32(is, "n_label_dims");
  if (ff.n_samples == 0 || ff.seq_len == 0 || ff.input_dim == 0)
    throw FormatError("FEAT header has a zero count");
  if (n_label_dims != kNumLabelDims) throw FormatError("FEAT n_label_dims must be 4");

  const uint64_t n_feat =
      static_cast<uint64_t>(ff.n_samples) * ff.seq_len * ff.input_dim;
  const uint64_t n_targets = static_cast<uint64_t>(ff.n_samples) * n_label_dims;
  const uint64_t dim = static_cast<uint64_t>(ff.seq_len) * ff.input_dim;
  uint64_t want = n_feat * 4 + n_targets;
  if (flags & 1) want += dim * 8;
  if (flags & 2) want += static_cast<uint64_t>(ff.n_samples) * 4;
  if (byteio::bytes_left(is) != want)
    throw FormatError("FEAT payload size mismatch (declared counts vs file size)");

  ff.features.resize(n_feat);
  byteio::get_f32_array(is, ff.features.data(), n_feat, "features");
  for (float v : ff.features)
    if (!std::isfinite(v)) throw FormatError("FEAT features contain non-finite values");
  ff.targets.resize(n_targets);
  byteio::read_exact(is, ff.targets.data(), n_targets, "targets");
  for (uint8_t c : ff.targets)
    if (c >= kNumClasses) throw FormatError("FEAT target class out of range");
  if (flags & 1) {
    ff.norm_mean.resize(dim);
    ff.norm_std.resize(dim);
    byteio::get_f32_array(is, ff.norm_mean.data(), dim, "norm mean");
    byteio::get_f32_array(is, ff.norm_std.data(), dim, "norm std");
  }
  if (flags & 2) {
    ff.trial_ids.resize(ff.n_samples);
    for (auto& id : ff.trial_ids) id = byteio::get_u32(is, "trial ids");
  }
  return ff;
}

FeatureFile read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_features(is);
}

}  // namespace eegemo::dsp

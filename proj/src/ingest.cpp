#include "eegemo/ingest.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "eegemo/byteio.hpp"
#include "eegemo/rng.hpp"

namespace eegemo::ingest {

using byteio::get_f32;
using byteio::get_f32_array;
using byteio::get_u16;
using byteio::get_u32;
using byteio::put_f32;
using byteio::put_f32_array;
using byteio::put_u16;
using byteio::put_u32;
using byteio::read_exact;

// ---------------------------------------------------------------------------
// EEGB

void write_eegb(const TrialSet& ts, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("EEGB", 4);
  put_u16(os, 1);
  put_u16(os, 0);
  put_u32(os, ts.n_trials);
  put_u32(os, ts.n_channels);
  put_u32(os, ts.n_samples);
  put_f32(os, ts.sample_rate_hz);
  put_u32(os, static_cast<uint32_t>(kNumLabelDims));
  put_f32_array(os, ts.data.data(), ts.data.size());
  put_f32_array(os, ts.labels.data(), ts.labels.size());
  if (!os) throw IoError("write failed: " + path);
}

TrialSet read_eegb(std::istream& is, bool lenient, size_t* clamped) {
  char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::string(magic, 4) != "EEGB") throw FormatError("bad magic, expected EEGB");
  const uint16_t version = get_u16(is, "version");
  if (version != 1) throw FormatError("unsupported EEGB version");
  const uint16_t flags = get_u16(is, "flags");
  if (flags != 0) throw FormatError("unsupported EEGB flags");

  TrialSet ts;
  ts.n_trials = get_u32(is, "n_trials");
  ts.n_channels = get_u32(is, "n_channels");
  ts.n_samples = get_u32(is, "n_samples");
  ts.sample_rate_hz = get_f32(is, "sample_rate_hz");
  const uint32_t n_label_dims = get_u32(is, "n_label_dims");
  if (ts.n_trials == 0 || ts.n_channels == 0 || ts.n_samples == 0)
    throw FormatError("EEGB header has a zero count");
  if (n_label_dims != kNumLabelDims)
    throw FormatError("EEGB n_label_dims must be 4");
  if (!(ts.sample_rate_hz > 0.0f) || !std::isfinite(ts.sample_rate_hz))
    throw FormatError("EEGB sample rate must be positive");

  const uint64_t n_data = static_cast<uint64_t>(ts.n_trials) * ts.n_channels * ts.n_samples;
  const uint64_t n_labels = static_cast<uint64_t>(ts.n_trials) * n_label_dims;
  const uint64_t want = (n_data + n_labels) * 4;
  const uint64_t have = byteio::bytes_left(is);
  if (have != want)
    throw FormatError("EEGB payload size mismatch (declared counts vs file size)");

  ts.data.resize(n_data);
  ts.labels.resize(n_labels);
  get_f32_array(is, ts.data.data(), ts.data.size(), "data payload");
  get_f32_array(is, ts.labels.data(), ts.labels.size(), "label payload");
  for (float v : ts.data)
    if (!std::isfinite(v)) throw FormatError("EEGB data contains non-finite values");
  const size_t n_clamped = ts.validate(lenient);
  if (clamped != nullptr) *clamped = n_clamped;
  return ts;
}

TrialSet read_eegb(const std::string& path, bool lenient, size_t* clamped) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_eegb(is, lenient, clamped);
}

// ---------------------------------------------------------------------------
// NPY (version 1.0 subset)

namespace {

// The header is a Python dict literal padded to the declared length, e.g.
//   {'descr': '<f4', 'fortran_order': False, 'shape': (40, 40, 8064), }
// Only these three keys are accepted.

std::string dict_string_value(const std::string& dict, const std::string& key) {
  const auto kpos = dict.find("'" + key + "'");
  if (kpos == std::string::npos) throw FormatError("NPY header missing key " + key);
  auto pos = dict.find(':', kpos);
  if (pos == std::string::npos) throw FormatError("NPY header malformed near " + key);
  ++pos;
  while (pos < dict.size() && std::isspace(static_cast<unsigned char>(dict[pos]))) ++pos;
  if (pos >= dict.size()) throw FormatError("NPY header malformed near " + key);
  if (dict[pos] == '\'' || dict[pos] == '"') {
    const char quote = dict[pos];
    const auto end = dict.find(quote, pos + 1);
    if (end == std::string::npos) throw FormatError("NPY header has unterminated string");
    return dict.substr(pos + 1, end - pos - 1);
  }
  // Bare token (True/False or a tuple start); caller interprets it.
  auto end = pos;
  while (end < dict.size() && dict[end] != ',' && dict[end] != '}') ++end;
  while (end > pos && std::isspace(static_cast<unsigned char>(dict[end - 1]))) --end;
  return dict.substr(pos, end - pos);
}

std::vector<uint64_t> parse_shape_tuple(const std::string& dict) {
  const auto kpos = dict.find("'shape'");
  if (kpos == std::string::npos) throw FormatError("NPY header missing key shape");
  const auto open = dict.find('(', kpos);
  const auto close = dict.find(')', kpos);
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw FormatError("NPY header shape is not a tuple");
  std::vector<uint64_t> shape;
  uint64_t cur = 0;
  bool in_number = false;
  for (auto i = open + 1; i < close; ++i) {
    const char c = dict[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      const uint64_t digit = static_cast<uint64_t>(c - '0');
      if (cur > (std::numeric_limits<uint64_t>::max() - digit) / 10)
        throw FormatError("NPY shape dimension overflows");
      cur = cur * 10 + digit;
      in_number = true;
    } else if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (in_number) {
        shape.push_back(cur);
        cur = 0;
        in_number = false;
      }
    } else {
      throw FormatError("NPY shape contains a non-integer token");
    }
  }
  if (in_number) shape.push_back(cur);
  return shape;
}

}  // namespace

NpyArray read_npy(std::istream& is) {
  unsigned char magic[6];
  read_exact(is, magic, 6, "NPY magic");
  static const unsigned char want[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  for (int i = 0; i < 6; ++i)
    if (magic[i] != want[i]) throw FormatError("not an NPY file (bad magic)");
  unsigned char version[2];
  read_exact(is, version, 2, "NPY version");
  if (version[0] != 1 || version[1] != 0)
    throw FormatError("only NPY version 1.0 is supported");
  const uint16_t header_len = get_u16(is, "NPY header length");
  std::string dict(header_len, '\0');
  read_exact(is, dict.data(), header_len, "NPY header");

  const std::string descr = dict_string_value(dict, "descr");
  size_t item_size = 0;
  if (descr == "<f4") {
    item_size = 4;
  } else if (descr == "<f8") {
    item_size = 8;
  } else {
    throw UnsupportedDtype("NPY descr must be <f4 or <f8, got '" + descr + "'");
  }
  const std::string order = dict_string_value(dict, "fortran_order");
  if (order == "True") throw UnsupportedLayout("fortran_order arrays are not supported");
  if (order != "False") throw FormatError("NPY fortran_order must be True or False");

  NpyArray arr;
  arr.shape = parse_shape_tuple(dict);
  uint64_t total = 1;
  for (uint64_t d : arr.shape) {
    if (d == 0) {
      total = 0;
      break;
    }
    if (total > std::numeric_limits<uint64_t>::max() / d)
      throw FormatError("NPY shape product overflows");
    total *= d;
  }
  const uint64_t have = byteio::bytes_left(is);
  if (have != total * item_size)
    throw FormatError("NPY payload size does not match header shape");

  arr.data.resize(total);
  if (item_size == 4) {
    get_f32_array(is, arr.data.data(), total, "NPY payload");
  } else {
    std::vector<unsigned char> buf(total * 8);
    read_exact(is, buf.data(), buf.size(), "NPY payload");
    for (uint64_t i = 0; i < total; ++i) {
      uint64_t bits = 0;
      for (int k = 7; k >= 0; --k)
        bits = (bits << 8) | buf[i * 8 + static_cast<uint64_t>(k)];
      double v;
      std::memcpy(&v, &bits, 8);
      arr.data[i] = static_cast<float>(v);
    }
  }
  return arr;
}

NpyArray read_npy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_npy(is);
}

TrialSet read_npy_pair(const std::string& data_path, const std::string& labels_path,
                       double sample_rate_hz, bool lenient, size_t* clamped) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ConfigError("sample rate must be positive");
  NpyArray data = read_npy(data_path);
  NpyArray labels = read_npy(labels_path);
  if (data.shape.size() != 3)
    throw ShapeError("data array must have rank 3 (trials, channels, samples)");
  if (labels.shape.size() != 2 || labels.shape[1] != kNumLabelDims)
    throw ShapeError("label array must have shape (trials, 4)");
  if (labels.shape[0] != data.shape[0])
    throw ShapeError("data and label arrays disagree on the trial count");
  const uint64_t limit = std::numeric_limits<uint32_t>::max();
  if (data.shape[0] > limit || data.shape[1] > limit || data.shape[2] > limit)
    throw ShapeError("array dimension too large");

  TrialSet ts;
  ts.n_trials = static_cast<uint32_t>(data.shape[0]);
  ts.n_channels = static_cast<uint32_t>(data.shape[1]);
  ts.n_samples = static_cast<uint32_t>(data.shape[2]);
  ts.sample_rate_hz = static_cast<float>(sample_rate_hz);
  ts.data = std::move(data.data);
  ts.labels = std::move(labels.data);
  const size_t n_clamped = ts.validate(lenient);
  if (clamped != nullptr) *clamped = n_clamped;
  return ts;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthSpec::validate() const {
  if (n_trials == 0 || n_channels == 0 || n_samples == 0)
    throw ConfigError("synth spec has a zero count");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ConfigError("synth sample rate must be positive");
  if (noise_std < 0.0 || !std::isfinite(noise_std))
    throw ConfigError("noise_std must be >= 0");
  for (const auto& row : class_band_map)
    for (double a : row)
      if (a < 0.0 || !std::isfinite(a))
        throw ConfigError("band amplitudes must be >= 0");
}

TrialSet synth_generate(const SynthSpec& spec) {
  spec.validate();
  TrialSet ts;
  ts.n_trials = spec.n_trials;
  ts.n_channels = spec.n_channels;
  ts.n_samples = spec.n_samples;
  ts.sample_rate_hz = static_cast<float>(spec.sample_rate_hz);
  ts.data.resize(static_cast<size_t>(spec.n_trials) * spec.n_channels * spec.n_samples);
  ts.labels.resize(static_cast<size_t>(spec.n_trials) * kNumLabelDims);

  const double two_pi = 2.0 * 3.14159265358979323846;
  for (uint32_t trial = 0; trial < spec.n_trials; ++trial) {
    const uint32_t cls = trial % 9 + 1;  // 1..9 round-robin
    for (size_t d = 0; d < kNumLabelDims; ++d)
      ts.labels[trial * kNumLabelDims + d] =
          d == static_cast<size_t>(spec.label_dim_to_drive) ? static_cast<float>(cls) : 5.0f;

    const auto& amps = spec.class_band_map[cls - 1];
    for (uint32_t ch = 0; ch < spec.n_channels; ++ch) {
      // One substream per (trial, channel): 5 phase draws, then the noise.
      rng::Xoshiro256 stream(rng::substream(
          spec.seed, static_cast<uint64_t>(trial) * spec.n_channels + ch));
      double phase[5];
      for (int b = 0; b < 5; ++b) phase[b] = two_pi * stream.next_double();
      rng::Gaussian noise(stream);

      float* out = ts.data.data() +
                   (static_cast<size_t>(trial) * spec.n_channels + ch) * spec.n_samples;
      for (uint32_t t = 0; t < spec.n_samples; ++t) {
        const double time = static_cast<double>(t) / spec.sample_rate_hz;
        double v = 0.0;
        for (int b = 0; b < 5; ++b)
          v += amps[static_cast<size_t>(b)] *
               std::sin(two_pi * kSynthBandHz[static_cast<size_t>(b)] * time + phase[b]);
        if (spec.noise_std > 0.0) v += spec.noise_std * noise.next();
        out[t] = static_cast<float>(v);
      }
    }
  }
  return ts;
}

}  // namespace eegemo::ingest

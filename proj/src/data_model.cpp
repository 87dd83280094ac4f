#include "eegemo/data_model.hpp"

#include <cmath>

#include "eegemo/rng.hpp"

namespace eegemo {

LabelDim parse_label_dim(const std::string& name) {
  if (name == "valence") return LabelDim::Valence;
  if (name == "arousal") return LabelDim::Arousal;
  if (name == "dominance") return LabelDim::Dominance;
  if (name == "liking") return LabelDim::Liking;
  throw ConfigError("unknown label dimension: " + name +
                    " (expected valence|arousal|dominance|liking)");
}

const char* label_dim_name(LabelDim dim) {
  switch (dim) {
    case LabelDim::Valence: return "valence";
    case LabelDim::Arousal: return "arousal";
    case LabelDim::Dominance: return "dominance";
    case LabelDim::Liking: return "liking";
  }
  return "?";
}

size_t TrialSet::validate(bool lenient) {
  if (n_trials == 0 || n_channels == 0 || n_samples == 0)
    throw FormatError("trial set has a zero dimension");
  if (!(sample_rate_hz > 0.0f) || !std::isfinite(sample_rate_hz))
    throw FormatError("sample rate must be positive and finite");
  const size_t want_data =
      static_cast<size_t>(n_trials) * n_channels * n_samples;
  if (data.size() != want_data)
    throw FormatError("data length does not match trials*channels*samples");
  if (labels.size() != static_cast<size_t>(n_trials) * kNumLabelDims)
    throw FormatError("label length does not match trials*4");
  size_t clamped = 0;
  for (auto& v : labels) {
    if (!std::isfinite(v)) throw InvalidLabel("label is not finite");
    if (v < 1.0f || v > 9.0f) {
      if (!lenient) throw InvalidLabel("label outside [1,9]");
      v = v < 1.0f ? 1.0f : 9.0f;
      ++clamped;
    }
  }
  return clamped;
}

ClassTarget one_hot_encode(double rating) {
  if (!std::isfinite(rating)) throw InvalidLabel("rating is not finite");
  long r = std::lround(rating);  // rounds half away from zero
  if (r < 1) r = 1;
  if (r > 9) r = 9;
  ClassTarget t{};
  t[static_cast<size_t>(r - 1)] = 1.0f;
  return t;
}

int one_hot_decode(const ClassTarget& t) {
  int hot = -1;
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1.0f) {
      if (hot >= 0) throw InvalidLabel("one-hot vector has multiple ones");
      hot = static_cast<int>(i);
    } else if (t[i] != 0.0f) {
      throw InvalidLabel("one-hot vector has a non-{0,1} entry");
    }
  }
  if (hot < 0) throw InvalidLabel("one-hot vector has no one");
  return hot + 1;
}

SplitIndices split_indices(uint32_t n, double train_fraction, uint64_t seed) {
  if (n < 2) throw TooFewSamples("need at least 2 samples to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArg("train fraction must lie in (0,1)");
  rng::Xoshiro256 gen(seed);
  std::vector<uint32_t> perm = rng::permutation(n, gen);
  const auto n_train =
      static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
  SplitIndices s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
  s.test.assign(perm.begin() + static_cast<long>(n_train), perm.end());
  return s;
}

std::vector<float> select_target(const TrialSet& ts, LabelDim dim) {
  std::vector<float> out(ts.n_trials);
  for (uint32_t t = 0; t < ts.n_trials; ++t) out[t] = ts.label(t, dim);
  return out;
}

}  // namespace eegemo

#ifndef EEGEMO_CONFIG_HPP
#define EEGEMO_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "eegemo/data_model.hpp"
#include "eegemo/dsp.hpp"
#include "eegemo/ingest.hpp"
#include "eegemo/net.hpp"

namespace eegemo::config {

// Every knob of the pipeline, loadable from a key=value file ('#' comments).
// Unknown keys are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  // spectral features
  double sample_rate_hz = 128.0;
  std::vector<uint32_t> channels = dsp::default_channel_subset();
  dsp::BandTable bands = dsp::BandTable::defaults();
  uint32_t window_len = 256;
  uint32_t hop = 16;
  bool log_power = false;
  bool allow_fs_mismatch = false;
  // sequences and split
  std::string sequence_mode = "feature_as_steps";
  double split_fraction = 0.8;
  std::string split_unit = "window";  // window | trial
  uint64_t split_seed = 1;
  // model
  uint32_t bilstm_units = 128;
  std::vector<uint32_t> lstm_units = {256, 64, 64, 32};
  std::vector<double> dropout_rates = {0.6, 0.6, 0.6, 0.6, 0.4};
  uint32_t dense_units = 16;
  uint32_t n_classes = 9;
  uint64_t init_seed = 42;
  // training
  std::string label_dim = "valence";
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint32_t batch_size = 256;
  uint32_t epochs = 50;
  uint32_t eval_every = 1;
  uint32_t patience = 0;  // 0 disables early stopping
  uint64_t shuffle_seed = 7;
  uint64_t dropout_seed = 99;
  double grad_clip = 0.0;  // 0 disables clipping
  bool best_checkpoint = true;
  bool save_optimizer = false;
  uint32_t threads = 0;  // 0 = hardware default

  void validate() const;
  net::ModelConfig model_config(uint32_t input_dim) const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

// Applies "key=value" command-line overrides on top of a config.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

ingest::SynthSpec parse_synth_spec(const std::string& text);
ingest::SynthSpec load_synth_spec(const std::string& path);

// Checkpoint-embedded metadata: the effective run config plus everything a
// later evaluation needs to reproduce training-time preprocessing exactly.
// The normalization vectors are serialized as hex floats, so the round trip
// is bit-exact.
struct CheckpointMeta {
  RunConfig run;
  uint32_t input_dim = 0;
  uint32_t seq_len = 0;
  std::vector<float> norm_mean, norm_std;
};

std::string serialize_checkpoint_meta(const CheckpointMeta& meta);
CheckpointMeta parse_checkpoint_meta(const std::string& text);

}  // namespace eegemo::config

#endif

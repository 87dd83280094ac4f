// Command-line front end for the EEG emotion-classification pipeline.
//
// Exit codes: 0 success, 1 I/O, 2 validation/format/config, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "eegemo/config.hpp"
#include "eegemo/data_model.hpp"
#include "eegemo/dsp.hpp"
#include "eegemo/errors.hpp"
#include "eegemo/gradcheck.hpp"
#include "eegemo/ingest.hpp"
#include "eegemo/threadpool.hpp"
#include "eegemo/train.hpp"

namespace {

using namespace eegemo;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  unsigned threads = 0;
};

config::RunConfig effective_config(const CommonOpts& opts) {
  config::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = config::load_run_config(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.threads > 0) cfg.threads = opts.threads;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration file (key=value lines)");
  cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set epochs=5")
      ->take_all();
  cmd->add_option("--threads", opts.threads, "worker threads (0 = hardware default)");
}

int cmd_synth(const std::string& spec_path, const std::string& out_path) {
  ingest::SynthSpec spec;
  if (!spec_path.empty()) spec = config::load_synth_spec(spec_path);
  const TrialSet ts = ingest::synth_generate(spec);
  ingest::write_eegb(ts, out_path);
  std::printf("wrote %s: %u trials x %u channels x %u samples @ %.1f Hz\n",
              out_path.c_str(), ts.n_trials, ts.n_channels, ts.n_samples,
              static_cast<double>(ts.sample_rate_hz));
  return 0;
}

int cmd_convert(const std::string& data_path, const std::string& labels_path,
                double fs, const std::string& out_path, bool lenient) {
  size_t clamped = 0;
  const TrialSet ts = ingest::read_npy_pair(data_path, labels_path, fs, lenient, &clamped);
  if (clamped > 0)
    std::fprintf(stderr, "warning: clamped %zu out-of-range labels into [1,9]\n", clamped);
  ingest::write_eegb(ts, out_path);
  std::printf("wrote %s: %u trials x %u channels x %u samples @ %.1f Hz\n",
              out_path.c_str(), ts.n_trials, ts.n_channels, ts.n_samples,
              static_cast<double>(ts.sample_rate_hz));
  return 0;
}

int cmd_features(const std::vector<std::string>& inputs, const CommonOpts& opts,
                 const std::string& out_path, bool lenient) {
  const config::RunConfig cfg = effective_config(opts);
  ThreadPool pool(ThreadPool::resolve(cfg.threads));

  // Pool all input recordings into one trial set.
  std::optional<TrialSet> pooled;
  for (const auto& path : inputs) {
    size_t clamped = 0;
    TrialSet ts = ingest::read_eegb(path, lenient, &clamped);
    if (clamped > 0)
      std::fprintf(stderr, "warning: %s: clamped %zu labels\n", path.c_str(), clamped);
    if (!pooled.has_value()) {
      pooled = std::move(ts);
      continue;
    }
    if (ts.n_channels != pooled->n_channels || ts.n_samples != pooled->n_samples ||
        ts.sample_rate_hz != pooled->sample_rate_hz)
      throw ShapeError("input files disagree on channels/samples/rate: " + path);
    pooled->data.insert(pooled->data.end(), ts.data.begin(), ts.data.end());
    pooled->labels.insert(pooled->labels.end(), ts.labels.begin(), ts.labels.end());
    pooled->n_trials += ts.n_trials;
  }

  const dsp::FeatureFile ff = train::build_features(*pooled, cfg, &pool);
  dsp::write_features(ff, out_path);
  std::ofstream cfg_out(out_path + ".cfg");
  if (!cfg_out) throw IoError("cannot write effective config next to " + out_path);
  cfg_out << config::serialize_run_config(cfg);
  std::printf("wrote %s: %u samples, seq %u x %u\n", out_path.c_str(), ff.n_samples,
              ff.seq_len, ff.input_dim);
  return 0;
}

int cmd_train(const std::string& feat_path, const std::string& label_dim,
              const CommonOpts& opts, const std::string& out_dir, bool final_epoch) {
  config::RunConfig cfg = effective_config(opts);
  if (!label_dim.empty()) {
    parse_label_dim(label_dim);  // reject unknown names early
    cfg.label_dim = label_dim;
  }
  if (final_epoch) cfg.best_checkpoint = false;
  ThreadPool pool(ThreadPool::resolve(cfg.threads));

  const dsp::FeatureFile ff = dsp::read_features(feat_path);
  const train::FitResult result = train::fit(ff, cfg, out_dir, &pool, &std::cout);
  std::printf("best epoch %u  test accuracy %.4f (%llu/%llu)\n", result.best_epoch,
              result.best_test.accuracy,
              static_cast<unsigned long long>(result.best_test.correct),
              static_cast<unsigned long long>(result.best_test.n));
  std::printf("checkpoint: %s\n", result.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& feat_path,
             bool vote_per_trial, bool all_samples, unsigned threads) {
  const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  const config::RunConfig& cfg = ckpt.meta.run;
  ThreadPool pool(ThreadPool::resolve(threads > 0 ? threads : cfg.threads));

  const dsp::FeatureFile ff = dsp::read_features(feat_path);
  if (ff.seq_len != ckpt.meta.seq_len || ff.input_dim != ckpt.meta.input_dim)
    throw ShapeError("feature file shape does not match the checkpoint");

  FeatureDataset ds = dsp::select_dimension(ff, parse_label_dim(cfg.label_dim));
  const dsp::NormStats stats{ckpt.meta.norm_mean, ckpt.meta.norm_std};
  dsp::zscore_apply(ds.features.data(), ds.n_samples, ds.flat_dim(), stats);

  std::vector<uint32_t> indices;
  if (all_samples) {
    indices.resize(ds.n_samples);
    for (uint32_t i = 0; i < ds.n_samples; ++i) indices[i] = i;
    std::printf("evaluating all %u samples\n", ds.n_samples);
  } else {
    indices = train::make_split(ff, cfg).test;
    std::printf("evaluating the test split (%zu samples, seed %llu)\n", indices.size(),
                static_cast<unsigned long long>(cfg.split_seed));
  }

  const train::Metrics m =
      train::evaluate(ckpt.params, ds, indices, cfg.batch_size, &pool);
  std::printf("label dimension: %s\n%s", cfg.label_dim.c_str(),
              train::format_metrics(m).c_str());
  if (vote_per_trial) {
    if (!ff.has_trial_ids())
      throw ConfigError("--vote-per-trial needs trial ids in the feature file");
    const train::Metrics mv = train::evaluate_vote_per_trial(
        ckpt.params, ds, indices, ff.trial_ids, cfg.batch_size, &pool);
    std::printf("\nper-trial majority vote\n%s", train::format_metrics(mv).c_str());
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, bool corrupt) {
  const gradcheck::Report report = gradcheck::run(seed, corrupt);
  std::fputs(gradcheck::format_report(report).c_str(), stdout);
  return report.pass ? 0 : 3;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"EEG band-power features + bidirectional-LSTM emotion classifier"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic recording");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "synth spec file (key=value)");
  synth->add_option("--out", synth_out, "output .eegb path")->required();

  auto* convert = app.add_subcommand("convert", "convert an NPY pair to EEGB");
  std::string conv_data, conv_labels, conv_out;
  double conv_fs = 128.0;
  bool conv_lenient = false;
  convert->add_option("--data", conv_data, "data .npy, shape (trials, channels, samples)")
      ->required();
  convert->add_option("--labels", conv_labels, "labels .npy, shape (trials, 4)")->required();
  convert->add_option("--fs", conv_fs, "sample rate in Hz (default 128)");
  convert->add_option("--out", conv_out, "output .eegb path")->required();
  convert->add_flag("--lenient", conv_lenient, "clamp out-of-range labels instead of failing");

  auto* features = app.add_subcommand("features", "extract band-power feature sequences");
  std::vector<std::string> feat_inputs;
  std::string feat_out;
  bool feat_lenient = false;
  CommonOpts feat_opts;
  features->add_option("--in", feat_inputs, "input .eegb files (pooled)")
      ->required()
      ->take_all();
  features->add_option("--out", feat_out, "output .feat path")->required();
  features->add_flag("--lenient", feat_lenient, "clamp out-of-range labels instead of failing");
  add_common(features, feat_opts);
  std::string feat_channels;
  features->add_option("--channels", feat_channels,
                       "comma-separated channel override (shortcut for --set channels=...)");

  auto* tr = app.add_subcommand("train", "train one model for one label dimension");
  std::string train_feat, train_label, train_out;
  bool train_final = false;
  CommonOpts train_opts;
  tr->add_option("--feat", train_feat, "feature file from `features`")->required();
  tr->add_option("--label-dim", train_label, "valence|arousal|dominance|liking");
  tr->add_option("--out", train_out, "output directory")->required();
  tr->add_flag("--final-epoch", train_final,
               "keep the final-epoch model instead of the best-by-test-accuracy one");
  add_common(tr, train_opts);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a feature file");
  std::string eval_ckpt, eval_feat;
  bool eval_vote = false, eval_all = false;
  unsigned eval_threads = 0;
  ev->add_option("--checkpoint", eval_ckpt, "model .emoc file")->required();
  ev->add_option("--feat", eval_feat, "feature file")->required();
  ev->add_flag("--vote-per-trial", eval_vote, "also report per-trial majority-vote metrics");
  ev->add_flag("--all-samples", eval_all,
               "evaluate every sample instead of the checkpoint's test split");
  ev->add_option("--threads", eval_threads, "worker threads (0 = hardware default)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the BPTT gradients");
  uint64_t gc_seed = 7;
  bool gc_corrupt = false;
  gc->add_option("--seed", gc_seed, "rig seed");
  gc->add_flag("--corrupt", gc_corrupt)->group("");  // negative-control hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/usage
    return code == 0 ? 0 : 2;
  }

  if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
  if (convert->parsed())
    return cmd_convert(conv_data, conv_labels, conv_fs, conv_out, conv_lenient);
  if (features->parsed()) {
    if (!feat_channels.empty())
      feat_opts.overrides.push_back("channels=" + feat_channels);
    return cmd_features(feat_inputs, feat_opts, feat_out, feat_lenient);
  }
  if (tr->parsed()) return cmd_train(train_feat, train_label, train_opts, train_out, train_final);
  if (ev->parsed()) return cmd_eval(eval_ckpt, eval_feat, eval_vote, eval_all, eval_threads);
  if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_corrupt);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}

#include "eegemo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "eegemo/byteio.hpp"
#include "eegemo/rng.hpp"

namespace eegemo::train {

namespace {

std::vector<uint8_t> target_classes(const FeatureDataset& ds) {
  std::vector<uint8_t> cls(ds.n_samples);
  for (size_t i = 0; i < ds.n_samples; ++i)
    cls[i] = static_cast<uint8_t>(one_hot_decode(ds.targets[i]) - 1);
  return cls;
}

// Gathers rows `indices[i0..i1)` into a (B x seq_len x input_dim) batch.
Tensor<float> gather_batch(const FeatureDataset& ds, const std::vector<uint32_t>& indices,
                           size_t i0, size_t i1) {
  const size_t flat = ds.flat_dim();
  Tensor<float> x({i1 - i0, ds.seq_len, ds.input_dim});
  for (size_t i = i0; i < i1; ++i)
    std::copy_n(ds.sample(indices[i]), flat, x.v.data() + (i - i0) * flat);
  return x;
}

void finish_metrics(Metrics& m, double loss_total) {
  uint64_t trace = 0;
  std::array<uint64_t, kNumClasses> row_sum{}, col_sum{};
  for (size_t a = 0; a < kNumClasses; ++a)
    for (size_t p = 0; p < kNumClasses; ++p) {
      row_sum[a] += m.confusion[a][p];
      col_sum[p] += m.confusion[a][p];
      if (a == p) trace += m.confusion[a][p];
    }
  m.correct = trace;
  m.accuracy = m.n > 0 ? static_cast<double>(trace) / static_cast<double>(m.n) : 0.0;
  m.mean_loss = m.n > 0 ? loss_total / static_cast<double>(m.n) : 0.0;
  for (size_t k = 0; k < kNumClasses; ++k) {
    m.precision[k] = col_sum[k] > 0
                         ? static_cast<double>(m.confusion[k][k]) / static_cast<double>(col_sum[k])
                         : 0.0;
    m.recall[k] = row_sum[k] > 0
                      ? static_cast<double>(m.confusion[k][k]) / static_cast<double>(row_sum[k])
                      : 0.0;
  }
}

}  // namespace

Metrics evaluate(const net::ModelParams<float>& params, const FeatureDataset& ds,
                 const std::vector<uint32_t>& indices, uint32_t batch_size,
                 ThreadPool* pool) {
  if (indices.empty()) throw TooFewSamples("evaluation needs at least one sample");
  const std::vector<uint8_t> cls = target_classes(ds);
  Metrics m;
  m.n = indices.size();
  double loss_total = 0.0;
  for (size_t at = 0; at < indices.size(); at += batch_size) {
    const size_t hi = std::min(indices.size(), at + batch_size);
    const Tensor<float> x = gather_batch(ds, indices, at, hi);
    const Tensor<float> probs =
        net::model_forward(x, params, net::DropoutMode::Inference, 0,
                           static_cast<net::ModelCache<float>*>(nullptr), pool);
    const size_t b_n = hi - at;
    for (size_t b = 0; b < b_n; ++b) {
      const float* row = probs.v.data() + b * kNumClasses;
      const size_t actual = cls[indices[at + b]];
      const size_t predicted = argmax_row(row, kNumClasses);
      m.confusion[actual][predicted] += 1;
      double p = static_cast<double>(row[actual]);
      if (p < kProbClamp) p = kProbClamp;
      loss_total -= std::log(p);
    }
  }
  finish_metrics(m, loss_total);
  return m;
}

Metrics evaluate_vote_per_trial(const net::ModelParams<float>& params,
                                const FeatureDataset& ds,
                                const std::vector<uint32_t>& indices,
                                const std::vector<uint32_t>& trial_ids,
                                uint32_t batch_size, ThreadPool* pool) {
  if (indices.empty()) throw TooFewSamples("evaluation needs at least one sample");
  if (trial_ids.size() != ds.n_samples)
    throw ShapeError("trial id count does not match the dataset");
  const std::vector<uint8_t> cls = target_classes(ds);

  // votes[trial][class]
  std::map<uint32_t, std::array<uint64_t, kNumClasses>> votes;
  std::map<uint32_t, uint8_t> trial_actual;
  for (size_t at = 0; at < indices.size(); at += batch_size) {
    const size_t hi = std::min(indices.size(), at + batch_size);
    const Tensor<float> x = gather_batch(ds, indices, at, hi);
    const Tensor<float> probs =
        net::model_forward(x, params, net::DropoutMode::Inference, 0,
                           static_cast<net::ModelCache<float>*>(nullptr), pool);
    for (size_t b = 0; b < hi - at; ++b) {
      const uint32_t sample = indices[at + b];
      const uint32_t trial = trial_ids[sample];
      const size_t predicted = argmax_row(probs.v.data() + b * kNumClasses, kNumClasses);
      votes[trial][predicted] += 1;
      trial_actual[trial] = cls[sample];
    }
  }

  Metrics m;
  m.n = votes.size();
  for (const auto& [trial, counts] : votes) {
    size_t best = 0;
    for (size_t k = 1; k < kNumClasses; ++k)
      if (counts[k] > counts[best]) best = k;
    m.confusion[trial_actual[trial]][best] += 1;
  }
  finish_metrics(m, 0.0);
  return m;
}

double train_epoch(net::ModelParams<float>& params, AdamState<float>& adam,
                   const FeatureDataset& ds, const std::vector<uint32_t>& train_idx,
                   const TrainConfig& cfg, uint32_t epoch, ThreadPool* pool) {
  if (train_idx.empty()) throw TooFewSamples("empty training split");
  const std::vector<uint8_t> cls = target_classes(ds);

  rng::Xoshiro256 shuffle_rng(rng::substream(cfg.shuffle_seed, epoch));
  const std::vector<uint32_t> perm =
      rng::permutation(static_cast<uint32_t>(train_idx.size()), shuffle_rng);
  std::vector<uint32_t> order(train_idx.size());
  for (size_t i = 0; i < perm.size(); ++i) order[i] = train_idx[perm[i]];

  const uint64_t epoch_seed = rng::substream(cfg.dropout_seed, epoch);
  double loss_total = 0.0;
  size_t batch_index = 0;
  for (size_t at = 0; at < order.size(); at += cfg.batch_size, ++batch_index) {
    const size_t hi = std::min(order.size(), at + cfg.batch_size);
    const size_t b_n = hi - at;
    const Tensor<float> x = gather_batch(ds, order, at, hi);
    std::vector<uint8_t> batch_cls(b_n);
    for (size_t b = 0; b < b_n; ++b) batch_cls[b] = cls[order[at + b]];

    net::ModelCache<float> cache;
    const Tensor<float> probs =
        net::model_forward(x, params, net::DropoutMode::Train,
                           rng::substream(epoch_seed, batch_index), &cache, pool);
    loss_total += cross_entropy(probs.v.data(), b_n, kNumClasses, batch_cls.data()) *
                  static_cast<double>(b_n);
    std::vector<float> grads = net::model_backward(cache, params, batch_cls, pool);

    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (float g : grads) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        const float scale = static_cast<float>(cfg.grad_clip / norm);
        for (float& g : grads) g *= scale;
      }
    }
    adam_step(params.data, grads, adam, pool);
  }
  return loss_total / static_cast<double>(order.size());
}

SplitIndices make_split(const dsp::FeatureFile& ff, const TrainConfig& cfg) {
  if (cfg.split_unit == "window")
    return split_indices(ff.n_samples, cfg.split_fraction, cfg.split_seed);

  // Trial-level split: partition distinct trials, then assign samples.
  if (!ff.has_trial_ids())
    throw ConfigError("trial-level split needs trial ids in the feature file");
  std::vector<uint32_t> unique = ff.trial_ids;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const SplitIndices trial_split =
      split_indices(static_cast<uint32_t>(unique.size()), cfg.split_fraction, cfg.split_seed);
  std::vector<bool> is_train_trial(unique.size(), false);
  for (uint32_t i : trial_split.train) is_train_trial[i] = true;
  std::map<uint32_t, size_t> pos;
  for (size_t i = 0; i < unique.size(); ++i) pos[unique[i]] = i;

  SplitIndices s;
  s.seed = cfg.split_seed;
  for (uint32_t i = 0; i < ff.n_samples; ++i) {
    if (is_train_trial[pos[ff.trial_ids[i]]])
      s.train.push_back(i);
    else
      s.test.push_back(i);
  }
  if (s.train.empty() || s.test.empty())
    throw TooFewSamples("trial-level split left one side empty");
  return s;
}

dsp::FeatureFile build_features(const TrialSet& ts, const TrainConfig& cfg,
                                ThreadPool* pool) {
  const dsp::WindowPlan plan{cfg.window_len, cfg.hop};
  const dsp::RawFeatures raw =
      dsp::extract_features(ts, cfg.channels, cfg.bands, plan, cfg.log_power,
                            cfg.allow_fs_mismatch, pool);
  uint32_t steps = 0;
  const dsp::SequenceMode mode = dsp::parse_sequence_mode(cfg.sequence_mode, &steps);
  return dsp::to_sequences(raw, mode, steps, ts);
}

FitResult fit(const TrialSet& ts, const TrainConfig& cfg, const std::string& out_dir,
              ThreadPool* pool, std::ostream* log) {
  return fit(build_features(ts, cfg, pool), cfg, out_dir, pool, log);
}

FitResult fit(const dsp::FeatureFile& ff, const TrainConfig& cfg,
              const std::string& out_dir, ThreadPool* pool, std::ostream* log) {
  cfg.validate();
  const LabelDim dim = parse_label_dim(cfg.label_dim);
  FitResult result;

  FeatureDataset ds = dsp::select_dimension(ff, dim);
  result.split = make_split(ff, cfg);
  if (result.split.train.size() < 2)
    throw TooFewSamples("training split needs at least 2 samples");
  if (result.split.test.empty())
    throw TooFewSamples("test split is empty; lower split_fraction");

  result.stats =
      dsp::zscore_fit(ds.features.data(), ds.n_samples, ds.flat_dim(), result.split.train);
  dsp::zscore_apply(ds.features.data(), ds.n_samples, ds.flat_dim(), result.stats);
  ds.feature_stats = {{result.stats.mean, result.stats.std_dev}};

  const net::ModelConfig mcfg = cfg.model_config(ff.input_dim);
  net::ModelParams<float> params = net::init_params<float>(mcfg, cfg.init_seed);
  AdamState<float> adam;
  adam.init(params.size(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon});

  double best_acc = -1.0;
  uint32_t evals_since_best = 0;
  for (uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double train_loss =
        train_epoch(params, adam, ds, result.split.train, cfg, epoch, pool);
    const bool eval_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
    if (!eval_now) {
      result.history.push_back({epoch, "train", train_loss, -1.0});
      continue;
    }
    const Metrics on_train = evaluate(params, ds, result.split.train, cfg.batch_size, pool);
    const Metrics on_test = evaluate(params, ds, result.split.test, cfg.batch_size, pool);
    result.history.push_back({epoch, "train", train_loss, on_train.accuracy});
    result.history.push_back({epoch, "test", on_test.mean_loss, on_test.accuracy});
    if (log != nullptr)
      *log << "epoch " << epoch << "  train_loss " << train_loss << "  test_acc "
           << on_test.accuracy << "\n";
    if (on_test.accuracy > best_acc) {
      best_acc = on_test.accuracy;
      result.best_epoch = epoch;
      result.best_test = on_test;
      result.best_params = params;
      evals_since_best = 0;
    } else if (cfg.patience > 0 && ++evals_since_best >= cfg.patience) {
      if (log != nullptr) *log << "early stop at epoch " << epoch << "\n";
      break;
    }
  }
  result.final_params = std::move(params);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    config::CheckpointMeta meta;
    meta.run = cfg;
    meta.input_dim = ff.input_dim;
    meta.seq_len = ff.seq_len;
    meta.norm_mean = result.stats.mean;
    meta.norm_std = result.stats.std_dev;
    const auto ckpt = dir / ("model_" + cfg.label_dim + ".emoc");
    const net::ModelParams<float>& chosen =
        cfg.best_checkpoint ? result.best_params : result.final_params;
    save_checkpoint(ckpt.string(), chosen, meta,
                    cfg.save_optimizer ? &adam : nullptr);
    result.checkpoint_path = ckpt.string();
    write_metrics_csv((dir / "metrics.csv").string(), result.history);
    std::ofstream cfg_out(dir / "effective.cfg");
    if (!cfg_out) throw IoError("cannot write effective config");
    cfg_out << config::serialize_run_config(cfg);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::string& path, const net::ModelParams<float>& params,
                     const config::CheckpointMeta& meta, const AdamState<float>* adam) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  const std::string cfg_text = config::serialize_checkpoint_meta(meta);
  const size_t expect =
      meta.run.model_config(meta.input_dim).param_count();
  if (params.size() != expect)
    throw ShapeError("checkpoint: parameter count does not match the config");
  os.write("EMOC", 4);
  byteio::put_u16(os, 1);
  byteio::put_u32(os, static_cast<uint32_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  byteio::put_f32_array(os, params.data.data(), params.data.size());
  os.put(adam != nullptr ? '\1' : '\0');
  if (adam != nullptr) {
    if (adam->m.size() != params.size() || adam->v.size() != params.size())
      throw ShapeError("checkpoint: optimizer state does not match parameters");
    byteio::put_u64(os, adam->t);
    byteio::put_f32_array(os, adam->m.data(), adam->m.size());
    byteio::put_f32_array(os, adam->v.data(), adam->v.size());
  }
  if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(std::istream& is) {
  char magic[4];
  byteio::read_exact(is, magic, 4, "magic");
  if (std::string(magic, 4) != "EMOC") throw FormatError("bad magic, expected EMOC");
  if (byteio::get_u16(is, "version") != 1)
    throw FormatError("unsupported checkpoint version");
  const uint32_t cfg_len = byteio::get_u32(is, "config length");
  if (cfg_len == 0 || cfg_len > (1u << 24))
    throw FormatError("checkpoint config block has an implausible size");
  if (byteio::bytes_left(is) < cfg_len)
    throw FormatError("truncated file while reading checkpoint config");
  std::string cfg_text(cfg_len, '\0');
  byteio::read_exact(is, cfg_text.data(), cfg_len, "checkpoint config");

  Checkpoint ckpt;
  try {
    ckpt.meta = config::parse_checkpoint_meta(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  const net::ModelConfig mcfg = ckpt.meta.run.model_config(ckpt.meta.input_dim);
  const uint64_t count = mcfg.param_count();

  const uint64_t left = byteio::bytes_left(is);
  if (left != count * 4 + 1 && left != count * 4 + 1 + 8 + count * 8)
    throw FormatError("checkpoint payload size mismatch (config vs parameters)");

  ckpt.params.config = mcfg;
  ckpt.params.blocks = net::layout_blocks(mcfg);
  ckpt.params.data.resize(count);
  byteio::get_f32_array(is, ckpt.params.data.data(), count, "parameters");
  char flag = 0;
  byteio::read_exact(is, &flag, 1, "optimizer flag");
  if (flag != 0 && flag != 1) throw FormatError("checkpoint optimizer flag must be 0/1");
  if ((flag == 1) != (left == count * 4 + 1 + 8 + count * 8))
    throw FormatError("checkpoint optimizer flag disagrees with file size");
  if (flag == 1) {
    AdamState<float> adam;
    adam.hp = {ckpt.meta.run.lr, ckpt.meta.run.beta1, ckpt.meta.run.beta2,
               ckpt.meta.run.adam_epsilon};
    adam.t = byteio::get_u64(is, "optimizer step");
    adam.m.resize(count);
    adam.v.resize(count);
    byteio::get_f32_array(is, adam.m.data(), count, "optimizer m");
    byteio::get_f32_array(is, adam.v.data(), count, "optimizer v");
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return load_checkpoint(is);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "epoch,split,loss,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", r.loss);
    os << r.epoch << ',' << r.split << ',' << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", r.accuracy);
    os << buf << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

std::string format_metrics(const Metrics& m) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "samples   %llu\naccuracy  %.4f (%llu/%llu)\nmean loss %.6f\n",
                static_cast<unsigned long long>(m.n), m.accuracy,
                static_cast<unsigned long long>(m.correct),
                static_cast<unsigned long long>(m.n), m.mean_loss);
  os << buf;
  os << "class     ";
  for (size_t k = 1; k <= kNumClasses; ++k) os << "     " << k;
  os << "\nprecision ";
  for (size_t k = 0; k < kNumClasses; ++k) {
    std::snprintf(buf, sizeof buf, " %5.2f", m.precision[k]);
    os << buf;
  }
  os << "\nrecall    ";
  for (size_t k = 0; k < kNumClasses; ++k) {
    std::snprintf(buf, sizeof buf, " %5.2f", m.recall[k]);
    os << buf;
  }
  os << "\nconfusion (rows = actual, cols = predicted)\n";
  for (size_t a = 0; a < kNumClasses; ++a) {
    for (size_t p = 0; p < kNumClasses; ++p) {
      std::snprintf(buf, sizeof buf, "%6llu",
                    static_cast<unsigned long long>(m.confusion[a][p]));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string format_accuracy_table(
    const std::array<std::optional<double>, kNumLabelDims>& accuracy) {
  std::ostringstream os;
  os << "dimension  ";
  for (size_t d = 0; d < kNumLabelDims; ++d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%10s", label_dim_name(static_cast<LabelDim>(d)));
    os << buf;
  }
  os << "\naccuracy % ";
  double sum = 0.0;
  size_t have = 0;
  for (size_t d = 0; d < kNumLabelDims; ++d) {
    char buf[32];
    if (accuracy[d].has_value()) {
      std::snprintf(buf, sizeof buf, "%10.2f", *accuracy[d] * 100.0);
      sum += *accuracy[d];
      ++have;
    } else {
      std::snprintf(buf, sizeof buf, "%10s", "-");
    }
    os << buf;
  }
  os << "\n";
  if (have > 0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "overall %%  %10.2f\n", sum / static_cast<double>(have) * 100.0);
    os << buf;
  }
  return os.str();
}

}  // namespace eegemo::train

// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Some criteria drive the CLI binary (EEGEMO_BIN).

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eegemo/config.hpp"
#include "eegemo/data_model.hpp"
#include "eegemo/dsp.hpp"
#include "eegemo/gradcheck.hpp"
#include "eegemo/ingest.hpp"
#include "eegemo/net.hpp"
#include "eegemo/rng.hpp"
#include "eegemo/threadpool.hpp"
#include "eegemo/train.hpp"
#include "helpers.hpp"

using namespace eegemo;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  std::printf("%s  criterion %d: %s  [%s]\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

int run_cli(const std::string& args, const fs::path& log) {
  const char* bin = std::getenv("EEGEMO_BIN");
  if (bin == nullptr) return -1;
  const std::string cmd = std::string(bin) + " " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Synthetic recording shaped like a standard 32-participant export trial set:
// 40 trials x 40 channels x 8064 samples at 128 Hz.
ingest::SynthSpec full_shape_spec() {
  ingest::SynthSpec spec;
  spec.n_trials = 40;
  spec.n_channels = 40;
  spec.n_samples = 8064;
  spec.noise_std = 0.05;
  spec.seed = 20240801;
  for (size_t k = 0; k < 9; ++k)
    for (size_t b = 0; b < 5; ++b)
      spec.class_band_map[k][b] = std::pow(1.5, double(k)) * (b == k % 5 ? 3.0 : 1.0);
  return spec;
}

// --------------------------------------------------------------------------
// criterion 1: end-to-end run over a full-shape NPY export, all four rating
// dimensions, side-by-side report

void criterion_1(const TrialSet& full, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path log = dir / "c1.log";
  std::printf(
      "note  criterion 1: full-corpus accuracy targets need the license-gated\n"
      "      recordings and long training; substituted by criteria 2-9 per the\n"
      "      acceptance contract. verifying the pipeline runs end to end on a\n"
      "      full-shape export and reports all four dimensions side by side.\n");

  // export the trial set as an NPY pair, as a user would
  std::vector<float> labels(full.labels.begin(), full.labels.end());
  testutil::write_npy((dir / "data.npy").string(),
                      {full.n_trials, full.n_channels, full.n_samples}, full.data);
  testutil::write_npy((dir / "labels.npy").string(), {full.n_trials, 4}, labels);

  bool ok = true;
  std::string detail;
  ok &= run_cli("convert --data " + (dir / "data.npy").string() + " --labels " +
                    (dir / "labels.npy").string() + " --fs 128 --out " +
                    (dir / "full.eegb").string(),
                log) == 0;

  std::ofstream(dir / "c1.cfg")
      << "sequence_mode = window_as_steps:16\n"
         "bilstm_units = 8\nlstm_units = 16,8\ndropout_rates = 0.1,0.1,0.1\n"
         "dense_units = 8\nbatch_size = 32\nepochs = 2\nlr = 0.002\nlog_power = true\n";
  ok &= run_cli("features --in " + (dir / "full.eegb").string() + " --config " +
                    (dir / "c1.cfg").string() + " --out " + (dir / "full.feat").string(),
                log) == 0;

  std::array<std::optional<double>, kNumLabelDims> accuracy;
  for (size_t d = 0; ok && d < kNumLabelDims; ++d) {
    const std::string dim = label_dim_name(static_cast<LabelDim>(d));
    const fs::path out = dir / ("c1_" + dim);
    ok &= run_cli("train --feat " + (dir / "full.feat").string() + " --label-dim " + dim +
                      " --config " + (dir / "c1.cfg").string() + " --out " + out.string(),
                  log) == 0;
    ok &= run_cli("eval --checkpoint " + (out / ("model_" + dim + ".emoc")).string() +
                      " --feat " + (dir / "full.feat").string(),
                  log) == 0;
    if (!ok) break;
    // best test accuracy from the metrics table
    std::ifstream csv(out / "metrics.csv");
    std::string line;
    std::getline(csv, line);  // header
    double best = -1.0;
    while (std::getline(csv, line)) {
      std::istringstream row(line);
      std::string epoch, split, loss, acc;
      std::getline(row, epoch, ',');
      std::getline(row, split, ',');
      std::getline(row, loss, ',');
      std::getline(row, acc, ',');
      if (split == "test") best = std::max(best, std::strtod(acc.c_str(), nullptr));
    }
    if (best < 0.0) ok = false;
    accuracy[d] = best;
  }

  if (ok) {
    const std::string table = train::format_accuracy_table(accuracy);
    std::fputs(table.c_str(), stdout);
    for (const auto& a : accuracy) ok &= a.has_value();
    ok &= table.find("valence") != std::string::npos &&
          table.find("liking") != std::string::npos;
    detail = fmt("4 dimensions trained and reported, %.0fs", seconds_since(t0));
  } else {
    detail = "a pipeline stage exited nonzero, see " + log.string();
  }
  report(1, ok, "end-to-end four-dimension run on a full-shape export", detail);
}

// --------------------------------------------------------------------------
// criterion 2: FFT vs direct DFT + Parseval on 1,000 random frames

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  rng::Xoshiro256 gen(0xFF7);
  const dsp::Fft fft(256);
  const auto window = dsp::hann_window(256);
  std::vector<std::complex<double>> out;
  double worst_bin = 0.0, worst_parseval = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> frame(256);
    for (auto& v : frame) v = 2.0 * gen.next_double() - 1.0;
    fft.forward(frame, out);
    const auto oracle = testutil::oracle_dft(frame);
    for (size_t k = 0; k < 256; ++k)
      worst_bin = std::max(worst_bin, std::abs(out[k] - oracle[k]));

    // Parseval through the one-sided power path
    double e_time = 0.0;
    for (size_t n = 0; n < 256; ++n) {
      const double wx = frame[n] * window[n];
      e_time += wx * wx;
    }
    const dsp::Spectrum s = dsp::rfft_power(frame, window, 128.0);
    double total = 0.0;
    for (double p : s.power) total += p;
    worst_parseval =
        std::max(worst_parseval, std::fabs(total - e_time / 256.0) / (e_time / 256.0));
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_bin < 1e-9 && worst_parseval < 1e-10 && elapsed < 10.0;
  report(2, pass, "FFT matches the direct DFT oracle; Parseval holds",
         fmt("max |fft-dft| %.2e (<1e-9), parseval rel %.2e (<1e-10), %.2fs (<10s)",
             worst_bin, worst_parseval, elapsed));
}

// --------------------------------------------------------------------------
// criterion 3: band binning at fs=128, N=256

void criterion_3() {
  const dsp::BandTable table = dsp::BandTable::defaults();
  const std::array<std::pair<int, int>, 5> want = {
      std::pair<int, int>{8, 15}, {16, 23}, {24, 31}, {32, 59}, {60, 90}};
  bool pass = true;
  for (size_t b = 0; b < 5; ++b) {
    const bool last = b == 4;
    int lo = 999, hi = -1;
    for (int k = 0; k <= 128; ++k) {
      const double f = 0.5 * k;
      const bool in = f >= table.bands[b].low_hz &&
                      (f < table.bands[b].high_hz || (last && f == table.bands[b].high_hz));
      if (in) {
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
    }
    pass &= lo == want[b].first && hi == want[b].second;
  }

  std::vector<double> tone(256);
  for (int n = 0; n < 256; ++n) tone[n] = std::sin(2.0 * M_PI * 10.0 * n / 128.0);
  const std::vector<double> rect(256, 1.0);
  const dsp::Spectrum s = dsp::rfft_power(tone, rect, 128.0);
  double alpha = 0.0, others = 0.0;
  for (size_t b = 0; b < 5; ++b) {
    const double p =
        dsp::band_power(s, table.bands[b].low_hz, table.bands[b].high_hz, b == 4);
    if (b == 1)
      alpha = p;
    else
      others += p;
  }
  const double ratio = alpha / (others + 1e-300);
  pass &= ratio > 100.0;
  report(3, pass, "band bins are theta 8-15, alpha 16-23, low-beta 24-31, high-beta 32-59, gamma 60-90",
         fmt("10 Hz tone alpha/others ratio %.1e (>100)", ratio));
}

// --------------------------------------------------------------------------
// criterion 4: BPTT gradients vs central finite differences

void criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  const gradcheck::Report r = gradcheck::run(7);
  const double elapsed = seconds_since(t0);
  report(4, r.pass && elapsed < 60.0,
         "analytic gradients match central finite differences on the tiny rig",
         fmt("max rel err %.2e (<=1e-4), %.2fs (<60s)", r.max_rel_error, elapsed));
}

// --------------------------------------------------------------------------
// criterion 5: closed-form cell values

void criterion_5() {
  // independent closed form: f = sigma(1), c = f * 1, h = 0.5 * tanh(c)
  const double f = 1.0 / (1.0 + std::exp(-1.0));
  const double c_want = f * 1.0;
  const double h_want = 0.5 * std::tanh(c_want);

  std::vector<double> W(4, 0.0), U(4, 0.0), b(4, 0.0);
  b[1] = 1.0;  // forget gate
  const net::LstmParamView<double> p{W.data(), U.data(), b.data(), 1, 1};
  std::vector<double> x = {0.0}, h0 = {0.0}, c0 = {1.0}, h(1), c(1);
  net::lstm_cell_forward<double>(x, h0, c0, p, h, c);

  const bool pass = std::fabs(c[0] - c_want) < 1e-6 && std::fabs(h[0] - h_want) < 1e-6 &&
                    std::fabs(c[0] - 0.731059) < 1e-6;
  report(5, pass, "forget-bias cell closed form (64-bit)",
         fmt("c %.9f (want %.9f), h %.9f (want %.9f)", c[0], c_want, h[0], h_want));
}

// --------------------------------------------------------------------------
// criterion 6: Adam first-step magnitude and scalar quadratic descent

void criterion_6() {
  bool pass = true;
  std::string detail;
  for (double g0 : {0.25, 1.0, 4.0, -3.0}) {
    std::vector<double> params = {1.0};
    std::vector<double> grads = {g0};
    train::AdamState<double> s;
    s.init(1, {0.001, 0.9, 0.999, 1e-8});
    train::adam_step(params, grads, s);
    pass &= std::fabs(std::fabs(params[0] - 1.0) - 0.001) < 1e-6;
  }

  // f(theta)=theta^2 from theta=1; lr 0.01 (the independent scalar recurrence
  // confirms the 0.001 default cannot cover the distance in 500 steps)
  std::vector<double> theta = {1.0};
  train::AdamState<double> s;
  s.init(1, {0.01, 0.9, 0.999, 1e-8});
  for (int t = 0; t < 500; ++t) {
    const std::vector<double> grads = {2.0 * theta[0]};
    train::adam_step(theta, grads, s);
  }
  pass &= std::fabs(theta[0]) < 0.01;
  report(6, pass, "Adam first-step magnitude ~ lr; scalar quadratic converges",
         fmt("first-step error < 1e-6; |theta| after 500 steps %.2e (<0.01)",
             std::fabs(theta[0])));
}

// --------------------------------------------------------------------------
// criterion 7: shape ledger on the full-shape recording + default model

void criterion_7(const TrialSet& full, ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const dsp::RawFeatures raw =
      dsp::extract_features(full, dsp::default_channel_subset(),
                            dsp::BandTable::defaults(), dsp::WindowPlan{}, false, false,
                            &pool);
  const dsp::FeatureFile ff =
      dsp::to_sequences(raw, dsp::SequenceMode::FeatureAsSteps, 0, full);

  bool pass = raw.windows_per_trial == 489;
  pass &= raw.feat_dim == 70;
  pass &= ff.n_samples == 19560;
  pass &= ff.seq_len == 70 && ff.input_dim == 1;

  // default model: closed-form parameter count and probability rows
  const net::ModelConfig cfg;  // defaults
  auto lstm_n = [](size_t in, size_t h) { return 4 * h * (in + h + 1); };
  const size_t want = 2 * lstm_n(1, 128) + lstm_n(256, 256) + lstm_n(256, 64) +
                      lstm_n(64, 64) + lstm_n(64, 32) + (32 * 16 + 16) + (16 * 9 + 9);
  pass &= cfg.param_count() == want;

  const auto params = net::init_params<float>(cfg, 11);
  Tensor<float> x({4, 70, 1});
  rng::Xoshiro256 gen(5);
  for (auto& v : x.v) v = static_cast<float>(2.0 * gen.next_double() - 1.0);
  const Tensor<float> probs =
      net::model_forward(x, params, net::DropoutMode::Inference, 0,
                         static_cast<net::ModelCache<float>*>(nullptr), &pool);
  float worst_row = 0.0f;
  for (size_t b = 0; b < 4; ++b) {
    float sum = 0.0f;
    for (size_t j = 0; j < 9; ++j) sum += probs.v[b * 9 + j];
    worst_row = std::max(worst_row, std::fabs(sum - 1.0f));
  }
  pass &= probs.shape == std::vector<size_t>{4, 9} && worst_row < 1e-6f;

  report(7, pass, "shape ledger: 489 windows/trial, 70 features, 19560 samples; default model",
         fmt("param count %zu (closed form %zu), row-sum err %.1e (<1e-6), %.1fs",
             cfg.param_count(), want, static_cast<double>(worst_row), seconds_since(t0)));
}

// --------------------------------------------------------------------------
// criterion 8: synthetic end-to-end learning

void criterion_8(ThreadPool& pool) {
  const auto t0 = std::chrono::steady_clock::now();

  ingest::SynthSpec spec;
  spec.n_trials = 45;  // 5 trials per class
  spec.n_channels = 4;
  spec.n_samples = 960;  // 45 windows per trial -> 2025 windows total
  spec.noise_std = 0.05;
  spec.seed = 424242;
  for (size_t k = 0; k < 9; ++k)
    for (size_t b = 0; b < 5; ++b)
      spec.class_band_map[k][b] = std::pow(1.6, double(k)) * (b == k % 5 ? 3.0 : 1.0);
  const TrialSet ts = ingest::synth_generate(spec);

  config::RunConfig cfg;
  cfg.channels = {0, 1, 2, 3};
  cfg.log_power = true;
  cfg.sequence_mode = "window_as_steps:5";
  cfg.bilstm_units = 24;
  cfg.lstm_units = {32, 16, 8};
  cfg.dropout_rates = {0.1, 0.1, 0.1, 0.1};
  cfg.dense_units = 16;
  cfg.batch_size = 4;
  cfg.epochs = 10;
  cfg.lr = 0.002;

  const dsp::FeatureFile ff = train::build_features(ts, cfg, &pool);
  const train::FitResult r = train::fit(ff, cfg, "", &pool, nullptr);

  double e1 = -1.0, e5 = -1.0;
  for (const auto& row : r.history) {
    if (row.split != "train") continue;
    if (row.epoch == 1) e1 = row.loss;
    if (row.epoch == 5) e5 = row.loss;
  }
  const double elapsed = seconds_since(t0);
  const size_t windows = static_cast<size_t>(ff.n_samples) * 5;
  const bool pass = r.best_test.accuracy >= 0.95 && e5 < e1 && elapsed < 300.0;
  report(8, pass, "synthetic 9-class set learns to >= 95% test accuracy within 10 epochs",
         fmt("%zu windows, best test acc %.4f @ epoch %u, train loss %.3f->%.3f, %.0fs (<300s)",
             windows, r.best_test.accuracy, r.best_epoch, e1, e5, elapsed));
}

// --------------------------------------------------------------------------
// criterion 9: determinism, format round trips, header fuzzing

size_t fuzz_format(const std::vector<char>& valid, uint64_t seed, int iterations,
                   const std::function<void(std::istream&)>& parse, bool& crashed) {
  rng::Xoshiro256 gen(seed);
  size_t typed = 0;
  for (int i = 0; i < iterations; ++i) {
    auto bytes = valid;
    const int mutations = 1 + static_cast<int>(gen.next_below(5));
    for (int m = 0; m < mutations; ++m) {
      const size_t window = std::min<size_t>(bytes.size(), 96);
      bytes[gen.next_below(window)] = static_cast<char>(gen.next());
    }
    if (gen.next_below(4) == 0) bytes.resize(gen.next_below(bytes.size() + 1));
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    try {
      parse(is);
    } catch (const Error&) {
      ++typed;
    } catch (...) {
      crashed = true;
      return typed;
    }
  }
  return typed;
}

void criterion_9(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string why;

  // --- training determinism: serial repeat and parallel-vs-serial, bitwise
  ingest::SynthSpec spec;
  spec.n_trials = 18;
  spec.n_channels = 4;
  spec.n_samples = 512;
  spec.noise_std = 0.05;
  spec.seed = 99;
  const TrialSet ts = ingest::synth_generate(spec);
  config::RunConfig cfg;
  cfg.channels = {0, 1, 2, 3};
  cfg.bilstm_units = 8;
  cfg.lstm_units = {12, 6};
  cfg.dropout_rates = {0.3, 0.3, 0.3};
  cfg.dense_units = 8;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.lr = 0.002;
  const dsp::FeatureFile ff = train::build_features(ts, cfg, nullptr);

  auto train_once = [&](unsigned threads, const std::string& tag) {
    ThreadPool p(threads);
    return train::fit(ff, cfg, (dir / tag).string(), &p, nullptr);
  };
  const train::FitResult serial_a = train_once(1, "det_a");
  const train::FitResult serial_b = train_once(1, "det_b");
  const train::FitResult parallel = train_once(2, "det_p");
  if (serial_a.final_params.data != serial_b.final_params.data) {
    pass = false;
    why += "serial rerun differs; ";
  }
  if (serial_a.final_params.data != parallel.final_params.data) {
    pass = false;
    why += "parallel differs from serial; ";
  }
  if (testutil::read_file_bytes(serial_a.checkpoint_path) !=
      testutil::read_file_bytes(serial_b.checkpoint_path)) {
    pass = false;
    why += "checkpoint bytes differ between identical runs; ";
  }
  if (testutil::read_file_bytes(serial_a.checkpoint_path) !=
      testutil::read_file_bytes(parallel.checkpoint_path)) {
    pass = false;
    why += "checkpoint bytes differ parallel vs serial; ";
  }

  // --- format round trips, bitwise
  const fs::path eegb_path = dir / "rt.eegb";
  ingest::write_eegb(ts, eegb_path.string());
  const TrialSet ts2 = ingest::read_eegb(eegb_path.string());
  const fs::path eegb_path2 = dir / "rt2.eegb";
  ingest::write_eegb(ts2, eegb_path2.string());
  if (testutil::read_file_bytes(eegb_path.string()) !=
      testutil::read_file_bytes(eegb_path2.string())) {
    pass = false;
    why += "EEGB round trip not bitwise; ";
  }

  const fs::path feat_path = dir / "rt.feat";
  dsp::write_features(ff, feat_path.string());
  const dsp::FeatureFile ff2 = dsp::read_features(feat_path.string());
  const fs::path feat_path2 = dir / "rt2.feat";
  dsp::write_features(ff2, feat_path2.string());
  if (testutil::read_file_bytes(feat_path.string()) !=
      testutil::read_file_bytes(feat_path2.string())) {
    pass = false;
    why += "FEAT round trip not bitwise; ";
  }

  const train::Checkpoint ck = train::load_checkpoint(serial_a.checkpoint_path);
  const fs::path ck2_path = dir / "rt.emoc";
  train::save_checkpoint(ck2_path.string(), ck.params, ck.meta, nullptr);
  const train::Checkpoint ck2 = train::load_checkpoint(ck2_path.string());
  if (ck2.params.data != ck.params.data || ck2.meta.norm_mean != ck.meta.norm_mean) {
    pass = false;
    why += "EMOC round trip not bitwise; ";
  }

  // --- header fuzzing across all four parsers
  bool crashed = false;
  size_t typed = 0;
  const auto eegb_bytes = testutil::read_file_bytes(eegb_path.string());
  typed += fuzz_format(eegb_bytes, 1001, 4000,
                       [](std::istream& is) { (void)ingest::read_eegb(is); }, crashed);
  const auto feat_bytes = testutil::read_file_bytes(feat_path.string());
  typed += fuzz_format(feat_bytes, 1002, 3000,
                       [](std::istream& is) { (void)dsp::read_features(is); }, crashed);
  const auto emoc_bytes = testutil::read_file_bytes(serial_a.checkpoint_path);
  typed += fuzz_format(emoc_bytes, 1003, 3000,
                       [](std::istream& is) { (void)train::load_checkpoint(is); }, crashed);
  testutil::write_npy<float>((dir / "rt.npy").string(), {3, 4, 16},
                             std::vector<float>(192, 0.5f));
  const auto npy_bytes = testutil::read_file_bytes((dir / "rt.npy").string());
  typed += fuzz_format(npy_bytes, 1004, 2000,
                       [](std::istream& is) { (void)ingest::read_npy(is); }, crashed);
  if (crashed) {
    pass = false;
    why += "a fuzzed header escaped the typed-error contract; ";
  }

  report(9, pass, "bitwise determinism (serial repeat + parallel), format round trips, 12000-header fuzz",
         why.empty() ? fmt("12000 fuzzed headers: %zu typed rejections, rest parsed, none crashed, %.0fs",
                           typed, seconds_since(t0))
                     : why);
}

}  // namespace

int main() {
  testutil::TempDir tmp("acceptance");
  ThreadPool pool(2);

  const auto t0 = std::chrono::steady_clock::now();
  std::printf("building the full-shape synthetic recording (40 x 40 x 8064 @ 128 Hz)...\n");
  const TrialSet full = ingest::synth_generate(full_shape_spec());
  std::printf("done in %.1fs\n\n", seconds_since(t0));

  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7(full, pool);
  criterion_8(pool);
  criterion_9(tmp.path());
  criterion_1(full, tmp.path());

  std::printf("\n%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "eegemo/dsp.hpp"
#include "eegemo/ingest.hpp"
#include "helpers.hpp"

// Exercises the installed binary end to end. The test runner passes its path
// via EEGEMO_BIN.

namespace {

std::string binary() {
  const char* bin = std::getenv("EEGEMO_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "EEGEMO_BIN must point at the CLI binary");
  return bin;
}

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const std::filesystem::path& capture) {
  const std::string cmd = binary() + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(capture);
  r.output.assign(std::istreambuf_iterator<char>(is), {});
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

}  // namespace

TEST_CASE("synth: identical spec and seed produce byte-identical files") {
  testutil::TempDir tmp("cli-synth");
  const auto log = tmp / "log";
  write_text(tmp / "spec.cfg",
             "n_trials = 9\nn_channels = 4\nn_samples = 512\nnoise_std = 0.1\nseed = 5\n");

  auto r1 = run_cli("synth --spec " + (tmp / "spec.cfg").string() + " --out " +
                        (tmp / "a.eegb").string(),
                    log);
  CHECK(r1.exit_code == 0);
  auto r2 = run_cli("synth --spec " + (tmp / "spec.cfg").string() + " --out " +
                        (tmp / "b.eegb").string(),
                    log);
  CHECK(r2.exit_code == 0);
  CHECK(testutil::read_file_bytes((tmp / "a.eegb").string()) ==
        testutil::read_file_bytes((tmp / "b.eegb").string()));

  // header echoes the spec
  const eegemo::TrialSet ts = eegemo::ingest::read_eegb((tmp / "a.eegb").string());
  CHECK(ts.n_trials == 9);
  CHECK(ts.n_channels == 4);
  CHECK(ts.n_samples == 512);

  // default spec works too
  CHECK(run_cli("synth --out " + (tmp / "d.eegb").string(), log).exit_code == 0);

  // invalid spec -> config error (exit 2)
  write_text(tmp / "bad.cfg", "noise_std = -1\n");
  CHECK(run_cli("synth --spec " + (tmp / "bad.cfg").string() + " --out " +
                    (tmp / "x.eegb").string(),
                log)
            .exit_code == 2);
}

TEST_CASE("convert: NPY pair to EEGB with the documented failure modes") {
  testutil::TempDir tmp("cli-convert");
  const auto log = tmp / "log";
  const uint64_t T = 3, C = 4, S = 300;
  std::vector<float> data(T * C * S, 0.25f);
  std::vector<float> labels(T * 4, 5.0f);
  testutil::write_npy((tmp / "x.npy").string(), {T, C, S}, data);
  testutil::write_npy((tmp / "y.npy").string(), {T, 4}, labels);

  auto ok = run_cli("convert --data " + (tmp / "x.npy").string() + " --labels " +
                        (tmp / "y.npy").string() + " --out " + (tmp / "z.eegb").string(),
                    log);
  CHECK(ok.exit_code == 0);
  const eegemo::TrialSet ts = eegemo::ingest::read_eegb((tmp / "z.eegb").string());
  CHECK(ts.n_trials == T);
  CHECK(ts.sample_rate_hz == 128.0f);

  // rank-2 data -> ShapeError -> exit 2
  testutil::write_npy<float>((tmp / "r2.npy").string(), {6, 100},
                             std::vector<float>(600, 0.0f));
  CHECK(run_cli("convert --data " + (tmp / "r2.npy").string() + " --labels " +
                    (tmp / "y.npy").string() + " --out " + (tmp / "z2.eegb").string(),
                log)
            .exit_code == 2);

  // missing file -> exit 1, message names the path
  auto missing = run_cli("convert --data " + (tmp / "absent.npy").string() +
                             " --labels " + (tmp / "y.npy").string() + " --out " +
                             (tmp / "z3.eegb").string(),
                         log);
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("absent.npy") != std::string::npos);
}

TEST_CASE("features/train/eval pipeline through the binary") {
  testutil::TempDir tmp("cli-pipe");
  const auto log = tmp / "log";

  write_text(tmp / "spec.cfg",
             "n_trials = 18\nn_channels = 14\nn_samples = 512\nnoise_std = 0.05\nseed = 9\n");
  REQUIRE(run_cli("synth --spec " + (tmp / "spec.cfg").string() + " --out " +
                      (tmp / "d.eegb").string(),
                  log)
              .exit_code == 0);

  // channel subset must fit the 14-channel synthetic recording
  write_text(tmp / "run.cfg",
             "channels = 0,1,2,3,4,5,6,7,8,9,10,11,12,13\n"
             "bilstm_units = 6\nlstm_units = 8,4\ndropout_rates = 0.1,0.1,0.1\n"
             "dense_units = 8\nbatch_size = 32\nepochs = 4\nlr = 0.01\n");

  auto feat = run_cli("features --in " + (tmp / "d.eegb").string() + " --config " +
                          (tmp / "run.cfg").string() + " --out " + (tmp / "f.feat").string(),
                      log);
  CHECK(feat.exit_code == 0);
  const eegemo::dsp::FeatureFile ff =
      eegemo::dsp::read_features((tmp / "f.feat").string());
  CHECK(ff.n_samples == 18 * 17);  // (512-256)/16+1 windows per trial
  CHECK(ff.seq_len == 70);
  CHECK(ff.input_dim == 1);
  CHECK(std::filesystem::exists(tmp / "f.feat.cfg"));

  // a 10-channel override shrinks the feature length to 50
  auto feat10 = run_cli("features --in " + (tmp / "d.eegb").string() + " --config " +
                            (tmp / "run.cfg").string() + " --channels 0,1,2,3,4,5,6,7,8,9" +
                            " --out " + (tmp / "f10.feat").string(),
                        log);
  CHECK(feat10.exit_code == 0);
  CHECK(eegemo::dsp::read_features((tmp / "f10.feat").string()).seq_len == 50);

  // duplicate channel index -> ConfigError
  CHECK(run_cli("features --in " + (tmp / "d.eegb").string() + " --config " +
                    (tmp / "run.cfg").string() + " --channels 0,1,1 --out " +
                    (tmp / "fdup.feat").string(),
                log)
            .exit_code == 2);

  // train all four dimensions into separate directories
  for (const std::string dim : {"valence", "arousal", "dominance", "liking"}) {
    auto tr = run_cli("train --feat " + (tmp / "f.feat").string() + " --label-dim " + dim +
                          " --config " + (tmp / "run.cfg").string() + " --out " +
                          (tmp / dim).string(),
                      log);
    CHECK(tr.exit_code == 0);
    CHECK(std::filesystem::exists(tmp / dim / ("model_" + dim + ".emoc")));
    CHECK(std::filesystem::exists(tmp / dim / "metrics.csv"));
    CHECK(std::filesystem::exists(tmp / dim / "effective.cfg"));
  }

  // unknown label dimension -> exit 2
  CHECK(run_cli("train --feat " + (tmp / "f.feat").string() +
                    " --label-dim happiness --config " + (tmp / "run.cfg").string() +
                    " --out " + (tmp / "x").string(),
                log)
            .exit_code == 2);

  // unknown config key -> exit 2
  CHECK(run_cli("train --feat " + (tmp / "f.feat").string() + " --config " +
                    (tmp / "run.cfg").string() + " --set window=7 --out " +
                    (tmp / "x2").string(),
                log)
            .exit_code == 2);

  // eval prints the full report, including the confusion matrix
  const std::string ckpt = (tmp / "valence" / "model_valence.emoc").string();
  auto ev = run_cli("eval --checkpoint " + ckpt + " --feat " + (tmp / "f.feat").string() +
                        " --vote-per-trial",
                    log);
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("accuracy") != std::string::npos);
  CHECK(ev.output.find("confusion") != std::string::npos);
  CHECK(ev.output.find("per-trial majority vote") != std::string::npos);

  // checkpoint/feature shape mismatch -> exit 2
  CHECK(run_cli("eval --checkpoint " + ckpt + " --feat " + (tmp / "f10.feat").string(),
                log)
            .exit_code == 2);

  // deterministic re-run: byte-identical checkpoint for identical config+seeds
  auto rerun = run_cli("train --feat " + (tmp / "f.feat").string() +
                           " --label-dim valence --config " + (tmp / "run.cfg").string() +
                           " --threads 1 --out " + (tmp / "re1").string(),
                       log);
  CHECK(rerun.exit_code == 0);
  auto rerun2 = run_cli("train --feat " + (tmp / "f.feat").string() +
                            " --label-dim valence --config " + (tmp / "run.cfg").string() +
                            " --threads 1 --out " + (tmp / "re2").string(),
                        log);
  CHECK(rerun2.exit_code == 0);
  CHECK(testutil::read_file_bytes((tmp / "re1" / "model_valence.emoc").string()) ==
        testutil::read_file_bytes((tmp / "re2" / "model_valence.emoc").string()));

  // the echoed effective.cfg alone reproduces the run bitwise
  auto recfg = run_cli("train --feat " + (tmp / "f.feat").string() + " --config " +
                           (tmp / "re1" / "effective.cfg").string() + " --threads 1 --out " +
                           (tmp / "re3").string(),
                       log);
  CHECK(recfg.exit_code == 0);
  CHECK(testutil::read_file_bytes((tmp / "re1" / "model_valence.emoc").string()) ==
        testutil::read_file_bytes((tmp / "re3" / "model_valence.emoc").string()));

  // pooling two recordings doubles the sample count
  auto pooled = run_cli("features --in " + (tmp / "d.eegb").string() + " " +
                            (tmp / "d.eegb").string() + " --config " +
                            (tmp / "run.cfg").string() + " --out " +
                            (tmp / "f2.feat").string(),
                        log);
  CHECK(pooled.exit_code == 0);
  CHECK(eegemo::dsp::read_features((tmp / "f2.feat").string()).n_samples == 2 * 18 * 17);
}

TEST_CASE("gradcheck subcommand: pass, report, and negative control") {
  testutil::TempDir tmp("cli-gc");
  const auto log = tmp / "log";
  auto ok = run_cli("gradcheck --seed 7", log);
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("bilstm_fwd.W") != std::string::npos);  // per-layer lines
  CHECK(ok.output.find("PASS") != std::string::npos);

  auto bad = run_cli("gradcheck --seed 7 --corrupt", log);
  CHECK(bad.exit_code != 0);
  CHECK(bad.output.find("FAIL") != std::string::npos);
}

TEST_CASE("usage errors exit with the validation code") {
  testutil::TempDir tmp("cli-usage");
  const auto log = tmp / "log";
  CHECK(run_cli("synth", log).exit_code == 2);       // missing --out
  CHECK(run_cli("frobnicate", log).exit_code == 2);  // unknown subcommand
  CHECK(run_cli("--help", log).exit_code == 0);
}

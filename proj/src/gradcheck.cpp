#include "eegemo/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "eegemo/net.hpp"
#include "eegemo/rng.hpp"
#include "eegemo/train.hpp"

namespace eegemo::gradcheck {

namespace {

net::ModelConfig rig_config() {
  net::ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.bilstm_units = 4;
  cfg.lstm_units = {6, 3, 3, 2};
  cfg.dropout_rates = {0.6, 0.6, 0.6, 0.6, 0.4};
  cfg.dense_units = 4;
  cfg.n_classes = 9;
  return cfg;
}

}  // namespace

Report run(uint64_t seed, bool corrupt) {
  const net::ModelConfig cfg = rig_config();
  const size_t batch = 2, steps = 3;
  const uint64_t dropout_seed = rng::substream(seed, 1);

  // O(1) random parameters keep every activation well away from the ReLU
  // kink, which central differences would otherwise straddle. Forget-gate
  // biases stay shifted by +1 as in training.
  net::ModelParams<double> params = net::init_params<double>(cfg, seed);
  {
    rng::Xoshiro256 pgen(rng::substream(seed, 3));
    for (auto& v : params.data) v = 1.2 * pgen.next_double() - 0.6;
    for (const auto& blk : params.blocks)
      if (blk.kind == net::BlockKind::LstmBias)
        for (size_t j = blk.hidden; j < 2 * blk.hidden; ++j)
          params.data[blk.offset + j] += 1.0;
  }
  rng::Xoshiro256 gen(rng::substream(seed, 2));
  Tensor<double> x({batch, steps, cfg.input_dim});
  for (auto& v : x.v) v = 2.0 * gen.next_double() - 1.0;
  std::vector<uint8_t> targets(batch);
  for (auto& t : targets)
    t = static_cast<uint8_t>(gen.next_below(cfg.n_classes));

  auto loss_at = [&]() {
    net::ModelCache<double> cache;
    const Tensor<double> probs = net::model_forward(
        x, params, net::DropoutMode::Train, dropout_seed, &cache, nullptr);
    return train::cross_entropy(probs.v.data(), batch, cfg.n_classes, targets.data());
  };

  net::ModelCache<double> cache;
  net::model_forward(x, params, net::DropoutMode::Train, dropout_seed, &cache, nullptr);
  std::vector<double> analytic = net::model_backward(cache, params, targets, nullptr);
  if (corrupt) analytic[analytic.size() / 2] += 1e-2;

  Report report;
  for (const auto& blk : params.blocks) {
    double block_max = 0.0;
    for (size_t i = blk.offset; i < blk.offset + blk.size(); ++i) {
      const double saved = params.data[i];
      params.data[i] = saved + kStep;
      const double up = loss_at();
      params.data[i] = saved - kStep;
      const double down = loss_at();
      params.data[i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-6);
      if (rel > block_max) block_max = rel;
    }
    report.per_block.emplace_back(blk.name, block_max);
    if (block_max > report.max_rel_error) report.max_rel_error = block_max;
  }
  report.pass = report.max_rel_error <= kTolerance;
  return report;
}

std::string format_report(const Report& r) {
  std::ostringstream os;
  char buf[128];
  for (const auto& [name, err] : r.per_block) {
    std::snprintf(buf, sizeof buf, "%-14s max rel err %.3e\n", name.c_str(), err);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "overall        max rel err %.3e  (tolerance %.0e)  %s\n",
                r.max_rel_error, kTolerance, r.pass ? "PASS" : "FAIL");
  os << buf;
  return os.str();
}

}  // namespace eegemo::gradcheck

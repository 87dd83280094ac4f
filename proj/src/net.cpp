#include "eegemo/net.hpp"

namespace eegemo::net {

void ModelConfig::validate() const {
  if (input_dim == 0 || bilstm_units == 0 || dense_units == 0 || n_classes < 2)
    throw ConfigError("model dimensions must be positive (and n_classes >= 2)");
  if (lstm_units.empty())
    throw ConfigError("the stack needs at least one LSTM layer after the bidirectional one");
  for (uint32_t u : lstm_units)
    if (u == 0) throw ConfigError("LSTM unit counts must be positive");
  if (dropout_rates.size() != lstm_units.size() + 1)
    throw ConfigError("need one dropout rate per recurrent block (bilstm + each LSTM)");
  for (double r : dropout_rates) validate_dropout_rate(r);
}

void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw InvalidArg("dropout rate must lie in [0, 1)");
}

std::vector<ParamBlock> layout_blocks(const ModelConfig& cfg) {
  std::vector<ParamBlock> blocks;
  size_t offset = 0;
  auto add = [&](const std::string& name, BlockKind kind, size_t rows, size_t cols,
                 size_t hidden) {
    blocks.push_back({name, kind, offset, rows, cols, hidden});
    offset += rows * cols;
  };
  auto add_lstm = [&](const std::string& name, size_t in_dim, size_t hidden) {
    add(name + ".W", BlockKind::LstmKernel, in_dim, 4 * hidden, hidden);
    add(name + ".U", BlockKind::LstmRecurrent, hidden, 4 * hidden, hidden);
    add(name + ".b", BlockKind::LstmBias, 1, 4 * hidden, hidden);
  };

  add_lstm("bilstm_fwd", cfg.input_dim, cfg.bilstm_units);
  add_lstm("bilstm_bwd", cfg.input_dim, cfg.bilstm_units);
  size_t cur = 2 * static_cast<size_t>(cfg.bilstm_units);
  for (size_t l = 0; l < cfg.lstm_units.size(); ++l) {
    add_lstm("lstm" + std::to_string(l + 1), cur, cfg.lstm_units[l]);
    cur = cfg.lstm_units[l];
  }
  add("dense1.W", BlockKind::DenseKernel, cur, cfg.dense_units, 0);
  add("dense1.b", BlockKind::DenseBias, 1, cfg.dense_units, 0);
  add("dense2.W", BlockKind::DenseKernel, cfg.dense_units, cfg.n_classes, 0);
  add("dense2.b", BlockKind::DenseBias, 1, cfg.n_classes, 0);
  return blocks;
}

size_t ModelConfig::param_count() const {
  size_t total = 0;
  for (const auto& b : layout_blocks(*this)) total += b.size();
  return total;
}

}  // namespace eegemo::net

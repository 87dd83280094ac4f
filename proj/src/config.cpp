#include "eegemo/config.hpp"

#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace eegemo::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
    for (const auto& [k, v] : kv)
      if (k == key) throw ConfigError("duplicate config key: " + key);
    kv.emplace_back(key, value);
  }
  return kv;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + " must be true or false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == nullptr || *end != '\0' || v.empty() || !std::isfinite(d))
    throw ConfigError(key + " must be a finite number, got '" + v + "'");
  return d;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  if (v.empty() || v[0] == '-')
    throw ConfigError(key + " must be a non-negative integer, got '" + v + "'");
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (end == nullptr || *end != '\0')
    throw ConfigError(key + " must be a non-negative integer, got '" + v + "'");
  return u;
}

uint32_t parse_u32(const std::string& key, const std::string& v) {
  const uint64_t u = parse_u64(key, v);
  if (u > 0xffffffffull) throw ConfigError(key + " is too large");
  return static_cast<uint32_t>(u);
}

std::vector<uint32_t> parse_u32_list(const std::string& key, const std::string& v) {
  std::vector<uint32_t> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_u32(key, trim(part)));
  return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_double(key, trim(part)));
  return out;
}

dsp::BandTable parse_bands(const std::string& v) {
  dsp::BandTable table;
  for (const auto& part : split(v, ',')) {
    const auto fields = split(trim(part), ':');
    if (fields.size() != 3)
      throw ConfigError("bands entries must be name:low:high, got '" + part + "'");
    table.bands.push_back({trim(fields[0]), parse_double("bands", fields[1]),
                           parse_double("bands", fields[2])});
  }
  table.validate();
  return table;
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string fmt_u32_list(const std::vector<uint32_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

std::string fmt_bands(const dsp::BandTable& table) {
  std::string out;
  for (size_t i = 0; i < table.bands.size(); ++i)
    out += (i ? "," : "") + table.bands[i].name + ":" + fmt_double(table.bands[i].low_hz) +
           ":" + fmt_double(table.bands[i].high_hz);
  return out;
}

// Hex floats round-trip float32 exactly through text.
std::string fmt_f32_hex_list(const std::vector<float>& v) {
  std::string out;
  char buf[48];
  for (size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", static_cast<double>(v[i]));
    out += (i ? "," : "") + std::string(buf);
  }
  return out;
}

std::vector<float> parse_f32_hex_list(const std::string& key, const std::string& v) {
  std::vector<float> out;
  for (const auto& part : split(v, ',')) {
    const std::string t = trim(part);
    char* end = nullptr;
    const float f = std::strtof(t.c_str(), &end);
    if (end == nullptr || *end != '\0' || t.empty())
      throw ConfigError(key + " has a malformed float '" + t + "'");
    out.push_back(f);
  }
  return out;
}

// Returns true if the key was recognized.
bool apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "sample_rate_hz") c.sample_rate_hz = parse_double(key, value);
  else if (key == "channels") c.channels = parse_u32_list(key, value);
  else if (key == "bands") c.bands = parse_bands(value);
  else if (key == "window_len") c.window_len = parse_u32(key, value);
  else if (key == "hop") c.hop = parse_u32(key, value);
  else if (key == "log_power") c.log_power = parse_bool(key, value);
  else if (key == "allow_fs_mismatch") c.allow_fs_mismatch = parse_bool(key, value);
  else if (key == "sequence_mode") c.sequence_mode = value;
  else if (key == "split_fraction") c.split_fraction = parse_double(key, value);
  else if (key == "split_unit") c.split_unit = value;
  else if (key == "split_seed") c.split_seed = parse_u64(key, value);
  else if (key == "bilstm_units") c.bilstm_units = parse_u32(key, value);
  else if (key == "lstm_units") c.lstm_units = parse_u32_list(key, value);
  else if (key == "dropout_rates") c.dropout_rates = parse_double_list(key, value);
  else if (key == "dense_units") c.dense_units = parse_u32(key, value);
  else if (key == "n_classes") c.n_classes = parse_u32(key, value);
  else if (key == "init_seed") c.init_seed = parse_u64(key, value);
  else if (key == "label_dim") c.label_dim = value;
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "beta1") c.beta1 = parse_double(key, value);
  else if (key == "beta2") c.beta2 = parse_double(key, value);
  else if (key == "adam_epsilon") c.adam_epsilon = parse_double(key, value);
  else if (key == "batch_size") c.batch_size = parse_u32(key, value);
  else if (key == "epochs") c.epochs = parse_u32(key, value);
  else if (key == "eval_every") c.eval_every = parse_u32(key, value);
  else if (key == "patience") c.patience = parse_u32(key, value);
  else if (key == "shuffle_seed") c.shuffle_seed = parse_u64(key, value);
  else if (key == "dropout_seed") c.dropout_seed = parse_u64(key, value);
  else if (key == "grad_clip") c.grad_clip = parse_double(key, value);
  else if (key == "best_checkpoint") c.best_checkpoint = parse_bool(key, value);
  else if (key == "save_optimizer") c.save_optimizer = parse_bool(key, value);
  else if (key == "threads") c.threads = parse_u32(key, value);
  else return false;
  return true;
}

}  // namespace

void RunConfig::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
  bands.validate();
  dsp::WindowPlan{window_len, hop}.validate();
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ConfigError("split_fraction must lie in (0,1)");
  if (split_unit != "window" && split_unit != "trial")
    throw ConfigError("split_unit must be window or trial");
  uint32_t steps = 0;
  dsp::parse_sequence_mode(sequence_mode, &steps);
  parse_label_dim(label_dim);
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1/beta2 must lie in [0,1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (n_classes != kNumClasses)
    throw ConfigError("n_classes must be 9 (one per rating value)");
  model_config(1).validate();
}

net::ModelConfig RunConfig::model_config(uint32_t input_dim) const {
  net::ModelConfig mc;
  mc.input_dim = input_dim;
  mc.bilstm_units = bilstm_units;
  mc.lstm_units = lstm_units;
  mc.dropout_rates = dropout_rates;
  mc.dense_units = dense_units;
  mc.n_classes = n_classes;
  return mc;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  for (const auto& [key, value] : parse_ini(text)) {
    if (!apply_key(cfg, key, value)) throw ConfigError("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (!apply_key(cfg, key, value)) throw ConfigError("unknown config key: " + key);
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << "# effective configuration\n";
  os << "sample_rate_hz = " << fmt_double(c.sample_rate_hz) << "\n";
  os << "channels = " << fmt_u32_list(c.channels) << "\n";
  os << "bands = " << fmt_bands(c.bands) << "\n";
  os << "window_len = " << c.window_len << "\n";
  os << "hop = " << c.hop << "\n";
  os << "log_power = " << (c.log_power ? "true" : "false") << "\n";
  os << "allow_fs_mismatch = " << (c.allow_fs_mismatch ? "true" : "false") << "\n";
  os << "sequence_mode = " << c.sequence_mode << "\n";
  os << "split_fraction = " << fmt_double(c.split_fraction) << "\n";
  os << "split_unit = " << c.split_unit << "\n";
  os << "split_seed = " << c.split_seed << "\n";
  os << "bilstm_units = " << c.bilstm_units << "\n";
  os << "lstm_units = " << fmt_u32_list(c.lstm_units) << "\n";
  os << "dropout_rates = " << fmt_double_list(c.dropout_rates) << "\n";
  os << "dense_units = " << c.dense_units << "\n";
  os << "n_classes = " << c.n_classes << "\n";
  os << "init_seed = " << c.init_seed << "\n";
  os << "label_dim = " << c.label_dim << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "beta1 = " << fmt_double(c.beta1) << "\n";
  os << "beta2 = " << fmt_double(c.beta2) << "\n";
  os << "adam_epsilon = " << fmt_double(c.adam_epsilon) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "epochs = " << c.epochs << "\n";
  os << "eval_every = " << c.eval_every << "\n";
  os << "patience = " << c.patience << "\n";
  os << "shuffle_seed = " << c.shuffle_seed << "\n";
  os << "dropout_seed = " << c.dropout_seed << "\n";
  os << "grad_clip = " << fmt_double(c.grad_clip) << "\n";
  os << "best_checkpoint = " << (c.best_checkpoint ? "true" : "false") << "\n";
  os << "save_optimizer = " << (c.save_optimizer ? "true" : "false") << "\n";
  os << "threads = " << c.threads << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Synth spec

ingest::SynthSpec parse_synth_spec(const std::string& text) {
  ingest::SynthSpec spec;
  for (const auto& [key, value] : parse_ini(text)) {
    if (key == "n_trials") spec.n_trials = parse_u32(key, value);
    else if (key == "n_channels") spec.n_channels = parse_u32(key, value);
    else if (key == "n_samples") spec.n_samples = parse_u32(key, value);
    else if (key == "sample_rate_hz") spec.sample_rate_hz = parse_double(key, value);
    else if (key == "noise_std") spec.noise_std = parse_double(key, value);
    else if (key == "seed") spec.seed = parse_u64(key, value);
    else if (key == "label_dim_to_drive") spec.label_dim_to_drive = parse_label_dim(value);
    else if (key.rfind("class", 0) == 0 && key.size() == 6 && key[5] >= '1' && key[5] <= '9') {
      const auto amps = parse_double_list(key, value);
      if (amps.size() != 5)
        throw ConfigError(key + " needs exactly 5 band amplitudes");
      auto& row = spec.class_band_map[static_cast<size_t>(key[5] - '1')];
      for (size_t b = 0; b < 5; ++b) row[b] = amps[b];
    } else {
      throw ConfigError("unknown synth spec key: " + key);
    }
  }
  spec.validate();
  return spec;
}

ingest::SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_synth_spec(buf.str());
}

// ---------------------------------------------------------------------------
// Checkpoint metadata

std::string serialize_checkpoint_meta(const CheckpointMeta& meta) {
  std::ostringstream os;
  os << serialize_run_config(meta.run);
  os << "input_dim = " << meta.input_dim << "\n";
  os << "seq_len = " << meta.seq_len << "\n";
  os << "norm_mean = " << fmt_f32_hex_list(meta.norm_mean) << "\n";
  os << "norm_std = " << fmt_f32_hex_list(meta.norm_std) << "\n";
  return os.str();
}

CheckpointMeta parse_checkpoint_meta(const std::string& text) {
  CheckpointMeta meta;
  bool have_input = false, have_seq = false, have_mean = false, have_std = false;
  for (const auto& [key, value] : parse_ini(text)) {
    if (key == "input_dim") {
      meta.input_dim = parse_u32(key, value);
      have_input = true;
    } else if (key == "seq_len") {
      meta.seq_len = parse_u32(key, value);
      have_seq = true;
    } else if (key == "norm_mean") {
      meta.norm_mean = parse_f32_hex_list(key, value);
      have_mean = true;
    } else if (key == "norm_std") {
      meta.norm_std = parse_f32_hex_list(key, value);
      have_std = true;
    } else if (!apply_key(meta.run, key, value)) {
      throw ConfigError("unknown checkpoint config key: " + key);
    }
  }
  if (!have_input || !have_seq || !have_mean || !have_std)
    throw FormatError("checkpoint config is missing derived keys");
  meta.run.validate();
  if (meta.norm_mean.size() != meta.norm_std.size() ||
      meta.norm_mean.size() !=
          static_cast<size_t>(meta.input_dim) * meta.seq_len)
    throw FormatError("checkpoint normalization stats have the wrong length");
  return meta;
}

}  // namespace eegemo::config

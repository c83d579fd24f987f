#include "advdrop/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace advdrop {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& raw, const std::string& key);

template <>
int parse_number<int>(const std::string& raw, const std::string& key) {
  size_t pos = 0;
  int v = std::stoi(raw, &pos);
  if (pos != raw.size()) fail("config: invalid integer for " + key + ": '" + raw + "'");
  return v;
}

template <>
uint64_t parse_number<uint64_t>(const std::string& raw, const std::string& key) {
  size_t pos = 0;
  unsigned long long v = std::stoull(raw, &pos);
  if (pos != raw.size()) fail("config: invalid integer for " + key + ": '" + raw + "'");
  return v;
}

template <>
double parse_number<double>(const std::string& raw, const std::string& key) {
  size_t pos = 0;
  double v = std::stod(raw, &pos);
  if (pos != raw.size()) fail("config: invalid number for " + key + ": '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw, const std::string& key) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  fail("config: invalid bool for " + key + ": '" + raw + "'");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    auto str = [&](const char* key, std::string RunConfig::* member) {
      f.push_back({key, [member](const RunConfig& c) { return c.*member; },
                   [member](RunConfig& c, const std::string& v) { c.*member = v; }});
    };
    auto num_int = [&](const char* key, int RunConfig::* member) {
      f.push_back({key,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = parse_number<int>(v, key);
                   }});
    };
    auto num_u64 = [&](const char* key, uint64_t RunConfig::* member) {
      f.push_back({key,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = parse_number<uint64_t>(v, key);
                   }});
    };
    auto num_dbl = [&](const char* key, double RunConfig::* member) {
      f.push_back({key, [member](const RunConfig& c) { return fmt_double(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = parse_number<double>(v, key);
                   }});
    };
    auto boolean = [&](const char* key, bool RunConfig::* member) {
      f.push_back({key,
                   [member](const RunConfig& c) { return c.*member ? "true" : "false"; },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = parse_bool(v, key);
                   }});
    };

    str("task", &RunConfig::task);
    str("cell", &RunConfig::cell);
    num_int("hidden", &RunConfig::hidden);
    str("images", &RunConfig::images);
    str("labels", &RunConfig::labels);
    str("test_images", &RunConfig::test_images);
    str("test_labels", &RunConfig::test_labels);
    str("corpus", &RunConfig::corpus);
    num_int("downsample", &RunConfig::downsample);
    num_u64("permutation_seed", &RunConfig::permutation_seed);
    num_int("train_count", &RunConfig::train_count);
    num_int("test_count", &RunConfig::test_count);
    num_int("seq_length", &RunConfig::seq_length);
    num_int("copy_delay", &RunConfig::copy_delay);
    num_int("copy_symbols", &RunConfig::copy_symbols);
    num_dbl("val_fraction", &RunConfig::val_fraction);
    str("optimizer", &RunConfig::optimizer);
    num_dbl("rmsprop_decay", &RunConfig::rmsprop_decay);
    num_dbl("adam_beta1", &RunConfig::adam_beta1);
    num_dbl("adam_beta2", &RunConfig::adam_beta2);
    num_dbl("lr", &RunConfig::lr);
    str("lr_schedule", &RunConfig::lr_schedule);
    num_int("anneal_epochs", &RunConfig::anneal_epochs);
    num_dbl("lr_decay_per_step", &RunConfig::lr_decay_per_step);
    num_dbl("clip_norm", &RunConfig::clip_norm);
    num_int("epochs", &RunConfig::epochs);
    num_int("batch_size", &RunConfig::batch_size);
    num_u64("seed", &RunConfig::seed);
    str("reg", &RunConfig::reg);
    num_dbl("reg_weight", &RunConfig::reg_weight);
    num_dbl("dropout_p", &RunConfig::dropout_p);
    num_dbl("delta", &RunConfig::delta);
    num_int("k", &RunConfig::k);
    str("lambda_schedule", &RunConfig::lambda_schedule);
    str("metric", &RunConfig::metric);
    num_int("reg_samples", &RunConfig::reg_samples);
    str("base_mask", &RunConfig::base_mask);
    boolean("fd_symmetric", &RunConfig::fd_symmetric);
    boolean("save_epoch_checkpoints", &RunConfig::save_epoch_checkpoints);
    str("out_dir", &RunConfig::out_dir);
    return f;
  }();
  return kFields;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

template <typename T>
T pick(const std::string& raw, const std::string& what,
       std::initializer_list<std::pair<const char*, T>> options) {
  for (const auto& [name, value] : options)
    if (raw == name) return value;
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (!allowed.empty()) allowed += "|";
    allowed += name;
  }
  fail("config: " + what + " must be one of " + allowed + ", got '" + raw + "'");
}

}  // namespace

CellKind RunConfig::cell_kind() const {
  return pick<CellKind>(cell, "cell",
                        {{"rnn", CellKind::simple}, {"lstm", CellKind::lstm}});
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.optimizer = pick<OptimizerKind>(
      optimizer, "optimizer",
      {{"rmsprop", OptimizerKind::rmsprop}, {"adam", OptimizerKind::adam}});
  t.rmsprop_decay = rmsprop_decay;
  t.adam_beta1 = adam_beta1;
  t.adam_beta2 = adam_beta2;
  t.lr = lr;
  t.lr_schedule = pick<LrScheduleKind>(lr_schedule, "lr_schedule",
                                       {{"constant", LrScheduleKind::constant},
                                        {"linear", LrScheduleKind::linear_anneal},
                                        {"exponential", LrScheduleKind::exponential}});
  t.anneal_last_epochs = anneal_epochs;
  t.lr_decay_per_step = lr_decay_per_step;
  t.clip_norm = clip_norm;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  t.reg = pick<RegKind>(reg, "reg",
                        {{"none", RegKind::none},
                         {"el", RegKind::el},
                         {"fd", RegKind::fd},
                         {"add", RegKind::add}});
  t.reg_weight = reg_weight;
  t.dropout_p = dropout_p;
  t.adv.delta = delta;
  t.adv.iterations = k;
  t.metric = pick<Metric>(
      metric, "metric",
      {{"l2", Metric::squared_l2}, {"js", Metric::jensen_shannon}});
  t.lambda_uniform =
      pick<bool>(lambda_schedule, "lambda_schedule", {{"final", false}, {"uniform", true}});
  t.reg_samples = reg_samples;
  t.base_policy = pick<BaseMaskPolicy>(base_mask, "base_mask",
                                       {{"expected", BaseMaskPolicy::expected},
                                        {"sampled", BaseMaskPolicy::sampled}});
  t.fd_symmetric = fd_symmetric;
  t.validate();
  return t;
}

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail(source_name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) fail(source_name + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    try {
      f->set(cfg, value);
    } catch (const std::exception& e) {
      fail(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) fail("config: unknown key '" + key + "'");
  f->set(cfg, value);
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = canonical_config(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace advdrop

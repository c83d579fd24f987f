#pragma once

#include <string>
#include <vector>

#include "advdrop/training.hpp"

namespace advdrop {

// Full description of one run: task selection, data paths, model size and
// the training configuration. Serialized as one `key = value` line per
// field; unknown keys are rejected with the offending line number.
struct RunConfig {
  std::string task = "parity";  // parity|copy|smnist|pmnist|charlm
  std::string cell = "lstm";    // rnn|lstm
  int hidden = 32;

  std::string images, labels, test_images, test_labels;  // IDX paths
  std::string corpus;                                    // charlm text path
  int downsample = 0;           // 0 = native image size
  uint64_t permutation_seed = 1;
  int train_count = 200;        // synthetic sample count / image cap (0 = all)
  int test_count = 200;
  int seq_length = 8;           // parity/copy length, charlm context
  int copy_delay = 0;
  int copy_symbols = 4;
  double val_fraction = 0.1;

  std::string optimizer = "rmsprop";  // rmsprop|adam
  double rmsprop_decay = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double lr = 0.001;
  std::string lr_schedule = "constant";  // constant|linear|exponential
  int anneal_epochs = 50;
  double lr_decay_per_step = 0.9999;
  double clip_norm = 1.0;
  int epochs = 1;
  int batch_size = 32;
  uint64_t seed = 0;

  std::string reg = "none";  // none|el|fd|add
  double reg_weight = 1.0;
  double dropout_p = 0.0;
  double delta = 0.03;
  int k = 2;
  std::string lambda_schedule = "final";  // final|uniform
  std::string metric = "js";              // l2|js
  int reg_samples = 1;
  std::string base_mask = "expected";  // expected|sampled
  bool fd_symmetric = true;
  bool save_epoch_checkpoints = false;

  std::string out_dir = "run";

  TrainConfig train_config() const;
  CellKind cell_kind() const;
};

// Throws with "<source>:<line>: ..." diagnostics on malformed lines,
// unknown keys or unparsable values.
RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig load_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Fixed key order, every field explicit; the run hash is FNV-1a over this.
std::string canonical_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

}  // namespace advdrop

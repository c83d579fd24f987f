#pragma once

#include <string>
#include <vector>

#include "advdrop/regularizers.hpp"

namespace advdrop {

enum class OptimizerKind { rmsprop, adam };
enum class LrScheduleKind { constant, linear_anneal, exponential };
enum class RegKind { none, el, fd, add };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::rmsprop;
  double rmsprop_decay = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double lr = 0.001;
  LrScheduleKind lr_schedule = LrScheduleKind::constant;
  int anneal_last_epochs = 50;
  double lr_decay_per_step = 0.9999;
  double clip_norm = 1.0;
  int epochs = 1;
  int batch_size = 32;
  uint64_t seed = 0;
  RegKind reg = RegKind::none;
  double reg_weight = 1.0;
  double dropout_p = 0.0;
  AdvConfig adv;
  Metric metric = Metric::jensen_shannon;
  bool lambda_uniform = false;  // default: final step only
  int reg_samples = 1;
  BaseMaskPolicy base_policy = BaseMaskPolicy::expected;
  bool fd_symmetric = true;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double reg_value = 0.0;
  double val_error = 0.0;
  double test_error = 0.0;
  int max_adv_hamming = 0;  // audit: largest Hamming(adv, base) seen this epoch
};

struct TrainState {
  RnnParams params;
  std::vector<Tensor> slot_m;  // adam first moment
  std::vector<Tensor> slot_v;  // rmsprop / adam second moment
  int64_t step = 0;
  Rng rng{0};
  std::vector<EpochMetrics> history;
};

TrainState init_train_state(RnnParams params, const TrainConfig& cfg);

// Scales all gradients by max_norm / global_norm when the global L2 norm
// exceeds max_norm. Returns the pre-clip norm.
double clip_gradients(std::vector<Tensor>& grads, double max_norm);

void optimizer_step(TrainState& state, const std::vector<Tensor>& grads,
                    const TrainConfig& cfg, double lr);

double learning_rate_at(const TrainConfig& cfg, int epoch, int64_t step);

// -mean over the task's labeled steps and batch of log p[label].
int append_cross_entropy(TapeGraph& g, const ForwardTrace& trace,
                         const SequenceBatch& batch);

// Cross-entropy plus the configured regularizer on one batch, with the
// gradients of the total. `adv_hamming` reports the mask search audit for
// AdD batches (0 otherwise).
struct BatchLoss {
  double task_loss = 0.0;
  double reg_value = 0.0;
  int adv_hamming = 0;
  std::vector<Tensor> grads;
};
BatchLoss batch_loss_and_grads(const RnnParams& params, const SequenceBatch& batch,
                               const TrainConfig& cfg, Rng& rng);

EpochMetrics train_epoch(TrainState& state, const std::vector<SequenceBatch>& batches,
                         const TrainConfig& cfg, int epoch_index);

// Deterministic inference with the expected (all-ones, unscaled) mask, or
// with an explicit mask for subnetwork analyses. Returns the error rate.
double evaluate(const RnnParams& params, const std::vector<SequenceBatch>& batches);
double evaluate_with_mask(const RnnParams& params,
                          const std::vector<SequenceBatch>& batches,
                          const DropoutMask& mask);

// Mean cross-entropy of the expected-mask pass (perplexity = exp of this).
double evaluate_cross_entropy(const RnnParams& params,
                              const std::vector<SequenceBatch>& batches);

// Versioned binary checkpoint: "ADRN", u32 version, dimensions, then
// length-prefixed named parameter blobs as little-endian 64-bit reals.
void save_checkpoint(const std::string& path, const RnnParams& params);
RnnParams load_checkpoint(const std::string& path);

void write_metrics_header(const std::string& path);
void append_metrics_row(const std::string& path, const EpochMetrics& m);

}  // namespace advdrop

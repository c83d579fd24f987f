#include "advdrop/training.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace advdrop {

void TrainConfig::validate() const {
  if (lr <= 0.0) fail("TrainConfig: lr must be positive");
  if (clip_norm <= 0.0) fail("TrainConfig: clip-norm must be positive");
  if (epochs < 1) fail("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) fail("TrainConfig: batch-size must be >= 1");
  if (reg_samples < 1) fail("TrainConfig: reg-samples must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0) fail("TrainConfig: dropout-p must lie in [0, 1)");
  if (reg == RegKind::add) adv.validate();
}

TrainState init_train_state(RnnParams params, const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.rng = Rng(cfg.seed);
  for (const Tensor& t : params.tensors) {
    st.slot_m.push_back(Tensor::zeros(t.shape));
    st.slot_v.push_back(Tensor::zeros(t.shape));
  }
  st.params = std::move(params);
  return st;
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) fail("clip_gradients: max-norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.values) v *= s;
  }
  return norm;
}

void optimizer_step(TrainState& state, const std::vector<Tensor>& grads,
                    const TrainConfig& cfg, double lr) {
  if (grads.size() != state.params.tensors.size())
    fail("optimizer_step: gradient count does not match parameter count");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite())
      fail("optimizer_step: non-finite gradient for parameter " + state.params.names[i]);
    if (!grads[i].same_shape(state.params.tensors[i]))
      fail("optimizer_step: gradient shape mismatch for " + state.params.names[i]);
  }
  state.step += 1;
  constexpr double kEps = 1e-8;
  if (cfg.optimizer == OptimizerKind::rmsprop) {
    const double rho = cfg.rmsprop_decay;
    for (size_t i = 0; i < grads.size(); ++i) {
      Tensor& theta = state.params.tensors[i];
      Tensor& v = state.slot_v[i];
      for (size_t j = 0; j < theta.values.size(); ++j) {
        const double g = grads[i].values[j];
        v.values[j] = rho * v.values[j] + (1.0 - rho) * g * g;
        theta.values[j] -= lr * g / (std::sqrt(v.values[j]) + kEps);
      }
    }
  } else {
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < grads.size(); ++i) {
      Tensor& theta = state.params.tensors[i];
      Tensor& m = state.slot_m[i];
      Tensor& v = state.slot_v[i];
      for (size_t j = 0; j < theta.values.size(); ++j) {
        const double g = grads[i].values[j];
        m.values[j] = b1 * m.values[j] + (1.0 - b1) * g;
        v.values[j] = b2 * v.values[j] + (1.0 - b2) * g * g;
        theta.values[j] -= lr * (m.values[j] / c1) / (std::sqrt(v.values[j] / c2) + kEps);
      }
    }
  }
}

double learning_rate_at(const TrainConfig& cfg, int epoch, int64_t step) {
  switch (cfg.lr_schedule) {
    case LrScheduleKind::constant:
      return cfg.lr;
    case LrScheduleKind::linear_anneal: {
      const int window = std::min(cfg.anneal_last_epochs, cfg.epochs);
      const int start = cfg.epochs - window;
      if (epoch < start) return cfg.lr;
      return cfg.lr * static_cast<double>(cfg.epochs - epoch) / window;
    }
    case LrScheduleKind::exponential:
      return cfg.lr * std::pow(cfg.lr_decay_per_step, static_cast<double>(step));
  }
  return cfg.lr;
}

static LambdaSchedule schedule_for(const TrainConfig& cfg, int steps) {
  return cfg.lambda_uniform ? LambdaSchedule::uniform(steps)
                            : LambdaSchedule::final_step_only(steps);
}

int append_cross_entropy(TapeGraph& g, const ForwardTrace& trace,
                         const SequenceBatch& batch) {
  const int rows = batch.batch();
  const int classes = g.value(trace.pred_ids[0]).cols();
  auto one_hot = [&](const std::vector<int>& labels) {
    Tensor y({rows, classes});
    for (int r = 0; r < rows; ++r) {
      const int lbl = labels[static_cast<size_t>(r)];
      if (lbl < 0 || lbl >= classes) fail("cross-entropy: label out of range");
      y.at(r, lbl) = 1.0;
    }
    return y;
  };
  if (batch.task == TaskKind::final_step_classification) {
    const int pick = g.sum(g.mul(g.leaf(one_hot(batch.final_labels)),
                                 g.log(trace.pred_ids.back())));
    return g.scale(pick, -1.0 / rows);
  }
  int acc = -1;
  for (int t = 0; t < batch.steps(); ++t) {
    const int pick = g.sum(g.mul(g.leaf(one_hot(batch.step_labels[static_cast<size_t>(t)])),
                                 g.log(trace.pred_ids[static_cast<size_t>(t)])));
    acc = acc < 0 ? pick : g.add(acc, pick);
  }
  return g.scale(acc, -1.0 / (static_cast<double>(rows) * batch.steps()));
}

BatchLoss batch_loss_and_grads(const RnnParams& params, const SequenceBatch& batch,
                               const TrainConfig& cfg, Rng& rng) {
  const int dim = params.hidden;
  const LambdaSchedule lambda = schedule_for(cfg, batch.steps());

  TapeGraph g;
  const ParamNodeIds pn = insert_params(g, params);
  auto forward_with = [&](const DropoutMask& m) {
    return forward_sequence(g, pn, params, batch, g.leaf(m.as_tensor()),
                            m.effective_p());
  };
  auto values_of = [&](const ForwardTrace& tr) {
    std::vector<Tensor> out;
    out.reserve(tr.pred_ids.size());
    for (int id : tr.pred_ids) out.push_back(g.value(id));
    return out;
  };

  BatchLoss result;
  int ce = -1;
  int reg = -1;
  switch (cfg.reg) {
    case RegKind::none: {
      const DropoutMask m = cfg.dropout_p > 0.0 ? sample_mask(cfg.dropout_p, dim, rng)
                                                : expected_mask(dim);
      ce = append_cross_entropy(g, forward_with(m), batch);
      break;
    }
    case RegKind::el: {
      // Reference network detached; CE trains the sampled traces.
      const std::vector<Tensor> refs =
          run_predictions(params, batch, expected_mask(dim));
      int ce_acc = -1, reg_acc = -1;
      for (int s = 0; s < cfg.reg_samples; ++s) {
        const ForwardTrace tr = forward_with(sample_mask(cfg.dropout_p, dim, rng));
        const int ce_s = append_cross_entropy(g, tr, batch);
        const int reg_s = append_sequence_distance(g, refs, tr.pred_ids, lambda, cfg.metric);
        ce_acc = ce_acc < 0 ? ce_s : g.add(ce_acc, ce_s);
        reg_acc = reg_acc < 0 ? reg_s : g.add(reg_acc, reg_s);
      }
      ce = g.scale(ce_acc, 1.0 / cfg.reg_samples);
      reg = g.scale(reg_acc, 1.0 / cfg.reg_samples);
      break;
    }
    case RegKind::fd: {
      int ce_acc = -1, reg_acc = -1;
      for (int s = 0; s < cfg.reg_samples; ++s) {
        const ForwardTrace t1 = forward_with(sample_mask(cfg.dropout_p, dim, rng));
        const ForwardTrace t2 = forward_with(sample_mask(cfg.dropout_p, dim, rng));
        const int ce_s =
            g.scale(g.add(append_cross_entropy(g, t1, batch),
                          append_cross_entropy(g, t2, batch)),
                    0.5);
        const int reg_s =
            cfg.fd_symmetric
                ? append_sequence_distance_symmetric(g, t1.pred_ids, t2.pred_ids,
                                                     lambda, cfg.metric)
                : append_sequence_distance(g, values_of(t1), t2.pred_ids, lambda,
                                           cfg.metric);
        ce_acc = ce_acc < 0 ? ce_s : g.add(ce_acc, ce_s);
        reg_acc = reg_acc < 0 ? reg_s : g.add(reg_acc, reg_s);
      }
      ce = g.scale(ce_acc, 1.0 / cfg.reg_samples);
      reg = g.scale(reg_acc, 1.0 / cfg.reg_samples);
      break;
    }
    case RegKind::add: {
      const DropoutMask base =
          make_base_mask(cfg.base_policy, cfg.dropout_p, dim, rng);
      const DropoutMask adv =
          adversarial_mask(params, batch, base, cfg.adv, lambda, cfg.metric, rng);
      result.adv_hamming = hamming(adv, base);
      const ForwardTrace base_trace = forward_with(base);
      ce = append_cross_entropy(g, base_trace, batch);
      // Base predictions supervise as constants; gradient flows through the
      // adversarial trace only.
      reg = append_sequence_distance(g, values_of(base_trace),
                                     forward_with(adv).pred_ids, lambda, cfg.metric);
      break;
    }
  }

  int total = ce;
  if (reg >= 0 && cfg.reg_weight != 0.0)
    total = g.add(ce, g.scale(reg, cfg.reg_weight));
  g.backward(total);

  result.task_loss = g.value(ce).values[0];
  result.reg_value = reg >= 0 ? g.value(reg).values[0] : 0.0;
  result.grads.reserve(pn.ids.size());
  for (int id : pn.ids) result.grads.push_back(g.grad(id));
  return result;
}

EpochMetrics train_epoch(TrainState& state, const std::vector<SequenceBatch>& batches,
                         const TrainConfig& cfg, int epoch_index) {
  if (batches.empty()) fail("train_epoch: no batches");
  EpochMetrics m;
  m.epoch = epoch_index;
  for (size_t bi = 0; bi < batches.size(); ++bi) {
    BatchLoss loss = batch_loss_and_grads(state.params, batches[bi], cfg, state.rng);
    const double total = loss.task_loss + cfg.reg_weight * loss.reg_value;
    if (!std::isfinite(total))
      fail("train_epoch: non-finite loss at epoch " + std::to_string(epoch_index) +
           " batch " + std::to_string(bi) + " (task=" + std::to_string(loss.task_loss) +
           ", reg=" + std::to_string(loss.reg_value) + ")");
    clip_gradients(loss.grads, cfg.clip_norm);
    optimizer_step(state, loss.grads, cfg,
                   learning_rate_at(cfg, epoch_index, state.step));
    m.train_loss += total;
    m.reg_value += loss.reg_value;
    m.max_adv_hamming = std::max(m.max_adv_hamming, loss.adv_hamming);
  }
  m.train_loss /= static_cast<double>(batches.size());
  m.reg_value /= static_cast<double>(batches.size());
  return m;
}

static void predict_errors(const RnnParams& params, const SequenceBatch& batch,
                           const DropoutMask& mask, int64_t* wrong, int64_t* total) {
  const std::vector<Tensor> preds = run_predictions(params, batch, mask);
  const int rows = batch.batch();
  auto argmax_row = [](const Tensor& t, int r) {
    int best = 0;
    for (int c = 1; c < t.cols(); ++c)
      if (t.at(r, c) > t.at(r, best)) best = c;
    return best;
  };
  if (batch.task == TaskKind::final_step_classification) {
    const Tensor& last = preds.back();
    for (int r = 0; r < rows; ++r) {
      *wrong += argmax_row(last, r) != batch.final_labels[static_cast<size_t>(r)];
      *total += 1;
    }
  } else {
    for (int t = 0; t < batch.steps(); ++t)
      for (int r = 0; r < rows; ++r) {
        *wrong += argmax_row(preds[static_cast<size_t>(t)], r) !=
                  batch.step_labels[static_cast<size_t>(t)][static_cast<size_t>(r)];
        *total += 1;
      }
  }
}

double evaluate_with_mask(const RnnParams& params,
                          const std::vector<SequenceBatch>& batches,
                          const DropoutMask& mask) {
  int64_t wrong = 0, total = 0;
  for (const SequenceBatch& b : batches) predict_errors(params, b, mask, &wrong, &total);
  if (total == 0) fail("evaluate: empty dataset");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

double evaluate(const RnnParams& params, const std::vector<SequenceBatch>& batches) {
  return evaluate_with_mask(params, batches, expected_mask(params.hidden));
}

double evaluate_cross_entropy(const RnnParams& params,
                              const std::vector<SequenceBatch>& batches) {
  const DropoutMask mask = expected_mask(params.hidden);
  double ce = 0.0;
  int64_t total = 0;
  for (const SequenceBatch& b : batches) {
    const std::vector<Tensor> preds = run_predictions(params, b, mask);
    for (int t = 0; t < b.steps(); ++t) {
      const std::vector<int>* labels;
      if (b.task == TaskKind::final_step_classification) {
        if (t != b.steps() - 1) continue;
        labels = &b.final_labels;
      } else {
        labels = &b.step_labels[static_cast<size_t>(t)];
      }
      const Tensor& p = preds[static_cast<size_t>(t)];
      for (int r = 0; r < b.batch(); ++r) {
        ce += -std::log(std::max(p.at(r, (*labels)[static_cast<size_t>(r)]), 1e-300));
        total += 1;
      }
    }
  }
  return ce / static_cast<double>(total);
}

// ---- checkpoint io ----

static void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

static void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

static void put_f64(std::ostream& os, double d) {
  uint64_t v;
  std::memcpy(&v, &d, sizeof(v));
  put_u64(os, v);
}

static uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("checkpoint: unexpected EOF");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

static uint64_t get_u64(std::istream& is) {
  const uint64_t lo = get_u32(is);
  return lo | static_cast<uint64_t>(get_u32(is)) << 32;
}

static double get_f64(std::istream& is) {
  const uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, sizeof(d));
  return d;
}

static constexpr char kMagic[4] = {'A', 'D', 'R', 'N'};
static constexpr uint32_t kVersion = 1;

void save_checkpoint(const std::string& path, const RnnParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("save_checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, params.kind == CellKind::simple ? 0 : 1);
  put_u32(os, static_cast<uint32_t>(params.input_dim));
  put_u32(os, static_cast<uint32_t>(params.hidden));
  put_u32(os, static_cast<uint32_t>(params.output_dim));
  put_u32(os, static_cast<uint32_t>(params.tensors.size()));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor& t = params.tensors[i];
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
    put_u64(os, t.values.size());
    for (double v : t.values) put_f64(os, v);
  }
  if (!os) fail("save_checkpoint: write failure on " + path);
}

RnnParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail("load_checkpoint: bad magic in " + path);
  const uint32_t version = get_u32(is);
  if (version != kVersion)
    fail("load_checkpoint: unsupported version " + std::to_string(version));
  RnnParams p;
  p.kind = get_u32(is) == 0 ? CellKind::simple : CellKind::lstm;
  p.input_dim = static_cast<int>(get_u32(is));
  p.hidden = static_cast<int>(get_u32(is));
  p.output_dim = static_cast<int>(get_u32(is));
  const uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail("checkpoint: unexpected EOF");
    const uint32_t ndim = get_u32(is);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(get_u32(is)));
    const uint64_t n = get_u64(is);
    std::vector<double> values(n);
    for (uint64_t j = 0; j < n; ++j) values[j] = get_f64(is);
    p.names.push_back(std::move(name));
    p.tensors.emplace_back(std::move(shape), std::move(values));
  }
  return p;
}

void write_metrics_header(const std::string& path) {
  std::ofstream os(path);
  if (!os) fail("metrics: cannot open " + path);
  os << "epoch,train_loss,reg_value,val_error,test_error\n";
}

void append_metrics_row(const std::string& path, const EpochMetrics& m) {
  std::ofstream os(path, std::ios::app);
  if (!os) fail("metrics: cannot open " + path);
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", m.epoch,
                m.train_loss, m.reg_value, m.val_error, m.test_error);
  os << line;
}

}  // namespace advdrop

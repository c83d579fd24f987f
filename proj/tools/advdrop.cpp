#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "advdrop/config.hpp"
#include "advdrop/data.hpp"
#include "advdrop/verify.hpp"

namespace fs = std::filesystem;
using namespace advdrop;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericError = 3;

struct TaskPair {
  SequenceTask train;
  SequenceTask test;
};

SequenceTask cap_task(SequenceTask task, int count) {
  if (count > 0 && count < task.count()) return slice_task(task, 0, count);
  return task;
}

// Builds the train/test tasks named by the config. Synthetic tasks derive
// both splits from the run seed; image tasks read the IDX paths.
TaskPair build_tasks(const RunConfig& cfg) {
  TaskPair out;
  Rng data_rng(cfg.seed ^ 0x5eedULL);
  if (cfg.task == "parity") {
    out.train = parity_task(cfg.train_count, cfg.seq_length, data_rng);
    out.test = parity_task(cfg.test_count, cfg.seq_length, data_rng);
  } else if (cfg.task == "copy") {
    out.train =
        copy_task(cfg.train_count, cfg.seq_length, cfg.copy_delay, cfg.copy_symbols, data_rng);
    out.test =
        copy_task(cfg.test_count, cfg.seq_length, cfg.copy_delay, cfg.copy_symbols, data_rng);
  } else if (cfg.task == "smnist" || cfg.task == "pmnist") {
    const PixelOrder order =
        cfg.task == "smnist" ? PixelOrder::scanline : PixelOrder::permuted;
    const ImageSet train_set = load_idx(cfg.images, cfg.labels);
    const ImageSet test_set = load_idx(cfg.test_images, cfg.test_labels);
    out.train = cap_task(
        image_sequence_task(train_set, order, cfg.downsample, cfg.permutation_seed),
        cfg.train_count);
    out.test = cap_task(
        image_sequence_task(test_set, order, cfg.downsample, cfg.permutation_seed),
        cfg.test_count);
  } else if (cfg.task == "charlm") {
    std::ifstream is(cfg.corpus, std::ios::binary);
    if (!is) fail("config: cannot open corpus " + cfg.corpus);
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    SequenceTask all = char_lm_task(text, cfg.seq_length);
    const int test = std::max(1, all.count() / 10);
    out.train = slice_task(all, 0, all.count() - test);
    out.test = slice_task(all, all.count() - test, test);
  } else {
    fail("config: unknown task '" + cfg.task + "'");
  }
  return out;
}

std::string git_describe() {
  std::FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

void apply_seed_env(RunConfig& cfg) {
  if (const char* env = std::getenv("ADVDROP_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
    std::cerr << "[advdrop] seed overridden by ADVDROP_SEED=" << cfg.seed << "\n";
  }
}

int cmd_train(const RunConfig& cfg) {
  const TrainConfig tc = cfg.train_config();
  const TaskPair tasks = build_tasks(cfg);

  const int val_count = std::min(
      tasks.train.count() - 1,
      std::max(1, static_cast<int>(cfg.val_fraction * tasks.train.count())));
  const SequenceTask val_task =
      slice_task(tasks.train, tasks.train.count() - val_count, val_count);
  const SequenceTask train_task = slice_task(tasks.train, 0, tasks.train.count() - val_count);

  Rng init_rng(cfg.seed);
  TrainState state = init_train_state(
      RnnParams::init(cfg.cell_kind(), tasks.train.input_dim, cfg.hidden,
                      tasks.train.num_classes, init_rng),
      tc);

  fs::create_directories(cfg.out_dir);
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  write_metrics_header(metrics_path);
  {
    std::ofstream os(cfg.out_dir + "/config.resolved");
    os << canonical_config(cfg);
  }
  {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016" PRIx64, config_hash(cfg));
    std::ofstream os(cfg.out_dir + "/manifest.txt");
    os << "config_hash = " << hash << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "git = " << git_describe() << "\n";
  }

  const auto val_batches = make_batches(val_task, tc.batch_size, nullptr);
  const auto test_batches = make_batches(tasks.test, tc.batch_size, nullptr);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto batches = make_batches(train_task, tc.batch_size, &state.rng);
    EpochMetrics m = train_epoch(state, batches, tc, epoch);
    m.val_error = evaluate(state.params, val_batches);
    m.test_error = evaluate(state.params, test_batches);
    state.history.push_back(m);
    append_metrics_row(metrics_path, m);
    std::printf("epoch %d: loss %.6f reg %.6f val %.4f test %.4f\n", m.epoch,
                m.train_loss, m.reg_value, m.val_error, m.test_error);
    if (cfg.save_epoch_checkpoints)
      save_checkpoint(cfg.out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".adrn",
                      state.params);
  }
  save_checkpoint(cfg.out_dir + "/checkpoint.adrn", state.params);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const RunConfig& cfg) {
  const RnnParams params = load_checkpoint(checkpoint);
  const TaskPair tasks = build_tasks(cfg);
  const double err = evaluate(params, make_batches(tasks.test, cfg.batch_size, nullptr));
  std::printf("test_error = %.6f\n", err);
  return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed) {
  std::vector<CheckLine> lines;
  auto run = [&](const std::string& name, auto fn) {
    if (suite == name || suite == "all") {
      const auto more = fn(seed);
      lines.insert(lines.end(), more.begin(), more.end());
    }
  };
  run("grad", verify_grad);
  run("im", verify_influence_map);
  run("remark1", verify_remark1);
  run("prop1", verify_prop1);
  run("flip-oracle", verify_flip_oracle);
  if (lines.empty()) {
    std::cerr << "unknown suite '" << suite
              << "' (expected grad|im|remark1|prop1|flip-oracle|all)\n";
    return kExitConfigError;
  }
  return print_check_lines(lines) == 0 ? 0 : 1;
}

int cmd_histogram(const std::string& checkpoint, const RunConfig& cfg, int n_masks,
                  double p, double delta, int k, const std::string& out_path) {
  const RnnParams params = load_checkpoint(checkpoint);
  const TaskPair tasks = build_tasks(cfg);
  const auto test_batches = make_batches(tasks.test, cfg.batch_size, nullptr);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(tasks.test.steps);
  AdvConfig adv_cfg;
  adv_cfg.delta = delta;
  adv_cfg.iterations = k;

  std::vector<double> random_acc(static_cast<size_t>(n_masks));
  std::vector<double> adv_acc(static_cast<size_t>(n_masks));
  const Rng base_rng(cfg.seed ^ 0x9157ULL);

  // Rows are independent given their split streams; fan them out.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(std::min<unsigned>(hw, 8));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n_masks; i += workers) {
        Rng rng = base_rng.split(static_cast<uint64_t>(i));
        const DropoutMask random = sample_mask(p, params.hidden, rng);
        random_acc[static_cast<size_t>(i)] =
            1.0 - evaluate_with_mask(params, test_batches, random);
        const SequenceBatch& batch =
            test_batches[static_cast<size_t>(i) % test_batches.size()];
        const DropoutMask adv =
            adversarial_mask(params, batch, expected_mask(params.hidden), adv_cfg,
                             lambda, Metric::jensen_shannon, rng);
        adv_acc[static_cast<size_t>(i)] =
            1.0 - evaluate_with_mask(params, test_batches, adv);
      }
    });
  }
  for (std::thread& t : pool) t.join();

  std::ofstream os(out_path);
  if (!os) fail("histogram: cannot open " + out_path);
  os << "random_mask_accuracy,adversarial_mask_accuracy\n";
  for (int i = 0; i < n_masks; ++i) {
    char line[80];
    std::snprintf(line, sizeof(line), "%.6f,%.6f\n", random_acc[static_cast<size_t>(i)],
                  adv_acc[static_cast<size_t>(i)]);
    os << line;
  }
  std::printf("wrote %d mask rows to %s\n", n_masks, out_path.c_str());
  return 0;
}

int cmd_maskstats(const std::vector<std::string>& checkpoints, const RunConfig& cfg,
                  double delta, int k, const std::string& out_path) {
  if (checkpoints.empty()) fail("maskstats: needs at least one checkpoint");
  const TaskPair tasks = build_tasks(cfg);
  const auto test_batches = make_batches(tasks.test, cfg.batch_size, nullptr);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(tasks.test.steps);
  AdvConfig adv_cfg;
  adv_cfg.delta = delta;
  adv_cfg.iterations = k;

  std::ofstream os(out_path);
  if (!os) fail("maskstats: cannot open " + out_path);
  int hidden = -1;
  os << "checkpoint";
  bool header_done = false;

  for (const std::string& path : checkpoints) {
    const RnnParams params = load_checkpoint(path);
    if (hidden < 0) {
      hidden = params.hidden;
      for (int j = 0; j < hidden; ++j) os << ",unit_" << j;
      os << "\n";
      header_done = true;
    } else if (params.hidden != hidden) {
      fail("maskstats: checkpoint " + path + " has hidden size " +
           std::to_string(params.hidden) + ", expected " + std::to_string(hidden));
    }
    std::vector<double> mean_bits(static_cast<size_t>(hidden), 0.0);
    Rng rng(cfg.seed ^ 0x3157ULL);
    for (const SequenceBatch& batch : test_batches) {
      const DropoutMask adv = adversarial_mask(params, batch, expected_mask(hidden),
                                               adv_cfg, lambda,
                                               Metric::jensen_shannon, rng);
      for (int j = 0; j < hidden; ++j) mean_bits[static_cast<size_t>(j)] += adv.bits[static_cast<size_t>(j)];
    }
    os << fs::path(path).filename().string();
    for (int j = 0; j < hidden; ++j) {
      char cell[32];
      std::snprintf(cell, sizeof(cell), ",%.6f",
                    mean_bits[static_cast<size_t>(j)] / test_batches.size());
      os << cell;
    }
    os << "\n";
  }
  (void)header_done;
  std::printf("wrote mask statistics for %zu checkpoints to %s\n", checkpoints.size(),
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial dropout for recurrent networks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model and write metrics/checkpoint");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string task_flag, reg_flag, lambda_flag, out_flag, metric_flag, cell_flag;
  int epochs_flag = -1, k_flag = -1, hidden_flag = -1, batch_flag = -1;
  double delta_flag = -1.0, p_flag = -1.0, lr_flag = -1.0;
  int64_t seed_flag = -1;
  train->add_option("--config", config_path, "Config file (key = value lines)");
  train->add_option("--set", overrides, "Override: key=value (repeatable)");
  train->add_option("--task", task_flag, "parity|copy|smnist|pmnist|charlm");
  train->add_option("--reg", reg_flag, "none|el|fd|add");
  train->add_option("--epochs", epochs_flag, "Training epochs");
  train->add_option("--delta", delta_flag, "Adversarial budget fraction");
  train->add_option("--k", k_flag, "Adversarial search iterations");
  train->add_option("--p", p_flag, "Dropout probability");
  train->add_option("--lr", lr_flag, "Initial learning rate");
  train->add_option("--lambda-schedule", lambda_flag, "final|uniform");
  train->add_option("--metric", metric_flag, "l2|js");
  train->add_option("--cell", cell_flag, "rnn|lstm");
  train->add_option("--hidden", hidden_flag, "Hidden units");
  train->add_option("--batch-size", batch_flag, "Batch size");
  train->add_option("--seed", seed_flag, "Run seed");
  train->add_option("--out", out_flag, "Output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string eval_checkpoint;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--config", config_path, "Config file describing the dataset");
  eval_cmd->add_option("--set", overrides, "Override: key=value (repeatable)");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Run a verification suite");
  std::string suite;
  uint64_t verify_seed = 12345;
  verify_cmd->add_option("suite", suite, "grad|im|remark1|prop1|flip-oracle|all")
      ->required();
  verify_cmd->add_option("--seed", verify_seed, "Suite seed");

  // histogram
  auto* hist_cmd =
      app.add_subcommand("histogram", "Per-mask subnetwork accuracies (two CSV columns)");
  std::string hist_checkpoint, hist_out = "histogram.csv";
  int n_masks = 500, hist_k = 2;
  double hist_p = 0.03, hist_delta = 0.03;
  hist_cmd->add_option("--checkpoint", hist_checkpoint, "Checkpoint path")->required();
  hist_cmd->add_option("--config", config_path, "Config file describing the dataset");
  hist_cmd->add_option("--set", overrides, "Override: key=value (repeatable)");
  hist_cmd->add_option("--n-masks", n_masks, "Masks per column");
  hist_cmd->add_option("--p", hist_p, "Random-mask dropout probability");
  hist_cmd->add_option("--delta", hist_delta, "Adversarial budget fraction");
  hist_cmd->add_option("--k", hist_k, "Adversarial search iterations");
  hist_cmd->add_option("--out", hist_out, "Output CSV path");

  // maskstats
  auto* stats_cmd =
      app.add_subcommand("maskstats", "Mean adversarial mask bits per checkpoint");
  std::vector<std::string> stat_checkpoints;
  std::string stats_out = "maskstats.csv";
  int stats_k = 2;
  double stats_delta = 0.03;
  stats_cmd->add_option("--checkpoints", stat_checkpoints, "Checkpoint series")
      ->required();
  stats_cmd->add_option("--config", config_path, "Config file describing the dataset");
  stats_cmd->add_option("--set", overrides, "Override: key=value (repeatable)");
  stats_cmd->add_option("--delta", stats_delta, "Adversarial budget fraction");
  stats_cmd->add_option("--k", stats_k, "Adversarial search iterations");
  stats_cmd->add_option("--out", stats_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    try {
      if (!config_path.empty()) cfg = load_config_file(config_path);
      for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) fail("config: --set expects key=value, got '" + kv + "'");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!task_flag.empty()) cfg.task = task_flag;
      if (!reg_flag.empty()) cfg.reg = reg_flag;
      if (!lambda_flag.empty()) cfg.lambda_schedule = lambda_flag;
      if (!metric_flag.empty()) cfg.metric = metric_flag;
      if (!cell_flag.empty()) cfg.cell = cell_flag;
      if (!out_flag.empty()) cfg.out_dir = out_flag;
      if (epochs_flag >= 0) cfg.epochs = epochs_flag;
      if (k_flag >= 0) cfg.k = k_flag;
      if (hidden_flag >= 0) cfg.hidden = hidden_flag;
      if (batch_flag >= 0) cfg.batch_size = batch_flag;
      if (delta_flag >= 0.0) cfg.delta = delta_flag;
      if (p_flag >= 0.0) cfg.dropout_p = p_flag;
      if (lr_flag >= 0.0) cfg.lr = lr_flag;
      if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
      apply_seed_env(cfg);
      if (app.got_subcommand(train) || app.got_subcommand(eval_cmd))
        cfg.train_config();  // surface config errors before any work
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfigError;
    }

    if (app.got_subcommand(train)) return cmd_train(cfg);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_checkpoint, cfg);
    if (app.got_subcommand(verify_cmd)) return cmd_verify(suite, verify_seed);
    if (app.got_subcommand(hist_cmd))
      return cmd_histogram(hist_checkpoint, cfg, n_masks, hist_p, hist_delta, hist_k,
                           hist_out);
    if (app.got_subcommand(stats_cmd))
      return cmd_maskstats(stat_checkpoints, cfg, stats_delta, stats_k, stats_out);
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("non-finite") != std::string::npos) return kExitNumericError;
    return 1;
  }
  return 0;
}

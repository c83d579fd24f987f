#include "advdrop/verify.hpp"

#include <cmath>
#include <cstdio>

#include "advdrop/masks.hpp"
#include "advdrop/regularizers.hpp"

namespace advdrop {

int print_check_lines(const std::vector<CheckLine>& lines) {
  int failures = 0;
  for (const CheckLine& l : lines) {
    std::printf("%s %s: %s\n", l.pass ? "PASS" : "FAIL", l.name.c_str(),
                l.detail.c_str());
    failures += l.pass ? 0 : 1;
  }
  return failures;
}

static std::string fmt(const char* pattern, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

RandomInstance random_instance(Rng& rng, CellKind kind, int max_hidden, int max_steps,
                               int max_batch) {
  RandomInstance inst;
  const int d_in = 1 + rng.uniform_int(3);
  const int hidden = 2 + rng.uniform_int(max_hidden - 1);
  const int classes = 2 + rng.uniform_int(3);
  inst.params = RnnParams::init(kind, d_in, hidden, classes, rng);
  // Unit-scale weights exercise the nonlinearities away from saturation.
  for (Tensor& t : inst.params.tensors)
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);

  const int steps = 1 + rng.uniform_int(max_steps);
  const int rows = 1 + rng.uniform_int(max_batch);
  inst.batch.task = TaskKind::final_step_classification;
  for (int t = 0; t < steps; ++t) {
    Tensor x({rows, d_in});
    for (double& v : x.values) v = rng.uniform();
    inst.batch.inputs.push_back(std::move(x));
  }
  for (int r = 0; r < rows; ++r) inst.batch.final_labels.push_back(rng.uniform_int(classes));
  return inst;
}

// ---- criterion 1: gradients of random RNN/LSTM graphs ----

// Max relative error over every parameter leaf and the mask leaf of the
// cross-entropy loss, against central differences.
static double model_grad_error(const RnnParams& params, const SequenceBatch& batch,
                               const DropoutMask& mask, double h) {
  double worst = 0.0;
  const size_t n_params = params.tensors.size();
  for (size_t target = 0; target <= n_params; ++target) {
    const bool vary_mask = target == n_params;
    ScalarGraphFn f = [&](TapeGraph& g, int varied) {
      RnnParams local = params;
      ParamNodeIds pn;
      for (size_t i = 0; i < n_params; ++i)
        pn.ids.push_back(!vary_mask && i == target ? varied
                                                   : g.leaf(params.tensors[i]));
      const int mask_id = vary_mask ? varied : g.leaf(mask.as_tensor());
      const ForwardTrace tr =
          forward_sequence(g, pn, local, batch, mask_id, mask.effective_p());
      return append_cross_entropy(g, tr, batch);
    };
    const Tensor& x = vary_mask ? mask.as_tensor() : params.tensors[target];
    worst = std::max(worst, finite_diff_check(f, x, h));
  }
  return worst;
}

std::vector<CheckLine> verify_grad(uint64_t seed) {
  Rng rng(seed);
  constexpr int kInstances = 100;
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 8, 8, 3);
    const double p = i % 3 == 0 ? 0.0 : 0.3;
    const DropoutMask mask = p > 0.0 ? sample_mask(p, inst.params.hidden, rng)
                                     : expected_mask(inst.params.hidden);
    worst = std::max(worst, model_grad_error(inst.params, inst.batch, mask, 1e-5));
  }
  return {{"grad",
           worst <= kTol,
           fmt("max rel err %.3g (tolerance %.0e) over 100 rnn/lstm graphs", worst, kTol)}};
}

// ---- criterion 2: influence map vs coordinate differences ----

static std::vector<Tensor> predictions_at_relaxed_mask(const RnnParams& params,
                                                       const SequenceBatch& batch,
                                                       const Tensor& mask_values,
                                                       double effective_p) {
  TapeGraph g;
  const ParamNodeIds pn = insert_params(g, params);
  const ForwardTrace tr =
      forward_sequence(g, pn, params, batch, g.leaf(mask_values), effective_p);
  std::vector<Tensor> preds;
  preds.reserve(tr.pred_ids.size());
  for (int id : tr.pred_ids) preds.push_back(g.value(id));
  return preds;
}

std::vector<CheckLine> verify_influence_map(uint64_t seed) {
  Rng rng(seed);
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-3;
  constexpr double kH = 1e-4;
  double worst_l2 = 0.0, worst_js = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const Metric metric = i % 2 == 0 ? Metric::squared_l2 : Metric::jensen_shannon;
    const CellKind kind = i % 4 < 2 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 8, 6, 2);
    const int dim = inst.params.hidden;
    const DropoutMask base =
        i % 3 == 0 ? sample_mask(0.3, dim, rng) : expected_mask(dim);
    const DropoutMask at = init_search_mask(base, InitPolicy::single_random_flip, rng);
    const LambdaSchedule lambda =
        i % 2 == 0 ? LambdaSchedule::final_step_only(inst.batch.steps())
                   : LambdaSchedule::uniform(inst.batch.steps());

    const InfluenceMap im =
        influence_map(inst.params, inst.batch, base, at, lambda, metric);
    const std::vector<Tensor> refs = run_predictions(inst.params, inst.batch, base);
    auto dist_at = [&](const Tensor& mask_values) {
      return sequence_distance(
          refs,
          predictions_at_relaxed_mask(inst.params, inst.batch, mask_values,
                                      at.effective_p()),
          lambda, metric);
    };
    double worst = 0.0;
    const Tensor center = at.as_tensor();
    for (int c = 0; c < dim; ++c) {
      Tensor hi = center, lo = center;
      hi.values[static_cast<size_t>(c)] += kH;
      lo.values[static_cast<size_t>(c)] -= kH;
      const double cd = (dist_at(hi) - dist_at(lo)) / (2.0 * kH);
      worst = std::max(worst, std::abs(im.scores[static_cast<size_t>(c)] - cd) /
                                  std::max(1.0, std::abs(cd)));
    }
    (metric == Metric::squared_l2 ? worst_l2 : worst_js) =
        std::max(metric == Metric::squared_l2 ? worst_l2 : worst_js, worst);
  }
  return {{"im-squared-l2", worst_l2 <= kTol,
           fmt("max rel err %.3g (tolerance %.0e)", worst_l2, kTol)},
          {"im-jensen-shannon", worst_js <= kTol,
           fmt("max rel err %.3g (tolerance %.0e)", worst_js, kTol)}};
}

// ---- criterion 3: Remark 1 decomposition ----

std::vector<CheckLine> verify_remark1(uint64_t seed) {
  Rng rng(seed);
  constexpr int kModels = 20;
  constexpr int kSamples = 2000;
  double worst_gap_sigma = 0.0;
  int failures = 0;
  for (int i = 0; i < kModels; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 6, 4, 2);
    const double p = 0.15 + 0.1 * (i % 3);
    const int budget = 1 + i % 2;
    Rng local = rng.split(static_cast<uint64_t>(i) + 1);
    const Remark1Report r =
        remark1_check(inst.params, inst.batch, p, kSamples, budget, local);
    const double gap = std::abs(r.lhs - r.rhs());
    const double tol = 3.0 * r.combined_se() + 1e-12;
    if (gap > tol) ++failures;
    if (r.combined_se() > 0.0)
      worst_gap_sigma = std::max(worst_gap_sigma, gap / r.combined_se());
  }
  return {{"remark1", failures == 0,
           fmt("|lhs-rhs| <= 3 sigma on 20 models; worst gap %.3g sigma (%.0f failures)",
               worst_gap_sigma, static_cast<double>(failures))}};
}

// ---- criterion 4: Proposition 1 ordering ----

std::vector<CheckLine> verify_prop1(uint64_t seed) {
  Rng rng(seed);
  constexpr int kModels = 100;
  constexpr int kSamples = 2000;
  int el_le_add = 0, fd_le_el = 0;
  for (int i = 0; i < kModels; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 8, 4, 1);
    const double p = 0.1 + 0.05 * (i % 3);
    const double delta = 0.15 + 0.05 * (i % 4);
    Rng local = rng.split(static_cast<uint64_t>(i) + 1);
    const Prop1Result r =
        proposition1_check(inst.params, inst.batch, p, delta, kSamples, local);
    if (r.el <= r.add_exact + 3.0 * r.se_el + 1e-12) ++el_le_add;
    const double se = std::sqrt(r.se_fd_quarter * r.se_fd_quarter + r.se_el * r.se_el);
    if (r.fd_quarter <= r.el + 3.0 * se + 1e-12) ++fd_le_el;
  }
  return {{"prop1-el-le-add", el_le_add == kModels,
           fmt("EL <= exact AdD on %.0f/%.0f models (need 100%%)",
               static_cast<double>(el_le_add), static_cast<double>(kModels))},
          {"prop1-quarter-fd-le-el", fd_le_el >= 95,
           fmt("1/4 FD <= EL within 3 sigma on %.0f/%.0f models (need >= 95)",
               static_cast<double>(fd_le_el), static_cast<double>(kModels))}};
}

// ---- criterion 5: flip/search properties ----

std::vector<CheckLine> verify_flip_oracle(uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckLine> lines;

  // Budget invariant, sign rule, oracle dominance on 1000 instances.
  constexpr int kInstances = 1000;
  int budget_ok = 0, sign_ok = 0, dominance_ok = 0;
  for (int i = 0; i < kInstances; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 8, 3, 1);
    const int dim = inst.params.hidden;
    const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
    const Metric metric = i % 2 == 0 ? Metric::squared_l2 : Metric::jensen_shannon;
    AdvConfig cfg;
    cfg.delta = 0.1 + 0.2 * (i % 4) / 3.0;
    cfg.iterations = 1 + i % 2;
    const DropoutMask base =
        i % 3 == 0 ? sample_mask(0.2, dim, rng) : expected_mask(dim);

    // Staged search run by hand so each flip call can be audited.
    bool signs_fine = true;
    DropoutMask current = init_search_mask(base, InitPolicy::single_random_flip, rng);
    for (int k = 0; k < cfg.iterations; ++k) {
      const InfluenceMap im =
          influence_map(inst.params, inst.batch, base, current, lambda, metric);
      const int stage_budget = std::max(
          1, static_cast<int>(std::floor(cfg.delta * (k + 1) / cfg.iterations * dim)));
      const DropoutMask next = flip(current, im, base, stage_budget);
      for (int c = 0; c < dim; ++c)
        if (next.bits[static_cast<size_t>(c)] != current.bits[static_cast<size_t>(c)]) {
          const double s = (1.0 - 2.0 * current.bits[static_cast<size_t>(c)]) *
                           im.scores[static_cast<size_t>(c)];
          if (s <= 0.0) signs_fine = false;
        }
      current = next;
    }
    sign_ok += signs_fine;
    budget_ok += hamming(current, base) <= cfg.budget(dim);

    const auto oracle = brute_force_adversarial(inst.params, inst.batch, base,
                                                cfg.budget(dim), lambda, metric);
    const double greedy_dist =
        sequence_distance(run_predictions(inst.params, inst.batch, base),
                          run_predictions(inst.params, inst.batch, current), lambda,
                          metric);
    dominance_ok += oracle.second >= greedy_dist - 1e-12;
  }
  lines.push_back({"flip-budget-invariant", budget_ok == kInstances,
                   fmt("holds on %.0f/%.0f instances", static_cast<double>(budget_ok),
                       static_cast<double>(kInstances))});
  lines.push_back({"flip-sign-rule", sign_ok == kInstances,
                   fmt("holds on %.0f/%.0f instances", static_cast<double>(sign_ok),
                       static_cast<double>(kInstances))});
  lines.push_back({"oracle-dominance", dominance_ok == kInstances,
                   fmt("holds on %.0f/%.0f instances", static_cast<double>(dominance_ok),
                       static_cast<double>(kInstances))});

  // Greedy K=2 attains >= 70% of the brute-force max in >= 90% of 200 trials.
  constexpr int kTrials = 200;
  int good = 0;
  for (int i = 0; i < kTrials; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    Rng gen = rng.split(10000 + static_cast<uint64_t>(i));
    RandomInstance inst = random_instance(gen, kind, 10, 4, 1);
    const int dim = inst.params.hidden;
    const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
    const Metric metric = i % 2 == 0 ? Metric::squared_l2 : Metric::jensen_shannon;
    AdvConfig cfg;
    cfg.delta = 0.25;
    cfg.iterations = 2;
    const DropoutMask base = expected_mask(dim);
    const DropoutMask greedy =
        adversarial_mask(inst.params, inst.batch, base, cfg, lambda, metric, gen);
    const double greedy_dist =
        sequence_distance(run_predictions(inst.params, inst.batch, base),
                          run_predictions(inst.params, inst.batch, greedy), lambda,
                          metric);
    const auto oracle = brute_force_adversarial(inst.params, inst.batch, base,
                                                cfg.budget(dim), lambda, metric);
    if (oracle.second <= 1e-12 || greedy_dist >= 0.7 * oracle.second) ++good;
  }
  lines.push_back({"greedy-vs-oracle", good >= 180,
                   fmt(">= 70%% of oracle distance in %.0f/%.0f trials (need >= 180)",
                       static_cast<double>(good), static_cast<double>(kTrials))});
  return lines;
}

}  // namespace advdrop

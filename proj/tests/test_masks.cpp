#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advdrop/masks.hpp"
#include "advdrop/verify.hpp"

using namespace advdrop;

TEST_CASE("sample_mask with p = 0 is always all ones") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const DropoutMask m = sample_mask(0.0, 8, rng);
    for (uint8_t b : m.bits) CHECK(b == 1);
  }
}

TEST_CASE("sample_mask rejects out-of-range and degenerate p") {
  Rng rng(2);
  CHECK_THROWS_AS(sample_mask(-0.1, 4, rng), std::runtime_error);
  CHECK_THROWS_AS(sample_mask(1.0, 4, rng), std::runtime_error);
  // keep probability underflows at p = 1 - ulp
  CHECK_THROWS_AS(sample_mask(1.0 - 1e-16, 4, rng), std::runtime_error);
  const DropoutMask near = sample_mask(0.999, 1000, rng);
  int zeros = 0;
  for (uint8_t b : near.bits) zeros += b == 0;
  CHECK(zeros > 980);
}

TEST_CASE("sample_mask hits the Bernoulli rate within the 3-sigma band") {
  Rng rng(3);
  const double p = 0.1;
  const int draws = 1000000;
  int64_t zeros = 0;
  for (int i = 0; i < draws / 100; ++i) {
    const DropoutMask m = sample_mask(p, 100, rng);
    for (uint8_t b : m.bits) zeros += b == 0;
  }
  const double frac = static_cast<double>(zeros) / draws;
  CHECK(std::abs(frac - p) <= 0.001);
}

TEST_CASE("init_search_mask flips exactly one element or none") {
  Rng rng(4);
  const DropoutMask base = expected_mask(12);
  CHECK(hamming(init_search_mask(base, InitPolicy::single_random_flip, rng), base) == 1);
  CHECK(hamming(init_search_mask(base, InitPolicy::copy, rng), base) == 0);
}

TEST_CASE("flipped index is uniform over the dimension (chi-squared at 1%)") {
  Rng rng(5);
  const int dim = 10;
  const int draws = 10000;
  const DropoutMask base = expected_mask(dim);
  std::vector<int> counts(dim, 0);
  for (int i = 0; i < draws; ++i) {
    const DropoutMask m = init_search_mask(base, InitPolicy::single_random_flip, rng);
    for (int j = 0; j < dim; ++j)
      if (m.bits[static_cast<size_t>(j)] != base.bits[static_cast<size_t>(j)]) ++counts[j];
  }
  const double expected = static_cast<double>(draws) / dim;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-squared critical value, 9 dof, alpha = 0.01
  CHECK(chi2 <= 21.666);
}

TEST_CASE("influence map is zero with a warning when masks coincide") {
  Rng rng(6);
  const RandomInstance inst = random_instance(rng, CellKind::simple, 6, 3, 1);
  const DropoutMask base = expected_mask(inst.params.hidden);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
  const InfluenceMap im =
      influence_map(inst.params, inst.batch, base, base, lambda, Metric::squared_l2);
  for (double s : im.scores) CHECK(s == 0.0);
}

TEST_CASE("influence map matches coordinate-wise finite differences") {
  Rng rng(7);
  for (int i = 0; i < 6; ++i) {
    const Metric metric = i % 2 == 0 ? Metric::squared_l2 : Metric::jensen_shannon;
    const CellKind kind = i % 3 == 0 ? CellKind::lstm : CellKind::simple;
    const RandomInstance inst = random_instance(rng, kind, 6, 4, 2);
    const DropoutMask base = expected_mask(inst.params.hidden);
    const DropoutMask at = init_search_mask(base, InitPolicy::single_random_flip, rng);
    const LambdaSchedule lambda = LambdaSchedule::uniform(inst.batch.steps());
    const InfluenceMap im = influence_map(inst.params, inst.batch, base, at, lambda, metric);

    const std::vector<Tensor> refs = run_predictions(inst.params, inst.batch, base);
    const double h = 1e-4;
    for (int c = 0; c < inst.params.hidden; ++c) {
      auto dist_at = [&](double delta) {
        TapeGraph g;
        const ParamNodeIds pn = insert_params(g, inst.params);
        Tensor mv = at.as_tensor();
        mv.values[static_cast<size_t>(c)] += delta;
        const ForwardTrace tr =
            forward_sequence(g, pn, inst.params, inst.batch, g.leaf(mv), at.effective_p());
        std::vector<Tensor> preds;
        for (int id : tr.pred_ids) preds.push_back(g.value(id));
        return sequence_distance(refs, preds, lambda, metric);
      };
      const double cd = (dist_at(h) - dist_at(-h)) / (2.0 * h);
      const double err =
          std::abs(im.scores[static_cast<size_t>(c)] - cd) / std::max(1.0, std::abs(cd));
      CHECK(err <= 1e-3);
    }
  }
}

TEST_CASE("a unit with zeroed outgoing weights has zero influence") {
  Rng rng(8);
  RnnParams p = RnnParams::init(CellKind::simple, 2, 5, 3, rng);
  const int unit = 2;
  for (int j = 0; j < 5; ++j) p.tensors[1].at(unit, j) = 0.0;  // U_h row
  for (int m = 0; m < 3; ++m) p.tensors[p.w_out_index()].at(unit, m) = 0.0;

  SequenceBatch batch;
  batch.task = TaskKind::final_step_classification;
  for (int t = 0; t < 3; ++t) {
    Tensor x({1, 2});
    for (double& v : x.values) v = rng.uniform();
    batch.inputs.push_back(std::move(x));
  }
  batch.final_labels.push_back(0);

  const DropoutMask base = expected_mask(5);
  DropoutMask at = base;
  at.bits[4] = 0;  // flip some other unit
  const LambdaSchedule lambda = LambdaSchedule::uniform(3);
  const InfluenceMap im =
      influence_map(p, batch, base, at, lambda, Metric::squared_l2);
  CHECK(im.scores[unit] == 0.0);
}

TEST_CASE("flip hand trace, budget 1") {
  const DropoutMask base = expected_mask(4);
  InfluenceMap im;
  im.scores = {0.5, -0.2, 0.1, -0.4};
  im.at = base;
  const DropoutMask out = flip(base, im, base, 1);
  CHECK(out.bits == std::vector<uint8_t>{1, 1, 1, 0});
}

TEST_CASE("flip hand trace, budget 2, never flips nonpositive scores") {
  const DropoutMask base = expected_mask(4);
  InfluenceMap im;
  im.scores = {0.5, -0.2, 0.1, -0.4};
  im.at = base;
  const DropoutMask out = flip(base, im, base, 2);
  CHECK(out.bits == std::vector<uint8_t>{1, 0, 1, 0});
  const DropoutMask wide = flip(base, im, base, 4);
  CHECK(wide.bits == std::vector<uint8_t>{1, 0, 1, 0});  // s_3 <= 0 stops the sweep
}

TEST_CASE("flip with budget 0 keeps a mask that already matches the base") {
  const DropoutMask base = expected_mask(4);
  InfluenceMap im;
  im.scores = {0.5, 0.4, 0.3, 0.2};
  im.at = base;
  CHECK(flip(base, im, base, 0).bits == base.bits);
}

TEST_CASE("flip can step back toward the base under a tight budget") {
  const DropoutMask base = expected_mask(3);
  DropoutMask start = base;
  start.bits[1] = 0;
  InfluenceMap im;
  im.scores = {-0.1, 0.9, -0.05};  // s = (1-2*eps)*im = (0.1, 0.9, 0.05)
  im.at = start;
  const DropoutMask out = flip(start, im, base, 1);
  // flipping unit 1 back (distance 0), then unit 0 away (distance 1)
  CHECK(out.bits == std::vector<uint8_t>{0, 1, 1});
}

TEST_CASE("K = 1 search is exactly one influence map plus one flip") {
  Rng rng(9);
  const RandomInstance inst = random_instance(rng, CellKind::simple, 6, 3, 1);
  const int dim = inst.params.hidden;
  const DropoutMask base = expected_mask(dim);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
  AdvConfig cfg;
  cfg.delta = 0.4;
  cfg.iterations = 1;

  Rng a = rng.split(1);
  Rng b = rng.split(1);
  const DropoutMask via_search =
      adversarial_mask(inst.params, inst.batch, base, cfg, lambda, Metric::squared_l2, a);
  const DropoutMask start = init_search_mask(base, InitPolicy::single_random_flip, b);
  const InfluenceMap im =
      influence_map(inst.params, inst.batch, base, start, lambda, Metric::squared_l2);
  const DropoutMask manual = flip(start, im, base, cfg.budget(dim));
  CHECK(via_search.bits == manual.bits);
}

TEST_CASE("property: search respects the budget and stages grow monotonically") {
  Rng rng(10);
  for (int i = 0; i < 60; ++i) {
    const CellKind kind = i % 2 == 0 ? CellKind::simple : CellKind::lstm;
    const RandomInstance inst = random_instance(rng, kind, 8, 3, 1);
    const int dim = inst.params.hidden;
    const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
    AdvConfig cfg;
    cfg.delta = 0.1 + 0.05 * (i % 5);
    cfg.iterations = 1 + i % 3;
    const DropoutMask base =
        i % 3 == 0 ? sample_mask(0.2, dim, rng) : expected_mask(dim);

    DropoutMask current = init_search_mask(base, InitPolicy::single_random_flip, rng);
    int prev_distance = hamming(current, base);
    for (int k = 0; k < cfg.iterations; ++k) {
      const InfluenceMap im = influence_map(inst.params, inst.batch, base, current,
                                            lambda, Metric::jensen_shannon);
      const int stage_budget = std::max(
          1, static_cast<int>(std::floor(cfg.delta * (k + 1) / cfg.iterations * dim)));
      current = flip(current, im, base, stage_budget);
      const int d = hamming(current, base);
      CHECK(d >= prev_distance);
      prev_distance = d;
    }
    CHECK(hamming(current, base) <= cfg.budget(dim));
  }
}

TEST_CASE("brute force with budget 0 returns the base itself") {
  Rng rng(11);
  const RandomInstance inst = random_instance(rng, CellKind::simple, 5, 3, 1);
  const DropoutMask base = expected_mask(inst.params.hidden);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
  const auto [mask, dist] = brute_force_adversarial(inst.params, inst.batch, base, 0,
                                                    lambda, Metric::squared_l2);
  CHECK(mask.bits == base.bits);
  CHECK(dist == 0.0);
}

TEST_CASE("brute force with full budget maximizes over all 2^H masks") {
  Rng rng(12);
  const RandomInstance inst = random_instance(rng, CellKind::simple, 5, 3, 1);
  const int dim = inst.params.hidden;
  const DropoutMask base = expected_mask(dim);
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(inst.batch.steps());
  const auto [mask, dist] = brute_force_adversarial(inst.params, inst.batch, base, dim,
                                                    lambda, Metric::squared_l2);

  const std::vector<Tensor> refs = run_predictions(inst.params, inst.batch, base);
  double best = -1.0;
  for (int code = 0; code < (1 << dim); ++code) {
    DropoutMask cand = base;
    for (int j = 0; j < dim; ++j) cand.bits[static_cast<size_t>(j)] = (code >> j) & 1;
    best = std::max(best, sequence_distance(refs, run_predictions(inst.params, inst.batch, cand),
                                            lambda, Metric::squared_l2));
  }
  CHECK(dist == doctest::Approx(best));
}

TEST_CASE("brute force rejects dimensions beyond the enumeration bound") {
  Rng rng(13);
  RnnParams p = RnnParams::init(CellKind::simple, 1, 17, 2, rng);
  SequenceBatch batch;
  batch.task = TaskKind::final_step_classification;
  batch.inputs.push_back(Tensor({1, 1}, {0.5}));
  batch.final_labels.push_back(0);
  CHECK_THROWS_AS(brute_force_adversarial(p, batch, expected_mask(17), 1,
                                          LambdaSchedule::final_step_only(1),
                                          Metric::squared_l2),
                  std::runtime_error);
}

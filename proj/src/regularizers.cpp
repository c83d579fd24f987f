#include "advdrop/regularizers.hpp"

#include <cmath>

namespace advdrop {

static McEstimate summarize(const std::vector<double>& xs) {
  McEstimate e;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) e.mean += x;
  e.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return e;
}

McEstimate el_regularizer_stats(const RnnParams& params, const SequenceBatch& batch,
                                double p, const LambdaSchedule& lambda, Metric metric,
                                int samples, Rng& rng) {
  if (samples < 1) fail("el_regularizer: sample count must be >= 1");
  const std::vector<Tensor> refs =
      run_predictions(params, batch, expected_mask(params.hidden));
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const DropoutMask eps = sample_mask(p, params.hidden, rng);
    dists.push_back(
        sequence_distance(refs, run_predictions(params, batch, eps), lambda, metric));
  }
  return summarize(dists);
}

double el_regularizer(const RnnParams& params, const SequenceBatch& batch, double p,
                      const LambdaSchedule& lambda, Metric metric, int samples,
                      Rng& rng) {
  return el_regularizer_stats(params, batch, p, lambda, metric, samples, rng).mean;
}

McEstimate fd_regularizer_stats(const RnnParams& params, const SequenceBatch& batch,
                                double p, const LambdaSchedule& lambda, Metric metric,
                                int samples, Rng& rng_a, Rng& rng_b) {
  if (samples < 1) fail("fd_regularizer: sample count must be >= 1");
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const DropoutMask e1 = sample_mask(p, params.hidden, rng_a);
    const DropoutMask e2 = sample_mask(p, params.hidden, rng_b);
    dists.push_back(sequence_distance(run_predictions(params, batch, e1),
                                      run_predictions(params, batch, e2), lambda,
                                      metric));
  }
  return summarize(dists);
}

double fd_regularizer(const RnnParams& params, const SequenceBatch& batch, double p,
                      const LambdaSchedule& lambda, Metric metric, int samples,
                      Rng& rng) {
  Rng rng_a = rng.split(1);
  Rng rng_b = rng.split(2);
  return fd_regularizer_stats(params, batch, p, lambda, metric, samples, rng_a, rng_b)
      .mean;
}

std::pair<double, DropoutMask> add_regularizer(const RnnParams& params,
                                               const SequenceBatch& batch,
                                               BaseMaskPolicy base_policy, double p,
                                               const AdvConfig& cfg,
                                               const LambdaSchedule& lambda,
                                               Metric metric, Rng& rng) {
  const DropoutMask base = make_base_mask(base_policy, p, params.hidden, rng);
  const DropoutMask adv = adversarial_mask(params, batch, base, cfg, lambda, metric, rng);
  const double value = sequence_distance(run_predictions(params, batch, base),
                                         run_predictions(params, batch, adv), lambda,
                                         metric);
  return {value, adv};
}

double Remark1Report::combined_se() const {
  return std::sqrt(se_lhs * se_lhs + se_rhs * se_rhs);
}

// Deterministic per-mask adversarial map: single influence-map pass plus one
// flip, seeded from the mask fingerprint.
static DropoutMask remark1_adv_map(const RnnParams& params, const SequenceBatch& batch,
                                   const DropoutMask& eps, int budget,
                                   const LambdaSchedule& lambda) {
  Rng local(mask_fingerprint(eps));
  const DropoutMask start = init_search_mask(eps, InitPolicy::single_random_flip, local);
  const InfluenceMap im =
      influence_map(params, batch, eps, start, lambda, Metric::squared_l2);
  return flip(start, im, eps, budget);
}

Remark1Report remark1_check(const RnnParams& params, const SequenceBatch& batch,
                            double p, int n_samples, int budget, Rng& rng,
                            AdvMapKind adv_map) {
  if (n_samples < 30) fail("remark1_check: needs at least 30 samples");
  const int t_final = batch.steps() - 1;
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(batch.steps());
  const int rows = batch.batch();

  const int n = n_samples;
  std::vector<std::vector<double>> xs, ys;  // n x coords, final-step predictions
  std::vector<double> d(static_cast<size_t>(n));
  xs.reserve(static_cast<size_t>(n));
  ys.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const DropoutMask eps = sample_mask(p, params.hidden, rng);
    const DropoutMask adv = adv_map == AdvMapKind::greedy
                                ? remark1_adv_map(params, batch, eps, budget, lambda)
                                : eps;
    const Tensor px = run_predictions(params, batch, eps)[static_cast<size_t>(t_final)];
    const Tensor py = run_predictions(params, batch, adv)[static_cast<size_t>(t_final)];
    d[static_cast<size_t>(i)] = distance_value(px, py, Metric::squared_l2);
    xs.push_back(px.values);
    ys.push_back(py.values);
  }

  const size_t coords = xs[0].size();
  std::vector<double> sx(coords, 0.0), sy(coords, 0.0), sxx(coords, 0.0),
      syy(coords, 0.0), sxy(coords, 0.0);
  for (int i = 0; i < n; ++i)
    for (size_t c = 0; c < coords; ++c) {
      const double x = xs[static_cast<size_t>(i)][c], y = ys[static_cast<size_t>(i)][c];
      sx[c] += x;
      sy[c] += y;
      sxx[c] += x * x;
      syy[c] += y * y;
      sxy[c] += x * y;
    }

  // Population (1/N) moments; with one shared sample the decomposition is
  // then exact at sample level, not just in expectation.
  const double nn = static_cast<double>(n);
  auto terms_without = [&](int skip, double* vb, double* va, double* cv, double* gap) {
    const double m = skip < 0 ? nn : nn - 1.0;
    *vb = *va = *cv = *gap = 0.0;
    for (size_t c = 0; c < coords; ++c) {
      double ax = sx[c], ay = sy[c], axx = sxx[c], ayy = syy[c], axy = sxy[c];
      if (skip >= 0) {
        const double x = xs[static_cast<size_t>(skip)][c];
        const double y = ys[static_cast<size_t>(skip)][c];
        ax -= x;
        ay -= y;
        axx -= x * x;
        ayy -= y * y;
        axy -= x * y;
      }
      const double mx = ax / m, my = ay / m;
      *vb += axx / m - mx * mx;
      *va += ayy / m - my * my;
      *cv += axy / m - mx * my;
      *gap += (mx - my) * (mx - my);
    }
    *vb /= rows;
    *va /= rows;
    *cv /= rows;
    *gap /= rows;
  };

  Remark1Report r;
  terms_without(-1, &r.var_base, &r.var_adv, &r.cov, &r.mean_gap_sq);
  for (int i = 0; i < n; ++i) r.lhs += d[static_cast<size_t>(i)];
  r.lhs /= nn;

  {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dd = d[static_cast<size_t>(i)] - r.lhs;
      ss += dd * dd;
    }
    r.se_lhs = std::sqrt(ss / (nn - 1.0)) / std::sqrt(nn);
  }

  // Jackknife standard errors for the moment-based terms.
  std::vector<double> jb(static_cast<size_t>(n)), ja(static_cast<size_t>(n)),
      jc(static_cast<size_t>(n)), jg(static_cast<size_t>(n)), jr(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double vb, va, cv, gap;
    terms_without(i, &vb, &va, &cv, &gap);
    jb[static_cast<size_t>(i)] = vb;
    ja[static_cast<size_t>(i)] = va;
    jc[static_cast<size_t>(i)] = cv;
    jg[static_cast<size_t>(i)] = gap;
    jr[static_cast<size_t>(i)] = vb + va - 2.0 * cv + gap;
  }
  auto jackknife_se = [&](const std::vector<double>& j) {
    double mean = 0.0;
    for (double v : j) mean += v;
    mean /= nn;
    double ss = 0.0;
    for (double v : j) ss += (v - mean) * (v - mean);
    return std::sqrt((nn - 1.0) / nn * ss);
  };
  r.se_var_base = jackknife_se(jb);
  r.se_var_adv = jackknife_se(ja);
  r.se_cov = jackknife_se(jc);
  r.se_mean_gap_sq = jackknife_se(jg);
  r.se_rhs = jackknife_se(jr);
  return r;
}

static DropoutMask sample_constrained_mask(double p, int dim, int budget, Rng& rng) {
  const DropoutMask anchor = expected_mask(dim);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    DropoutMask eps = sample_mask(p, dim, rng);
    if (hamming(eps, anchor) <= budget) return eps;
  }
  fail("proposition1_check: rejection sampling of the constrained domain stalled");
}

Prop1Result proposition1_check(const RnnParams& params, const SequenceBatch& batch,
                               double p, double delta, int samples, Rng& rng) {
  if (params.hidden > 12)
    fail("proposition1_check: hidden dimension " + std::to_string(params.hidden) +
         " exceeds the enumeration bound 12");
  if (samples < 2) fail("proposition1_check: needs at least 2 samples");
  const int dim = params.hidden;
  const int budget = std::max(1, static_cast<int>(std::floor(delta * dim)));
  const LambdaSchedule lambda = LambdaSchedule::final_step_only(batch.steps());
  const Metric metric = Metric::squared_l2;

  const DropoutMask base = expected_mask(dim);
  const std::vector<Tensor> refs = run_predictions(params, batch, base);

  std::vector<double> el_draws, fd_draws;
  el_draws.reserve(static_cast<size_t>(samples));
  fd_draws.reserve(static_cast<size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const DropoutMask e = sample_constrained_mask(p, dim, budget, rng);
    el_draws.push_back(
        sequence_distance(refs, run_predictions(params, batch, e), lambda, metric));
    const DropoutMask e1 = sample_constrained_mask(p, dim, budget, rng);
    const DropoutMask e2 = sample_constrained_mask(p, dim, budget, rng);
    fd_draws.push_back(sequence_distance(run_predictions(params, batch, e1),
                                         run_predictions(params, batch, e2), lambda,
                                         metric));
  }
  const McEstimate el = summarize(el_draws);
  const McEstimate fd = summarize(fd_draws);

  // Exact maximum over the same domain the samples come from: bit patterns
  // within the budget, evaluated with inverted scaling at probability p.
  DropoutMask proto = base;
  proto.p = p;
  proto.scaling = MaskScaling::inverted;
  const auto exact =
      brute_force_adversarial(params, batch, base, budget, lambda, metric, &proto);

  Prop1Result r;
  r.el = el.mean;
  r.se_el = el.std_error;
  r.fd_quarter = 0.25 * fd.mean;
  r.se_fd_quarter = 0.25 * fd.std_error;
  r.add_exact = exact.second;
  return r;
}

}  // namespace advdrop

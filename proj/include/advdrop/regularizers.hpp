#pragma once

#include <utility>

#include "advdrop/masks.hpp"

namespace advdrop {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte Carlo estimate of the expected distance between the expected-mask
// network and randomly masked networks (S samples of eps ~ Bernoulli(1-p)).
McEstimate el_regularizer_stats(const RnnParams& params, const SequenceBatch& batch,
                                double p, const LambdaSchedule& lambda, Metric metric,
                                int samples, Rng& rng);
double el_regularizer(const RnnParams& params, const SequenceBatch& batch, double p,
                      const LambdaSchedule& lambda, Metric metric, int samples,
                      Rng& rng);

// Expected distance between two independently masked networks. The paired
// variant takes separate streams for the two masks (the estimate is
// symmetric under swapping them).
McEstimate fd_regularizer_stats(const RnnParams& params, const SequenceBatch& batch,
                                double p, const LambdaSchedule& lambda, Metric metric,
                                int samples, Rng& rng_a, Rng& rng_b);
double fd_regularizer(const RnnParams& params, const SequenceBatch& batch, double p,
                      const LambdaSchedule& lambda, Metric metric, int samples,
                      Rng& rng);

// Runs the greedy search from the base mask and returns the achieved
// weighted distance together with the mask that achieved it.
std::pair<double, DropoutMask> add_regularizer(const RnnParams& params,
                                               const SequenceBatch& batch,
                                               BaseMaskPolicy base_policy, double p,
                                               const AdvConfig& cfg,
                                               const LambdaSchedule& lambda,
                                               Metric metric, Rng& rng);

// Monte Carlo check of the variance/covariance/mean-gap decomposition of
// the expected adversarial distance at the final step (squared-L2 metric).
// All five quantities are estimated from one sample of N masks; the
// decomposition is algebraically exact, so lhs and rhs agree up to floating
// point when the same sample feeds both sides.
struct Remark1Report {
  double lhs = 0.0;
  double var_base = 0.0;
  double var_adv = 0.0;
  double cov = 0.0;
  double mean_gap_sq = 0.0;
  double se_lhs = 0.0;
  double se_var_base = 0.0;
  double se_var_adv = 0.0;
  double se_cov = 0.0;
  double se_mean_gap_sq = 0.0;
  double se_rhs = 0.0;

  double rhs() const { return var_base + var_adv - 2.0 * cov + mean_gap_sq; }
  double combined_se() const;
};

// The adversarial map is the K=1 greedy search seeded from a fingerprint of
// the drawn mask, making it a deterministic function of the mask.
enum class AdvMapKind { greedy, identity };
Remark1Report remark1_check(const RnnParams& params, const SequenceBatch& batch,
                            double p, int n_samples, int budget, Rng& rng,
                            AdvMapKind adv_map = AdvMapKind::greedy);

// Estimates 1/4 R_FD and R_EL over the budget-constrained mask domain and
// computes the exact adversarial maximum by enumeration (squared-L2,
// final-step schedule). Callers assert fd_quarter <= el + 3 sigma and
// el <= add_exact.
struct Prop1Result {
  double fd_quarter = 0.0;
  double el = 0.0;
  double add_exact = 0.0;
  double se_fd_quarter = 0.0;
  double se_el = 0.0;
};
Prop1Result proposition1_check(const RnnParams& params, const SequenceBatch& batch,
                               double p, double delta, int samples, Rng& rng);

}  // namespace advdrop

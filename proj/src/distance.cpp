#include "advdrop/distance.hpp"

#include <cmath>

namespace advdrop {

LambdaSchedule LambdaSchedule::final_step_only(int steps) {
  LambdaSchedule s;
  s.weights.assign(static_cast<size_t>(steps), 0.0);
  s.weights.back() = 1.0;
  return s;
}

LambdaSchedule LambdaSchedule::uniform(int steps) {
  LambdaSchedule s;
  s.weights.assign(static_cast<size_t>(steps), 1.0 / steps);
  return s;
}

void LambdaSchedule::validate() const {
  bool any = false;
  for (double w : weights) {
    if (w < 0.0) fail("LambdaSchedule: negative weight");
    if (w > 0.0) any = true;
  }
  if (!any) fail("LambdaSchedule: needs at least one positive weight");
}

static void check_pair(const Tensor& p, const Tensor& q) {
  if (!p.same_shape(q))
    fail("distance: shape mismatch " + p.shape_str() + " vs " + q.shape_str());
  if (p.ndim() > 2) fail("distance: expects rank 1 or 2, got " + p.shape_str());
}

static double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double distance_value(const Tensor& p, const Tensor& q, Metric metric) {
  check_pair(p, q);
  const int rows = p.ndim() == 2 ? p.shape[0] : 1;
  const size_t n = p.values.size();
  double total = 0.0;
  if (metric == Metric::squared_l2) {
    for (size_t i = 0; i < n; ++i) {
      const double d = p.values[i] - q.values[i];
      total += d * d;
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      const double a = p.values[i], b = q.values[i];
      if (a < 0.0 || b < 0.0) fail("distance: negative entry under Jensen-Shannon");
      const double m = 0.5 * (a + b);
      total += 0.5 * (xlogx(a) + xlogx(b)) - xlogx(m);
    }
  }
  return total / rows;
}

double sequence_distance(const std::vector<Tensor>& preds_a,
                         const std::vector<Tensor>& preds_b,
                         const LambdaSchedule& lambda, Metric metric) {
  lambda.validate();
  if (preds_a.size() != preds_b.size() ||
      preds_a.size() != lambda.weights.size())
    fail("sequence_distance: schedule length " + std::to_string(lambda.weights.size()) +
         " does not match trace length " + std::to_string(preds_a.size()));
  double total = 0.0;
  for (size_t t = 0; t < preds_a.size(); ++t) {
    const double w = lambda.weights[t];
    if (w == 0.0) continue;
    total += w * distance_value(preds_a[t], preds_b[t], metric);
  }
  return total;
}

static int rows_of(const Tensor& t) { return t.ndim() == 2 ? t.shape[0] : 1; }

int append_distance(TapeGraph& g, const Tensor& reference, int pred, Metric metric) {
  // The caller may pass a reference into g's own node storage, which leaf()
  // would invalidate; work from a copy.
  const Tensor ref_copy = reference;
  check_pair(ref_copy, g.value(pred));
  const int rows = rows_of(ref_copy);
  const int ref = g.leaf(ref_copy);
  if (metric == Metric::squared_l2)
    return g.scale(g.sum(g.square(g.sub(pred, ref))), 1.0 / rows);

  // JS = 0.5*KL(ref || m) + 0.5*KL(pred || m), m = (ref + pred)/2
  double ref_entropy_term = 0.0;  // sum ref * log ref
  for (double v : ref_copy.values) ref_entropy_term += xlogx(v);
  const int m = g.scale(g.add(ref, pred), 0.5);
  const int log_m = g.log(m);
  const int kl_ref = g.sub(g.leaf(Tensor::scalar(ref_entropy_term)),
                           g.sum(g.mul(ref, log_m)));
  const int kl_pred = g.sum(g.mul(pred, g.sub(g.log(pred), log_m)));
  return g.scale(g.add(kl_ref, kl_pred), 0.5 / rows);
}

int append_distance_symmetric(TapeGraph& g, int pred_a, int pred_b, Metric metric) {
  check_pair(g.value(pred_a), g.value(pred_b));
  const int rows = rows_of(g.value(pred_a));
  if (metric == Metric::squared_l2)
    return g.scale(g.sum(g.square(g.sub(pred_a, pred_b))), 1.0 / rows);
  const int m = g.scale(g.add(pred_a, pred_b), 0.5);
  const int log_m = g.log(m);
  const int kl_a = g.sum(g.mul(pred_a, g.sub(g.log(pred_a), log_m)));
  const int kl_b = g.sum(g.mul(pred_b, g.sub(g.log(pred_b), log_m)));
  return g.scale(g.add(kl_a, kl_b), 0.5 / rows);
}

template <typename TermFn>
static int weighted_sum(TapeGraph& g, const LambdaSchedule& lambda, int steps,
                        TermFn&& term) {
  lambda.validate();
  if (lambda.steps() != steps)
    fail("sequence_distance: schedule length " + std::to_string(lambda.steps()) +
         " does not match trace length " + std::to_string(steps));
  int acc = -1;
  for (int t = 0; t < steps; ++t) {
    const double w = lambda.weights[static_cast<size_t>(t)];
    if (w == 0.0) continue;
    const int weighted = g.scale(term(t), w);
    acc = acc < 0 ? weighted : g.add(acc, weighted);
  }
  return acc;
}

int append_sequence_distance(TapeGraph& g, const std::vector<Tensor>& references,
                             const std::vector<int>& pred_ids,
                             const LambdaSchedule& lambda, Metric metric) {
  if (references.size() != pred_ids.size())
    fail("sequence_distance: reference/prediction length mismatch");
  return weighted_sum(g, lambda, static_cast<int>(pred_ids.size()), [&](int t) {
    return append_distance(g, references[static_cast<size_t>(t)],
                           pred_ids[static_cast<size_t>(t)], metric);
  });
}

int append_sequence_distance_symmetric(TapeGraph& g, const std::vector<int>& pred_ids_a,
                                       const std::vector<int>& pred_ids_b,
                                       const LambdaSchedule& lambda, Metric metric) {
  if (pred_ids_a.size() != pred_ids_b.size())
    fail("sequence_distance: trace length mismatch");
  return weighted_sum(g, lambda, static_cast<int>(pred_ids_a.size()), [&](int t) {
    return append_distance_symmetric(g, pred_ids_a[static_cast<size_t>(t)],
                                     pred_ids_b[static_cast<size_t>(t)], metric);
  });
}

}  // namespace advdrop

#pragma once

#include <vector>

#include "advdrop/tape.hpp"
#include "advdrop/tensor.hpp"

namespace advdrop {

enum class Metric { squared_l2, jensen_shannon };

// Per-step weights for the sequence distance. All weights are nonnegative
// and at least one is positive.
struct LambdaSchedule {
  std::vector<double> weights;

  static LambdaSchedule final_step_only(int steps);
  static LambdaSchedule uniform(int steps);
  void validate() const;
  int steps() const { return static_cast<int>(weights.size()); }
};

// Distance between two prediction tensors. Rank-2 inputs are treated as a
// batch of rows and the per-row distances are averaged; rank-1 inputs are a
// single row. Jensen-Shannon uses natural log with 0*log(0/x) := 0 and
// requires nonnegative entries.
double distance_value(const Tensor& p, const Tensor& q, Metric metric);

// Sum over t of lambda_t * distance(a_t, b_t).
double sequence_distance(const std::vector<Tensor>& preds_a,
                         const std::vector<Tensor>& preds_b,
                         const LambdaSchedule& lambda, Metric metric);

// Graph-building counterparts. The reference side enters as a constant
// leaf, so no gradient flows through it; `pred` stays differentiable.
// JS assumes strictly positive entries (softmax outputs).
int append_distance(TapeGraph& g, const Tensor& reference, int pred, Metric metric);
int append_sequence_distance(TapeGraph& g, const std::vector<Tensor>& references,
                             const std::vector<int>& pred_ids,
                             const LambdaSchedule& lambda, Metric metric);
// Symmetric variant: both sides are graph nodes and both receive gradient.
int append_distance_symmetric(TapeGraph& g, int pred_a, int pred_b, Metric metric);
int append_sequence_distance_symmetric(TapeGraph& g, const std::vector<int>& pred_ids_a,
                                       const std::vector<int>& pred_ids_b,
                                       const LambdaSchedule& lambda, Metric metric);

}  // namespace advdrop

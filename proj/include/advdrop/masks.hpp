#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "advdrop/distance.hpp"
#include "advdrop/rng.hpp"
#include "advdrop/rnn.hpp"

namespace advdrop {

enum class MaskScaling { inverted, none };

// Binary keep/drop vector shared across all time steps of one pass.
// With inverted scaling the kept activations are divided by (1 - p); with
// scaling `none`, p is 0 and the bits act as plain multipliers.
struct DropoutMask {
  std::vector<uint8_t> bits;  // each 0 or 1
  double p = 0.0;
  MaskScaling scaling = MaskScaling::none;

  int size() const { return static_cast<int>(bits.size()); }
  double effective_p() const { return scaling == MaskScaling::inverted ? p : 0.0; }
  Tensor as_tensor() const;
  // bits / (1 - effective p); two masks with equal multipliers define the
  // same subnetwork.
  std::vector<double> multipliers() const;
  void validate() const;
};

// The base mask of the adversarial regularizer. `expected` realizes
// E[eps] as the all-ones unscaled mask (the identical network); `sampled`
// draws eps ~ Bernoulli(1-p) with inverted scaling.
enum class BaseMaskPolicy { expected, sampled };

DropoutMask expected_mask(int dim);
DropoutMask sample_mask(double p, int dim, Rng& rng);
DropoutMask make_base_mask(BaseMaskPolicy policy, double p, int dim, Rng& rng);

enum class InitPolicy { single_random_flip, copy };
DropoutMask init_search_mask(const DropoutMask& base, InitPolicy policy, Rng& rng);

int hamming(const DropoutMask& a, const DropoutMask& b);
// Stable 64-bit digest of (bits, p, scaling); used to seed deterministic
// per-mask searches.
uint64_t mask_fingerprint(const DropoutMask& mask);

// Gradient of the lambda-weighted distance sum with respect to a continuous
// relaxation of the mask, evaluated at `at`.
struct InfluenceMap {
  std::vector<double> scores;
  DropoutMask at;
};

struct AdvConfig {
  double delta = 0.03;  // in (0, 1)
  int iterations = 2;   // K >= 1
  int budget(int dim) const;
  void validate() const;
};

// One forward pass evaluated at a fixed mask; predictions copied out as
// plain values.
std::vector<Tensor> run_predictions(const RnnParams& params, const SequenceBatch& batch,
                                    const DropoutMask& mask);

// Scores_i = d[sum_t lambda_t D_t] / d eps_i at eps = eval_mask, with the
// base-mask predictions held constant. If the two masks define the same
// subnetwork the gradient is identically zero: a warning is emitted and the
// zero map returned.
InfluenceMap influence_map(const RnnParams& params, const SequenceBatch& batch,
                           const DropoutMask& base, const DropoutMask& eval_mask,
                           const LambdaSchedule& lambda, Metric metric);

// Greedy bit-toggling in descending order of flip influence
// s = (1 - 2*eps) * im, stopping at the first nonpositive score or at the
// first toggle that would push the Hamming distance to `base` past the
// budget. Ties break toward the lower index.
DropoutMask flip(const DropoutMask& eps, const InfluenceMap& im, const DropoutMask& base,
                 int budget);

// K-stage search: start from a single random flip of `base`, then
// alternate influence-map evaluation and flips under the growing stage
// budget max(1, floor((k+1)/K * delta * dim)).
DropoutMask adversarial_mask(const RnnParams& params, const SequenceBatch& batch,
                             const DropoutMask& base, const AdvConfig& cfg,
                             const LambdaSchedule& lambda, Metric metric, Rng& rng);

// Exact maximizer of the weighted distance over every mask within `budget`
// of `base` (bit flips of base.bits). Candidates inherit (p, scaling) from
// `candidate_proto` when given, else from `base`. Enumeration bound: dim <= 16.
std::pair<DropoutMask, double> brute_force_adversarial(
    const RnnParams& params, const SequenceBatch& batch, const DropoutMask& base,
    int budget, const LambdaSchedule& lambda, Metric metric,
    const DropoutMask* candidate_proto = nullptr);

}  // namespace advdrop

#include "advdrop/masks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>

namespace advdrop {

Tensor DropoutMask::as_tensor() const {
  Tensor t({size()});
  for (int i = 0; i < size(); ++i) t.values[static_cast<size_t>(i)] = bits[static_cast<size_t>(i)];
  return t;
}

std::vector<double> DropoutMask::multipliers() const {
  const double keep = 1.0 - effective_p();
  std::vector<double> m(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) m[i] = bits[i] / keep;
  return m;
}

void DropoutMask::validate() const {
  for (uint8_t b : bits)
    if (b > 1) fail("DropoutMask: element outside {0, 1}");
  if (scaling == MaskScaling::none && p != 0.0)
    fail("DropoutMask: scaling-mode none requires p = 0");
  if (p < 0.0 || 1.0 - p <= std::numeric_limits<double>::epsilon())
    fail("DropoutMask: p must lie in [0, 1) with nonvanishing keep probability");
}

DropoutMask expected_mask(int dim) {
  DropoutMask m;
  m.bits.assign(static_cast<size_t>(dim), 1);
  m.p = 0.0;
  m.scaling = MaskScaling::none;
  return m;
}

DropoutMask sample_mask(double p, int dim, Rng& rng) {
  if (p < 0.0 || p >= 1.0 || 1.0 - p <= std::numeric_limits<double>::epsilon())
    fail("sample_mask: p must lie in [0, 1) with nonvanishing keep probability, got " +
         std::to_string(p));
  DropoutMask m;
  m.p = p;
  m.scaling = MaskScaling::inverted;
  m.bits.resize(static_cast<size_t>(dim));
  for (uint8_t& b : m.bits) b = rng.bernoulli(1.0 - p) ? 1 : 0;
  return m;
}

DropoutMask make_base_mask(BaseMaskPolicy policy, double p, int dim, Rng& rng) {
  return policy == BaseMaskPolicy::expected ? expected_mask(dim)
                                            : sample_mask(p, dim, rng);
}

DropoutMask init_search_mask(const DropoutMask& base, InitPolicy policy, Rng& rng) {
  base.validate();
  DropoutMask m = base;
  if (policy == InitPolicy::single_random_flip) {
    const int i = rng.uniform_int(m.size());
    m.bits[static_cast<size_t>(i)] ^= 1;
  }
  return m;
}

int hamming(const DropoutMask& a, const DropoutMask& b) {
  if (a.size() != b.size()) fail("hamming: mask sizes differ");
  int d = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i];
  return d;
}

uint64_t mask_fingerprint(const DropoutMask& mask) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (uint8_t b : mask.bits) mix(b);
  uint64_t pbits;
  static_assert(sizeof(pbits) == sizeof(mask.p));
  std::memcpy(&pbits, &mask.p, sizeof(pbits));
  mix(pbits);
  mix(mask.scaling == MaskScaling::inverted ? 1 : 2);
  return h;
}

int AdvConfig::budget(int dim) const {
  return std::max(1, static_cast<int>(std::floor(delta * dim)));
}

void AdvConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) fail("AdvConfig: delta must lie in (0, 1)");
  if (iterations < 1) fail("AdvConfig: iteration count K must be >= 1");
}

std::vector<Tensor> run_predictions(const RnnParams& params, const SequenceBatch& batch,
                                    const DropoutMask& mask) {
  TapeGraph g;
  const ParamNodeIds pn = insert_params(g, params);
  const int mask_id = g.leaf(mask.as_tensor());
  const ForwardTrace trace =
      forward_sequence(g, pn, params, batch, mask_id, mask.effective_p());
  std::vector<Tensor> preds;
  preds.reserve(trace.pred_ids.size());
  for (int id : trace.pred_ids) preds.push_back(g.value(id));
  return preds;
}

static bool same_subnetwork(const DropoutMask& a, const DropoutMask& b) {
  if (a.size() != b.size()) return false;
  const std::vector<double> ma = a.multipliers(), mb = b.multipliers();
  for (size_t i = 0; i < ma.size(); ++i)
    if (ma[i] != mb[i]) return false;
  return true;
}

InfluenceMap influence_map(const RnnParams& params, const SequenceBatch& batch,
                           const DropoutMask& base, const DropoutMask& eval_mask,
                           const LambdaSchedule& lambda, Metric metric) {
  base.validate();
  eval_mask.validate();
  InfluenceMap im;
  im.at = eval_mask;
  if (same_subnetwork(base, eval_mask)) {
    std::cerr << "[advdrop] influence_map: evaluation mask equals the base mask; "
                 "gradient is identically zero\n";
    im.scores.assign(eval_mask.bits.size(), 0.0);
    return im;
  }

  const std::vector<Tensor> refs = run_predictions(params, batch, base);

  TapeGraph g;
  const ParamNodeIds pn = insert_params(g, params);
  const int mask_id = g.leaf(eval_mask.as_tensor());
  const ForwardTrace trace =
      forward_sequence(g, pn, params, batch, mask_id, eval_mask.effective_p());
  const int root = append_sequence_distance(g, refs, trace.pred_ids, lambda, metric);
  g.backward(root);
  im.scores = g.grad(mask_id).values;
  return im;
}

DropoutMask flip(const DropoutMask& eps, const InfluenceMap& im, const DropoutMask& base,
                 int budget) {
  if (budget < 0) fail("flip: negative budget");
  if (static_cast<int>(im.scores.size()) != eps.size())
    fail("flip: influence map size does not match mask");

  const int dim = eps.size();
  std::vector<double> s(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i)
    s[static_cast<size_t>(i)] =
        (1.0 - 2.0 * eps.bits[static_cast<size_t>(i)]) * im.scores[static_cast<size_t>(i)];

  std::vector<int> order(static_cast<size_t>(dim));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return s[static_cast<size_t>(a)] > s[static_cast<size_t>(b)]; });

  DropoutMask out = eps;
  int dist = hamming(out, base);
  for (int i : order) {
    if (s[static_cast<size_t>(i)] <= 0.0) break;
    const int next =
        dist + (out.bits[static_cast<size_t>(i)] == base.bits[static_cast<size_t>(i)] ? 1 : -1);
    if (next > budget) break;
    out.bits[static_cast<size_t>(i)] ^= 1;
    dist = next;
  }
  return out;
}

DropoutMask adversarial_mask(const RnnParams& params, const SequenceBatch& batch,
                             const DropoutMask& base, const AdvConfig& cfg,
                             const LambdaSchedule& lambda, Metric metric, Rng& rng) {
  cfg.validate();
  const int dim = base.size();
  DropoutMask current = init_search_mask(base, InitPolicy::single_random_flip, rng);
  for (int k = 0; k < cfg.iterations; ++k) {
    const InfluenceMap im = influence_map(params, batch, base, current, lambda, metric);
    const double stage_delta = cfg.delta * (k + 1) / cfg.iterations;
    const int stage_budget =
        std::max(1, static_cast<int>(std::floor(stage_delta * dim)));
    current = flip(current, im, base, stage_budget);
  }
  return current;
}

std::pair<DropoutMask, double> brute_force_adversarial(
    const RnnParams& params, const SequenceBatch& batch, const DropoutMask& base,
    int budget, const LambdaSchedule& lambda, Metric metric,
    const DropoutMask* candidate_proto) {
  const int dim = base.size();
  if (dim > 16) fail("brute_force_adversarial: dimension " + std::to_string(dim) +
                     " exceeds enumeration bound 16");
  if (budget < 0 || budget > dim) fail("brute_force_adversarial: budget out of range");

  const std::vector<Tensor> refs = run_predictions(params, batch, base);
  DropoutMask proto = candidate_proto ? *candidate_proto : base;
  proto.validate();
  if (proto.size() != dim) fail("brute_force_adversarial: prototype size mismatch");

  DropoutMask best;
  double best_dist = -1.0;
  auto consider = [&](const DropoutMask& cand) {
    const std::vector<Tensor> preds = run_predictions(params, batch, cand);
    const double d = sequence_distance(refs, preds, lambda, metric);
    if (d > best_dist) {
      best_dist = d;
      best = cand;
    }
  };

  // Subsets of flipped positions by increasing size, lexicographic within
  // a size; first maximizer found wins ties.
  std::vector<int> picks;
  auto flip_candidate = [&]() {
    DropoutMask cand = proto;
    cand.bits = base.bits;
    for (int i : picks) cand.bits[static_cast<size_t>(i)] ^= 1;
    return cand;
  };
  std::function<void(int, int)> enumerate = [&](int start, int remaining) {
    if (remaining == 0) {
      consider(flip_candidate());
      return;
    }
    for (int i = start; i <= dim - remaining; ++i) {
      picks.push_back(i);
      enumerate(i + 1, remaining - 1);
      picks.pop_back();
    }
  };
  for (int size = 0; size <= budget; ++size) enumerate(0, size);
  return {best, best_dist};
}

}  // namespace advdrop

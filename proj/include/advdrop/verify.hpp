#pragma once

#include <string>
#include <vector>

#include "advdrop/training.hpp"

namespace advdrop {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Property suites over freshly sampled tiny models. Tolerances are pinned
// in the implementations; each line carries the measured value.
std::vector<CheckLine> verify_grad(uint64_t seed);           // backward vs central differences
std::vector<CheckLine> verify_influence_map(uint64_t seed);  // IM vs coordinate differences
std::vector<CheckLine> verify_remark1(uint64_t seed);        // variance decomposition identity
std::vector<CheckLine> verify_prop1(uint64_t seed);          // 1/4 FD <= EL <= exact AdD
std::vector<CheckLine> verify_flip_oracle(uint64_t seed);    // flip/search properties

// Prints one PASS/FAIL line per check; returns the failure count.
int print_check_lines(const std::vector<CheckLine>& lines);

// Shared generator for random desk-scale instances.
struct RandomInstance {
  RnnParams params;
  SequenceBatch batch;
};
RandomInstance random_instance(Rng& rng, CellKind kind, int max_hidden, int max_steps,
                               int max_batch);

}  // namespace advdrop

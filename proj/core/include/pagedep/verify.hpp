#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pagedep/document.hpp"
#include "pagedep/tensor.hpp"

namespace pagedep {

/// Calls `fn` for every valid labeled projective tree over n_pages pages:
/// arcs from the root carry label root, all other arcs range over the four
/// content labels.
void enumerate_projective_trees(int n_pages,
                                const std::function<void(const PageDependencyTree&)>& fn);

struct OracleCheckResult {
  long trees = 0;
  long failures = 0;
  bool ok() const { return failures == 0 && trees > 0; }
};

/// Exhaustive oracle round trip: for every labeled projective tree with
/// 1..max_pages pages, replaying the static oracle's actions must rebuild
/// exactly that tree.
OracleCheckResult oracle_roundtrip_check(int max_pages);

/// Central finite differences (step h) against the taped gradients of a
/// forward function. Returns the worst relative error over every coordinate
/// of `params` (error floor 1e-8 guards near-zero entries).
double max_relative_gradient_error(const std::vector<ad::TensorPtr>& params,
                                   const std::function<ad::TensorPtr(ad::Tape&)>& forward,
                                   double step = 1e-5);

struct GradCheckReport {
  std::vector<std::pair<std::string, double>> per_op;  // op kind -> max rel error
  double end_to_end = 0.0;  // joint loss on a 3-page fixture document
  double worst = 0.0;
};

/// Gradient fidelity of every differentiable op kind in isolation plus the
/// end-to-end joint loss on a small fixture document.
GradCheckReport run_gradcheck(uint64_t seed);

}  // namespace pagedep

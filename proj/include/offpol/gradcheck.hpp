#pragma once

#include <string>
#include <vector>

#include "offpol/nets.hpp"

namespace offpol::ad {

// Central-difference check of every parameter gradient against the analytic
// backward pass. The probe loss is a fixed pseudo-random weighting of the
// network output, which keeps the check well conditioned for any head.
struct FdEntry {
  std::string param;
  double max_rel_dev = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_dev = 0.0;

  bool pass(double tolerance) const { return max_rel_dev < tolerance; }
};

FdReport finite_diff_check(Network& net, const Tensor& input, Mode mode, double h = 1e-4);

}  // namespace offpol::ad

#pragma once

#include <cstdint>
#include <vector>

#include "offpol/autodiff.hpp"

namespace offpol::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. step() consumes the current grads and clears
// them. Throws on non-finite gradients, naming the offending parameter.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamConfig cfg);

  void step() { apply(-1.0); }           // descend
  void step_maximize() { apply(+1.0); }  // ascend

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  void apply(double direction);

  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t step_count_ = 0;
};

}  // namespace offpol::ad

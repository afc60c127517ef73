#pragma once

#include <span>
#include <string>
#include <vector>

namespace offpol {

enum class BoundKind { Naive, LambdaWeighted, Balanced };

std::string to_string(BoundKind kind);

// Inputs for the deviation terms. Naive and lambda-weighted use the
// per-logger vectors; balanced uses the *_avg scalars.
struct BoundInputs {
  std::vector<double> n_j;
  std::vector<double> lambda;  // required for LambdaWeighted
  std::vector<double> d2;      // d2(h || h_j)
  std::vector<double> m;       // sup-ratio bounds M_j
  double d2_avg = 0.0;
  double m_avg = 0.0;
  // True when the M/d2 inputs are empirical estimates from data rather than
  // exact sup ratios (an under-estimate, flagged in reports).
  bool empirical = false;
};

struct BoundReport {
  BoundKind kind = BoundKind::Naive;
  double empirical_risk = 0.0;
  double eta = 0.0;
  double loss_bound = 0.0;  // L
  BoundInputs inputs;
  double linear_term = 0.0;  // 2 L M log(1/eta) / 3 (scaled per kind)
  double sqrt_term = 0.0;    // L sqrt(2 ... log(1/eta))
  double bound = 0.0;

  std::string to_json() const;
};

// Upper confidence bound on R(h) holding with probability >= 1 - eta:
//   lambda-weighted: R + 2 L M_lambda log(1/eta)/3
//                      + L sqrt(2 sum_j n_j lambda_j^2 d2_j log(1/eta))
//   naive: the same at lambda_j = 1/n (so M_lambda = max_j M_j / n)
//   balanced: R + 2 L M_avg log(1/eta)/(3n) + L sqrt(2 d2_avg log(1/eta)/n)
BoundReport generalization_bound(BoundKind kind, double empirical_risk, double loss_bound,
                                 double eta, const BoundInputs& inputs);

}  // namespace offpol

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "offpol/bounds.hpp"
#include "offpol/divergence.hpp"
#include "offpol/estimators.hpp"
#include "offpol/policies.hpp"

namespace offpol {

enum class Method {
  Logger1,
  Logger2,
  Wcrm,
  Naive,
  NaiveReg,
  Weighted,
  WeightedReg,
  Balanced,
  BalancedReg,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_constrained(Method m);
bool is_weighted_kind(Method m);   // weighted, weighted-reg, wcrm
bool is_balanced_kind(Method m);   // balanced, balanced-reg
bool is_reference(Method m);       // logger1, logger2

struct TrainConfig {
  int max_epochs = 200;
  double outer_lr = 1e-4;  // eta_1, risk-step learning rate
  int batch = 500;         // B records per logger per risk step
  ConstraintConfig constraint;
  double validation_fraction = 0.25;
  std::uint64_t seed = 0;
  int lambda_every = 1;  // epochs between lambda* recomputes
  int val_every = 10;
  int patience = 20;  // stagnant validation evaluations before early stop
  double wcrm_lambda_reg = 1.0;
  double wcrm_clip = 100.0;
  std::vector<int> gen_hidden{10};
  std::vector<int> disc_hidden{59};
  double prob_clamp = 1e-4;

  void validate() const;
};

struct TrainResult {
  std::unique_ptr<NeuralPolicy> policy;  // best-validation checkpoint
  double best_val = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<std::pair<int, double>> val_history;  // (epoch, metric)
  long constraint_iterations = 0;
  bool aborted = false;
  std::string abort_reason;
  std::optional<BoundReport> bound;
};

// Trains a policy with the given method on bandit data. Handles the direct,
// constrained, and WCRM variants; logger references are not trainable and are
// rejected here.
TrainResult train_policy(Method method, const MultiLoggerDataset& data,
                         const std::vector<LoggingPolicy>& loggers, const TrainConfig& config);

// Exact expected Hamming loss per test row under the factorized policy:
// sum_l [p_l (1 - y*_l) + (1 - p_l) y*_l], averaged over rows.
double evaluate_exp(const FactorizedPolicy& policy, const SupervisedDataset& test);

// Validation metric: the method's own estimator on held-out bandit data.
double validation_metric(Method method, const MultiLoggerDataset& validation,
                         const FactorizedPolicy& policy,
                         const std::vector<LoggingPolicy>& loggers, const TrainConfig& config);

// Full-batch WCRM objective built on the autodiff graph; matches
// wcrm_objective numerically when evaluated in Eval mode.
double wcrm_graph_objective(NeuralPolicy& policy, const MultiLoggerDataset& data,
                            std::span<const double> lambda_star, double lambda_reg, double clip_m,
                            ad::Mode mode = ad::Mode::Eval);

// Bound diagnostic from empirical ratio moments on the given split (M and d2
// are empirical estimates; the report flags them as such).
BoundReport empirical_bound_report(Method method, const MultiLoggerDataset& data,
                                   const FactorizedPolicy& policy,
                                   const std::vector<LoggingPolicy>& loggers,
                                   std::span<const double> lambda, double eta = 0.1);

}  // namespace offpol

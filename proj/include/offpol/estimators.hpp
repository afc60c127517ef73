#pragma once

#include <span>
#include <vector>

#include "offpol/policies.hpp"

namespace offpol {

// Target-policy propensities h(y_i|x_i) per logger, aligned with the record
// order of a MultiLoggerDataset. Computed once and shared by the estimators
// so that reductions between them are bitwise meaningful.
struct PolicyEval {
  std::vector<std::vector<double>> propensities;  // [logger][record]
};

PolicyEval evaluate_policy(const MultiLoggerDataset& data, const FactorizedPolicy& policy);

struct RiskValue {
  double estimate = 0.0;
  // Per-record weighted losses in accumulation order (logger-major), kept
  // for variance computations.
  std::vector<double> weighted_losses;
};

// Pooled IPS over all loggers, weights 1/n.
RiskValue naive_ips(const MultiLoggerDataset& data, const PolicyEval& eval);
RiskValue naive_ips(const MultiLoggerDataset& data, const FactorizedPolicy& policy);

// Per-logger weights lambda_j >= 0 with sum_j lambda_j n_j = 1 (checked to
// 1e-9). lambda_j = 1/n reproduces naive_ips bit for bit.
RiskValue lambda_weighted_ips(const MultiLoggerDataset& data, const PolicyEval& eval,
                              std::span<const double> lambda);
RiskValue lambda_weighted_ips(const MultiLoggerDataset& data, const FactorizedPolicy& policy,
                              std::span<const double> lambda);

// Variance-minimizing weights: lambda*_j = 1 / sum_k n_k (s_j / s_k) with
// s_j = sigma2_j + eps_v. Equal variances give exactly 1/n.
std::vector<double> compute_lambda_star(std::span<const double> variances,
                                        std::span<const double> sizes, double eps_v = 1e-8);

// Self-normalized divergence estimates sigma~2_j for every logger. The global
// mean u-bar couples the loggers, so all values are computed together.
std::vector<double> self_normalized_divergences(const MultiLoggerDataset& data,
                                                const PolicyEval& eval);

// IPS against the data-proportional logger mixture h_avg.
RiskValue balanced_ips(const MultiLoggerDataset& data, const PolicyEval& eval,
                       std::span<const LoggingPolicy> loggers);

struct WcrmValue {
  double objective = 0.0;
  double risk = 0.0;
  double variance = 0.0;  // as displayed: Var(lambda*_j n_j u_i^j)
};

// Weighted risk with ratios clipped at clip_m, plus
// lambda_reg * sqrt(Var / n) over the clipped weighted terms.
WcrmValue wcrm_objective(const MultiLoggerDataset& data, const PolicyEval& eval,
                         std::span<const double> lambda_star, double lambda_reg, double clip_m);

}  // namespace offpol

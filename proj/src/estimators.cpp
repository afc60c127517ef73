#include "offpol/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace offpol {

PolicyEval evaluate_policy(const MultiLoggerDataset& data, const FactorizedPolicy& policy) {
  // One forward over the unique contexts, then per-record products.
  const Contexts& ctx = *data.contexts;
  Tensor features(ctx.count(), ctx.dim, ctx.flat);
  Tensor probs = policy.probs_matrix(features);

  PolicyEval eval;
  eval.propensities.resize(data.num_loggers());
  for (int j = 0; j < data.num_loggers(); ++j) {
    auto& out = eval.propensities[j];
    out.reserve(data.n_j(j));
    for (const auto& rec : data.records[j]) {
      std::span<const double> row{probs.v.data() + static_cast<size_t>(rec.context) * probs.cols,
                                  static_cast<size_t>(probs.cols)};
      out.push_back(propensity_from_probs(row, rec.action));
    }
  }
  return eval;
}

static void check_nonempty(const MultiLoggerDataset& data, const char* who) {
  if (data.n() == 0) throw std::invalid_argument(std::string(who) + ": empty dataset");
}

RiskValue lambda_weighted_ips(const MultiLoggerDataset& data, const PolicyEval& eval,
                              std::span<const double> lambda) {
  check_nonempty(data, "lambda_weighted_ips");
  if (static_cast<int>(lambda.size()) != data.num_loggers())
    throw std::invalid_argument("lambda_weighted_ips: lambda size mismatch");
  double constraint = 0.0;
  for (int j = 0; j < data.num_loggers(); ++j) {
    if (lambda[j] < 0.0) throw std::invalid_argument("lambda_weighted_ips: lambda_j < 0");
    constraint += lambda[j] * static_cast<double>(data.n_j(j));
  }
  if (std::fabs(constraint - 1.0) > 1e-9)
    throw std::invalid_argument("lambda_weighted_ips: sum lambda_j n_j = " +
                                std::to_string(constraint) + ", expected 1");

  RiskValue out;
  out.weighted_losses.reserve(data.n());
  double total = 0.0;
  for (int j = 0; j < data.num_loggers(); ++j) {
    double inner = 0.0;
    for (size_t i = 0; i < data.n_j(j); ++i) {
      const auto& rec = data.records[j][i];
      const double u = eval.propensities[j][i] / rec.propensity * rec.loss;
      inner += u;
      out.weighted_losses.push_back(lambda[j] * u);
    }
    total += lambda[j] * inner;
  }
  out.estimate = total;
  return out;
}

RiskValue naive_ips(const MultiLoggerDataset& data, const PolicyEval& eval) {
  check_nonempty(data, "naive_ips");
  const std::vector<double> lambda(data.num_loggers(), 1.0 / static_cast<double>(data.n()));
  return lambda_weighted_ips(data, eval, lambda);
}

RiskValue naive_ips(const MultiLoggerDataset& data, const FactorizedPolicy& policy) {
  return naive_ips(data, evaluate_policy(data, policy));
}

RiskValue lambda_weighted_ips(const MultiLoggerDataset& data, const FactorizedPolicy& policy,
                              std::span<const double> lambda) {
  return lambda_weighted_ips(data, evaluate_policy(data, policy), lambda);
}

std::vector<double> compute_lambda_star(std::span<const double> variances,
                                        std::span<const double> sizes, double eps_v) {
  if (variances.size() != sizes.size())
    throw std::invalid_argument("compute_lambda_star: size mismatch");
  const size_t J = variances.size();
  std::vector<double> lambda(J);
  // lambda*_j = 1 / ((s_j + eps) * sum_k n_k / (s_k + eps)), computed via the
  // ratio form sum_k n_k * (s_j / s_k) so equal variances give exactly 1/n.
  for (size_t j = 0; j < J; ++j) {
    const double sj = variances[j] + eps_v;
    double denom = 0.0;
    for (size_t k = 0; k < J; ++k) {
      const double sk = variances[k] + eps_v;
      denom += sizes[k] * (sj / sk);
    }
    lambda[j] = 1.0 / denom;
  }
  return lambda;
}

std::vector<double> self_normalized_divergences(const MultiLoggerDataset& data,
                                                const PolicyEval& eval) {
  check_nonempty(data, "self_normalized_divergences");
  const double n = static_cast<double>(data.n());
  double u_bar = 0.0;
  for (int j = 0; j < data.num_loggers(); ++j)
    for (size_t i = 0; i < data.n_j(j); ++i)
      u_bar += eval.propensities[j][i] / data.records[j][i].propensity * data.records[j][i].loss;
  u_bar /= n;

  std::vector<double> out(data.num_loggers());
  for (int j = 0; j < data.num_loggers(); ++j) {
    const size_t nj = data.n_j(j);
    if (nj < 2)
      throw std::invalid_argument("self_normalized_divergences: logger " + std::to_string(j) +
                                  " has fewer than 2 records");
    double s = 0.0;
    for (size_t i = 0; i < nj; ++i)
      s += eval.propensities[j][i] / data.records[j][i].propensity;
    s /= static_cast<double>(nj);

    double acc = 0.0;
    for (size_t i = 0; i < nj; ++i) {
      const double u =
          eval.propensities[j][i] / data.records[j][i].propensity * data.records[j][i].loss;
      const double d = u / s - u_bar;
      acc += d * d;
    }
    out[j] = acc / static_cast<double>(nj - 1);
  }
  return out;
}

RiskValue balanced_ips(const MultiLoggerDataset& data, const PolicyEval& eval,
                       std::span<const LoggingPolicy> loggers) {
  check_nonempty(data, "balanced_ips");
  if (static_cast<int>(loggers.size()) != data.num_loggers())
    throw std::invalid_argument("balanced_ips: logger count mismatch");
  const auto sizes = data.logger_sizes();
  const double inv_n = 1.0 / static_cast<double>(data.n());

  RiskValue out;
  out.weighted_losses.reserve(data.n());
  double total = 0.0;
  for (int j = 0; j < data.num_loggers(); ++j) {
    double inner = 0.0;
    for (size_t i = 0; i < data.n_j(j); ++i) {
      const auto& rec = data.records[j][i];
      const double havg =
          mixture_propensity(loggers, sizes, data.contexts->row(rec.context), rec.action);
      const double u = eval.propensities[j][i] / havg * rec.loss;
      inner += u;
      out.weighted_losses.push_back(inv_n * u);
    }
    total += inv_n * inner;
  }
  out.estimate = total;
  return out;
}

WcrmValue wcrm_objective(const MultiLoggerDataset& data, const PolicyEval& eval,
                         std::span<const double> lambda_star, double lambda_reg, double clip_m) {
  check_nonempty(data, "wcrm_objective");
  const double n = static_cast<double>(data.n());
  if (n < 2) throw std::invalid_argument("wcrm_objective: need at least 2 records");

  WcrmValue out;
  std::vector<double> weighted_terms;  // lambda*_j n_j u_i^j
  weighted_terms.reserve(data.n());
  for (int j = 0; j < data.num_loggers(); ++j) {
    const double nj = static_cast<double>(data.n_j(j));
    double inner = 0.0;
    for (size_t i = 0; i < data.n_j(j); ++i) {
      const auto& rec = data.records[j][i];
      const double ratio = std::min(eval.propensities[j][i] / rec.propensity, clip_m);
      const double u = ratio * rec.loss;
      inner += u;
      weighted_terms.push_back(lambda_star[j] * nj * u);
    }
    out.risk += lambda_star[j] * inner;
  }

  double mean = 0.0;
  for (double t : weighted_terms) mean += t;
  mean /= n;
  double var = 0.0;
  for (double t : weighted_terms) var += (t - mean) * (t - mean);
  var /= (n - 1.0);
  out.variance = var;
  out.objective = out.risk + lambda_reg * std::sqrt(var / n);
  return out;
}

}  // namespace offpol

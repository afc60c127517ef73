#include "offpol/bounds.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace offpol {

std::string to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::Naive: return "naive";
    case BoundKind::LambdaWeighted: return "lambda_weighted";
    case BoundKind::Balanced: return "balanced";
  }
  return "?";
}

namespace {

BoundReport weighted_bound(double empirical_risk, double loss_bound, double eta,
                           const BoundInputs& inputs, std::span<const double> lambda,
                           BoundKind kind) {
  const size_t J = inputs.n_j.size();
  if (inputs.d2.size() != J || inputs.m.size() != J || lambda.size() != J)
    throw std::invalid_argument("generalization_bound: per-logger inputs must align");
  const double log_term = std::log(1.0 / eta);

  double m_lambda = 0.0;
  for (size_t j = 0; j < J; ++j) m_lambda = std::max(m_lambda, lambda[j] * inputs.m[j]);

  double s = 0.0;
  for (size_t j = 0; j < J; ++j) s += inputs.n_j[j] * lambda[j] * lambda[j] * inputs.d2[j];

  BoundReport rep;
  rep.kind = kind;
  rep.empirical_risk = empirical_risk;
  rep.eta = eta;
  rep.loss_bound = loss_bound;
  rep.inputs = inputs;
  rep.linear_term = 2.0 * loss_bound * m_lambda * log_term / 3.0;
  rep.sqrt_term = loss_bound * std::sqrt(2.0 * s * log_term);
  rep.bound = empirical_risk + rep.linear_term + rep.sqrt_term;
  return rep;
}

}  // namespace

BoundReport generalization_bound(BoundKind kind, double empirical_risk, double loss_bound,
                                 double eta, const BoundInputs& inputs) {
  if (!(eta > 0.0) || eta > 1.0)
    throw std::invalid_argument("generalization_bound: eta must be in (0, 1]");
  if (loss_bound <= 0.0)
    throw std::invalid_argument("generalization_bound: loss bound must be positive");

  switch (kind) {
    case BoundKind::LambdaWeighted:
      return weighted_bound(empirical_risk, loss_bound, eta, inputs, inputs.lambda, kind);
    case BoundKind::Naive: {
      double n = 0.0;
      for (double nj : inputs.n_j) n += nj;
      const std::vector<double> lambda(inputs.n_j.size(), 1.0 / n);
      return weighted_bound(empirical_risk, loss_bound, eta, inputs, lambda, kind);
    }
    case BoundKind::Balanced: {
      double n = 0.0;
      for (double nj : inputs.n_j) n += nj;
      if (n <= 0.0) throw std::invalid_argument("generalization_bound: empty sizes");
      const double log_term = std::log(1.0 / eta);
      BoundReport rep;
      rep.kind = kind;
      rep.empirical_risk = empirical_risk;
      rep.eta = eta;
      rep.loss_bound = loss_bound;
      rep.inputs = inputs;
      rep.linear_term = 2.0 * loss_bound * inputs.m_avg * log_term / (3.0 * n);
      rep.sqrt_term = loss_bound * std::sqrt(2.0 * inputs.d2_avg * log_term / n);
      rep.bound = empirical_risk + rep.linear_term + rep.sqrt_term;
      return rep;
    }
  }
  throw std::logic_error("generalization_bound: unknown kind");
}

std::string BoundReport::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["empirical_risk"] = empirical_risk;
  j["eta"] = eta;
  j["loss_bound"] = loss_bound;
  j["linear_term"] = linear_term;
  j["sqrt_term"] = sqrt_term;
  j["bound"] = bound;
  j["inputs"]["n_j"] = inputs.n_j;
  j["inputs"]["lambda"] = inputs.lambda;
  j["inputs"]["d2"] = inputs.d2;
  j["inputs"]["m"] = inputs.m;
  j["inputs"]["d2_avg"] = inputs.d2_avg;
  j["inputs"]["m_avg"] = inputs.m_avg;
  j["inputs"]["empirical"] = inputs.empirical;
  return j.dump();
}

}  // namespace offpol

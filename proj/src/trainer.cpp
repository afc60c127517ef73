#include "offpol/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace offpol {

std::string to_string(Method m) {
  switch (m) {
    case Method::Logger1: return "logger1";
    case Method::Logger2: return "logger2";
    case Method::Wcrm: return "wcrm";
    case Method::Naive: return "naive";
    case Method::NaiveReg: return "naive-reg";
    case Method::Weighted: return "weighted";
    case Method::WeightedReg: return "weighted-reg";
    case Method::Balanced: return "balanced";
    case Method::BalancedReg: return "balanced-reg";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::Logger1, Method::Logger2, Method::Wcrm, Method::Naive,
                   Method::NaiveReg, Method::Weighted, Method::WeightedReg, Method::Balanced,
                   Method::BalancedReg})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

bool is_constrained(Method m) {
  return m == Method::NaiveReg || m == Method::WeightedReg || m == Method::BalancedReg;
}
bool is_weighted_kind(Method m) {
  return m == Method::Weighted || m == Method::WeightedReg || m == Method::Wcrm;
}
bool is_balanced_kind(Method m) {
  return m == Method::Balanced || m == Method::BalancedReg;
}
bool is_reference(Method m) { return m == Method::Logger1 || m == Method::Logger2; }

void TrainConfig::validate() const {
  if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: validation_fraction must be in (0, 1)");
  if (lambda_every < 1) throw std::invalid_argument("TrainConfig: lambda_every must be >= 1");
  if (val_every < 1) throw std::invalid_argument("TrainConfig: val_every must be >= 1");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  constraint.validate();
}

double evaluate_exp(const FactorizedPolicy& policy, const SupervisedDataset& test) {
  Tensor features(test.n, test.num_features, test.features);
  Tensor probs = policy.probs_matrix(features);
  double total = 0.0;
  for (int i = 0; i < test.n; ++i) {
    const auto y = test.label_row(i);
    for (int l = 0; l < test.num_labels; ++l) {
      const double p = probs.at(i, l);
      total += y[l] ? (1.0 - p) : p;
    }
  }
  return total / test.n;
}

namespace {

constexpr std::uint64_t kSplitTag = 1, kInitTag = 2, kBatchTag = 3, kConstraintTag = 4,
                        kDiscTag = 5;

struct RiskBatch {
  Tensor x;        // B x p
  Tensor bits;     // B x q
  Tensor weights;  // B x 1, delta_i / denom_i
};

RiskBatch gather_risk_batch(const MultiLoggerDataset& data, int j, std::span<const int> idx,
                            const std::vector<double>* denominators) {
  const Contexts& ctx = *data.contexts;
  const int q = static_cast<int>(data.records[j].empty() ? 0 : data.records[j][0].action.size());
  RiskBatch b{Tensor(static_cast<int>(idx.size()), ctx.dim),
              Tensor(static_cast<int>(idx.size()), q), Tensor(static_cast<int>(idx.size()), 1)};
  for (size_t r = 0; r < idx.size(); ++r) {
    const auto& rec = data.records[j][idx[r]];
    const auto row = ctx.row(rec.context);
    std::copy(row.begin(), row.end(), b.x.v.begin() + r * ctx.dim);
    for (int l = 0; l < q; ++l) b.bits.at(static_cast<int>(r), l) = rec.action[l];
    const double denom = denominators ? (*denominators)[idx[r]] : rec.propensity;
    b.weights.v[r] = rec.loss / denom;
  }
  return b;
}

std::vector<int> sample_batch_indices(size_t n, int count, Rng& rng) {
  std::vector<int> out;
  out.reserve(count);
  if (static_cast<size_t>(count) >= n) {
    for (size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(i));
    while (out.size() < static_cast<size_t>(count))
      out.push_back(rng.uniform_int(static_cast<int>(n)));
    return out;
  }
  std::vector<int> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = static_cast<int>(i);
  for (int i = 0; i < count; ++i) {
    const int k = i + rng.uniform_int(static_cast<int>(n) - i);
    std::swap(pool[i], pool[k]);
    out.push_back(pool[i]);
  }
  return out;
}

// Differentiable h_theta(y|x) for a batch of logged actions:
// exp(sum_l y log p + (1-y) log(1-p)).
ad::Value policy_propensities(ad::Tape& tape, NeuralPolicy& policy, const Tensor& x,
                              const Tensor& bits, ad::Mode mode) {
  ad::Value probs = policy.net().forward(tape, tape.constant(x), mode);
  if (policy.prob_clamp > 0.0)
    probs = tape.clamp(probs, policy.prob_clamp, 1.0 - policy.prob_clamp);
  ad::Value y = tape.constant(bits);
  ad::Value pos = tape.mul(y, tape.log(probs));
  ad::Value neg = tape.mul(tape.affine(y, -1.0, 1.0), tape.log(tape.affine(probs, -1.0, 1.0)));
  return tape.exp(tape.row_sum(tape.add(pos, neg)));
}

// Stratified minibatch risk: sum_j lambda_j (n_j / B) sum_{i in batch}
// (h/denom) delta, an unbiased estimate of the lambda-weighted risk.
ad::Value minibatch_risk(ad::Tape& tape, NeuralPolicy& policy, const MultiLoggerDataset& train,
                         std::span<const double> lambda,
                         const std::vector<std::vector<double>>* mixture_denoms, int batch,
                         Rng& rng, ad::Mode mode) {
  ad::Value total;
  for (int j = 0; j < train.num_loggers(); ++j) {
    const auto idx = sample_batch_indices(train.n_j(j), batch, rng);
    RiskBatch b = gather_risk_batch(train, j, idx,
                                    mixture_denoms ? &(*mixture_denoms)[j] : nullptr);
    ad::Value h = policy_propensities(tape, policy, b.x, b.bits, mode);
    ad::Value term = tape.sum(tape.mul(h, tape.constant(b.weights)));
    const double scale = lambda[j] * static_cast<double>(train.n_j(j)) / b.x.rows;
    ad::Value scaled = tape.affine(term, scale, 0.0);
    total = total.valid() ? tape.add(total, scaled) : scaled;
  }
  return total;
}

// Per-record h_avg denominators for the balanced estimators.
std::vector<std::vector<double>> mixture_denominators(const MultiLoggerDataset& data,
                                                      std::span<const LoggingPolicy> loggers) {
  const auto sizes = data.logger_sizes();
  std::vector<std::vector<double>> out(data.num_loggers());
  for (int j = 0; j < data.num_loggers(); ++j) {
    out[j].reserve(data.n_j(j));
    for (const auto& rec : data.records[j])
      out[j].push_back(
          mixture_propensity(loggers, sizes, data.contexts->row(rec.context), rec.action));
  }
  return out;
}

std::vector<double> current_lambda(Method method, const MultiLoggerDataset& train,
                                   const FactorizedPolicy& policy) {
  if (is_weighted_kind(method)) {
    const auto eval = evaluate_policy(train, policy);
    const auto sigma2 = self_normalized_divergences(train, eval);
    return compute_lambda_star(sigma2, train.logger_sizes());
  }
  return std::vector<double>(train.num_loggers(),
                             1.0 / static_cast<double>(train.n()));
}

}  // namespace

double validation_metric(Method method, const MultiLoggerDataset& validation,
                         const FactorizedPolicy& policy,
                         const std::vector<LoggingPolicy>& loggers, const TrainConfig& config) {
  const auto eval = evaluate_policy(validation, policy);
  if (is_balanced_kind(method)) return balanced_ips(validation, eval, loggers).estimate;
  if (method == Method::Wcrm) {
    const auto sigma2 = self_normalized_divergences(validation, eval);
    const auto lambda = compute_lambda_star(sigma2, validation.logger_sizes());
    return wcrm_objective(validation, eval, lambda, config.wcrm_lambda_reg, config.wcrm_clip)
        .objective;
  }
  if (is_weighted_kind(method)) {
    const auto sigma2 = self_normalized_divergences(validation, eval);
    const auto lambda = compute_lambda_star(sigma2, validation.logger_sizes());
    return lambda_weighted_ips(validation, eval, lambda).estimate;
  }
  return naive_ips(validation, eval).estimate;
}

double wcrm_graph_objective(NeuralPolicy& policy, const MultiLoggerDataset& data,
                            std::span<const double> lambda_star, double lambda_reg, double clip_m,
                            ad::Mode mode) {
  ad::Tape tape;
  const double n = static_cast<double>(data.n());
  ad::Value risk;
  ad::Value stacked;  // lambda*_j n_j u_i, all records
  std::vector<int> all_idx;
  for (int j = 0; j < data.num_loggers(); ++j) {
    all_idx.resize(data.n_j(j));
    for (size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = static_cast<int>(i);
    RiskBatch b = gather_risk_batch(data, j, all_idx, nullptr);
    ad::Value h = policy_propensities(tape, policy, b.x, b.bits, mode);
    // clip the importance ratio h/p at clip_m, then scale by delta:
    // u = min(h/p, M) * delta. b.weights holds delta/p, so rebuild the pieces.
    Tensor inv_p(b.x.rows, 1), delta(b.x.rows, 1);
    for (int r = 0; r < b.x.rows; ++r) {
      const auto& rec = data.records[j][r];
      inv_p.v[r] = 1.0 / rec.propensity;
      delta.v[r] = rec.loss;
    }
    ad::Value ratio = tape.clip_max(tape.mul(h, tape.constant(inv_p)), clip_m);
    ad::Value u = tape.mul(ratio, tape.constant(delta));
    risk = risk.valid() ? tape.add(risk, tape.affine(tape.sum(u), lambda_star[j], 0.0))
                        : tape.affine(tape.sum(u), lambda_star[j], 0.0);
    ad::Value weighted =
        tape.affine(u, lambda_star[j] * static_cast<double>(data.n_j(j)), 0.0);
    stacked = stacked.valid() ? tape.concat_rows(stacked, weighted) : weighted;
  }
  ad::Value mean = tape.mean(stacked);
  ad::Value centered = tape.add_rowvec(stacked, tape.affine(mean, -1.0, 0.0));
  ad::Value var = tape.affine(tape.sum(tape.square(centered)), 1.0 / (n - 1.0), 0.0);
  ad::Value penalty = tape.affine(tape.sqrt(tape.affine(var, 1.0 / n, 0.0)), lambda_reg, 0.0);
  ad::Value objective = tape.add(risk, penalty);
  return tape.scalar(objective);
}

namespace {

struct Checkpoint {
  std::vector<double> state;
  double metric = std::numeric_limits<double>::infinity();
  int epoch = 0;
};

TrainResult finish(TrainResult result, NeuralPolicy& policy, const Checkpoint& best,
                   Method method, const MultiLoggerDataset& train,
                   const std::vector<LoggingPolicy>& loggers,
                   std::span<const double> lambda) {
  if (!best.state.empty()) policy.net().restore(best.state);
  result.best_val = best.metric;
  result.best_epoch = best.epoch;
  if (!loggers.empty() || !is_balanced_kind(method))
    result.bound = empirical_bound_report(method, train, policy, loggers, lambda);
  result.policy = std::make_unique<NeuralPolicy>(std::move(policy));
  return result;
}

TrainResult train_wcrm_impl(const MultiLoggerDataset& data,
                            const std::vector<LoggingPolicy>& loggers, const TrainConfig& config) {
  Rng split_rng(derive_seed(config.seed, {kSplitTag}));
  auto split = split_train_validation(data, config.validation_fraction, split_rng);
  const auto& train = split.train;
  const int p = train.contexts->dim;
  const int q = static_cast<int>(train.records[0].empty() ? loggers[0].num_labels()
                                                          : train.records[0][0].action.size());

  NeuralPolicy policy(
      ad::make_generator_spec(p, config.gen_hidden, q, derive_seed(config.seed, {kInitTag})),
      config.constraint.tau, config.prob_clamp);
  ad::Adam opt(policy.net().parameters(), {.lr = config.outer_lr});

  TrainResult result;
  Checkpoint best;
  std::vector<double> lambda(train.num_loggers(), 1.0 / static_cast<double>(train.n()));
  int stale = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    result.epochs_run = epoch;
    if ((epoch - 1) % config.lambda_every == 0) lambda = current_lambda(Method::Wcrm, train, policy);

    ad::Tape tape;
    const double n = static_cast<double>(train.n());
    ad::Value risk, stacked;
    for (int j = 0; j < train.num_loggers(); ++j) {
      std::vector<int> all_idx(train.n_j(j));
      for (size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = static_cast<int>(i);
      RiskBatch b = gather_risk_batch(train, j, all_idx, nullptr);
      ad::Value h = policy_propensities(tape, policy, b.x, b.bits, ad::Mode::Train);
      Tensor inv_p(b.x.rows, 1), delta(b.x.rows, 1);
      for (int r = 0; r < b.x.rows; ++r) {
        inv_p.v[r] = 1.0 / train.records[j][r].propensity;
        delta.v[r] = train.records[j][r].loss;
      }
      ad::Value ratio = tape.clip_max(tape.mul(h, tape.constant(inv_p)), config.wcrm_clip);
      ad::Value u = tape.mul(ratio, tape.constant(delta));
      risk = risk.valid() ? tape.add(risk, tape.affine(tape.sum(u), lambda[j], 0.0))
                          : tape.affine(tape.sum(u), lambda[j], 0.0);
      ad::Value weighted = tape.affine(u, lambda[j] * static_cast<double>(train.n_j(j)), 0.0);
      stacked = stacked.valid() ? tape.concat_rows(stacked, weighted) : weighted;
    }
    ad::Value mean = tape.mean(stacked);
    ad::Value centered = tape.add_rowvec(stacked, tape.affine(mean, -1.0, 0.0));
    ad::Value var = tape.affine(tape.sum(tape.square(centered)), 1.0 / (n - 1.0), 0.0);
    ad::Value objective = tape.add(
        risk, tape.affine(tape.sqrt(tape.affine(var, 1.0 / n, 0.0)), config.wcrm_lambda_reg, 0.0));

    const double value = tape.scalar(objective);
    if (!std::isfinite(value)) {
      result.aborted = true;
      result.abort_reason = "non-finite objective at epoch " + std::to_string(epoch);
      break;
    }
    tape.backward(objective);
    try {
      opt.step();
    } catch (const std::exception& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }

    if (epoch % config.val_every == 0) {
      const double metric =
          validation_metric(Method::Wcrm, split.validation, policy, loggers, config);
      result.val_history.emplace_back(epoch, metric);
      if (metric < best.metric) {
        best = {policy.net().snapshot(), metric, epoch};
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  return finish(std::move(result), policy, best, Method::Wcrm, train, loggers, lambda);
}

}  // namespace

TrainResult train_policy(Method method, const MultiLoggerDataset& data,
                         const std::vector<LoggingPolicy>& loggers, const TrainConfig& config) {
  config.validate();
  if (is_reference(method))
    throw std::invalid_argument("train_policy: '" + to_string(method) +
                                "' is a reference method, not trainable");
  if (data.n() == 0) throw std::invalid_argument("train_policy: empty dataset");
  if (is_balanced_kind(method) &&
      static_cast<int>(loggers.size()) != data.num_loggers())
    throw std::invalid_argument("train_policy: balanced methods need the logging policies");
  if (method == Method::Wcrm) return train_wcrm_impl(data, loggers, config);

  Rng split_rng(derive_seed(config.seed, {kSplitTag}));
  auto split = split_train_validation(data, config.validation_fraction, split_rng);
  const auto& train = split.train;
  const int J = train.num_loggers();
  const int p = train.contexts->dim;
  const int q = static_cast<int>(train.records[0].empty() ? loggers[0].num_labels()
                                                          : train.records[0][0].action.size());
  const double n = static_cast<double>(train.n());

  NeuralPolicy policy(
      ad::make_generator_spec(p, config.gen_hidden, q, derive_seed(config.seed, {kInitTag})),
      config.constraint.tau, config.prob_clamp);
  ad::Adam risk_opt(policy.net().parameters(), {.lr = config.outer_lr});
  Rng batch_rng(derive_seed(config.seed, {kBatchTag}));

  // Constraint machinery, created only for the -Reg methods.
  std::vector<Discriminator> discs;
  ConstraintLoopState cstate;
  Rng constraint_rng(derive_seed(config.seed, {kConstraintTag}));
  const bool constrained = is_constrained(method) && std::isfinite(config.constraint.rho);
  if (constrained) {
    cstate.generator =
        ad::Adam(policy.net().parameters(), {.lr = config.constraint.lr_generator});
    const int n_discs = is_balanced_kind(method) ? 1 : J;
    for (int d = 0; d < n_discs; ++d) {
      const std::string owner = is_balanced_kind(method) ? "avg" : std::to_string(d);
      discs.emplace_back(owner,
                         ad::make_discriminator_spec(p + q, config.disc_hidden,
                                                     derive_seed(config.seed, {kDiscTag,
                                                                               static_cast<std::uint64_t>(d)})));
      cstate.discriminators.emplace_back(discs.back().net.parameters(),
                                         ad::AdamConfig{.lr = config.constraint.lr_discriminator});
    }
  }

  std::vector<std::vector<double>> train_denoms;
  const std::vector<std::vector<double>>* denoms = nullptr;
  if (is_balanced_kind(method)) {
    train_denoms = mixture_denominators(train, loggers);
    denoms = &train_denoms;
  }

  TrainResult result;
  Checkpoint best;
  std::vector<double> lambda(J, 1.0 / n);
  int stale = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    result.epochs_run = epoch;
    if (is_weighted_kind(method) && (epoch - 1) % config.lambda_every == 0)
      lambda = current_lambda(method, train, policy);

    // Risk step (Algorithm 1 / 3, step 3-4).
    {
      ad::Tape tape;
      ad::Value risk =
          minibatch_risk(tape, policy, train, lambda, denoms, config.batch, batch_rng,
                         ad::Mode::Train);
      const double value = tape.scalar(risk);
      if (!std::isfinite(value)) {
        result.aborted = true;
        result.abort_reason = "non-finite risk at epoch " + std::to_string(epoch);
        break;
      }
      tape.backward(risk);
      try {
        risk_opt.step();
      } catch (const std::exception& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        break;
      }
    }

    // Constraint step (Algorithm 2 / 4).
    if (constrained) {
      ConstraintResult cres;
      if (is_balanced_kind(method)) {
        const double threshold = config.constraint.rho / n;
        cres = minimize_constraint_balanced(policy, discs[0], loggers, train, threshold,
                                            config.constraint, cstate, constraint_rng);
      } else {
        std::vector<double> weights(J);
        for (int j = 0; j < J; ++j)
          weights[j] = static_cast<double>(train.n_j(j)) * lambda[j] * lambda[j];
        const double threshold = config.constraint.rho / (n * n);
        cres = minimize_constraint(policy, discs, weights, train, threshold, config.constraint,
                                   cstate, constraint_rng);
      }
      result.constraint_iterations += cres.iterations;
      if (cres.diverged && result.abort_reason.empty())
        result.abort_reason = "constraint loop: " + cres.diagnostics;
    }

    if (epoch % config.val_every == 0) {
      const double metric = validation_metric(method, split.validation, policy, loggers, config);
      result.val_history.emplace_back(epoch, metric);
      if (metric < best.metric) {
        best = {policy.net().snapshot(), metric, epoch};
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  return finish(std::move(result), policy, best, method, train, loggers, lambda);
}

BoundReport empirical_bound_report(Method method, const MultiLoggerDataset& data,
                                   const FactorizedPolicy& policy,
                                   const std::vector<LoggingPolicy>& loggers,
                                   std::span<const double> lambda, double eta) {
  const auto eval = evaluate_policy(data, policy);
  BoundInputs inputs;
  inputs.empirical = true;
  inputs.n_j = data.logger_sizes();
  const double L = static_cast<double>(policy.num_labels());

  if (is_balanced_kind(method)) {
    const auto sizes = data.logger_sizes();
    double second = 0.0, sup = 0.0;
    for (int j = 0; j < data.num_loggers(); ++j) {
      for (size_t i = 0; i < data.n_j(j); ++i) {
        const auto& rec = data.records[j][i];
        const double havg =
            mixture_propensity(loggers, sizes, data.contexts->row(rec.context), rec.action);
        const double r = eval.propensities[j][i] / havg;
        second += r * r;
        sup = std::max(sup, r);
      }
    }
    inputs.d2_avg = second / static_cast<double>(data.n());
    inputs.m_avg = sup;
    const double risk = balanced_ips(data, eval, loggers).estimate;
    return generalization_bound(BoundKind::Balanced, risk, L, eta, inputs);
  }

  for (int j = 0; j < data.num_loggers(); ++j) {
    double second = 0.0, sup = 0.0;
    for (size_t i = 0; i < data.n_j(j); ++i) {
      const double r = eval.propensities[j][i] / data.records[j][i].propensity;
      second += r * r;
      sup = std::max(sup, r);
    }
    inputs.d2.push_back(second / static_cast<double>(data.n_j(j)));
    inputs.m.push_back(sup);
  }

  if (is_weighted_kind(method)) {
    inputs.lambda.assign(lambda.begin(), lambda.end());
    const double risk = lambda_weighted_ips(data, eval, lambda).estimate;
    return generalization_bound(BoundKind::LambdaWeighted, risk, L, eta, inputs);
  }
  const double risk = naive_ips(data, eval).estimate;
  return generalization_bound(BoundKind::Naive, risk, L, eta, inputs);
}

}  // namespace offpol

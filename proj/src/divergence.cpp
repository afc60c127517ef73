#include "offpol/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace offpol {

std::vector<double> gumbel_softmax(std::span<const double> pi, double tau,
                                   std::span<const double> gumbels, double floor) {
  if (pi.size() != gumbels.size())
    throw std::invalid_argument("gumbel_softmax: pi/gumbels size mismatch");
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  std::vector<double> z(pi.size());
  double zmax = -1e300;
  for (size_t i = 0; i < pi.size(); ++i) {
    const double p = std::max(pi[i], floor);
    z[i] = (std::log(p) + gumbels[i]) / tau;
    zmax = std::max(zmax, z[i]);
  }
  double denom = 0.0;
  for (double& e : z) {
    e = std::exp(e - zmax);
    denom += e;
  }
  for (double& e : z) e /= denom;
  return z;
}

std::vector<double> gumbel_softmax_sample(std::span<const double> pi, double tau, Rng& rng,
                                          double floor) {
  std::vector<double> g(pi.size());
  for (double& e : g) e = rng.gumbel();
  return gumbel_softmax(pi, tau, g, floor);
}

Tensor draw_gumbel_diff(int rows, int cols, Rng& rng) {
  Tensor out(rows, cols);
  for (double& e : out.v) e = rng.gumbel() - rng.gumbel();
  return out;
}

ad::Value relaxed_bernoulli_bits(ad::Tape& tape, ad::Value probs, const Tensor& gumbel_diff,
                                 double tau) {
  if (tau <= 0.0) throw std::invalid_argument("relaxed_bernoulli_bits: tau must be positive");
  const Tensor& p = tape.val(probs);
  if (!p.same_shape(gumbel_diff))
    throw std::invalid_argument("relaxed_bernoulli_bits: gumbel shape mismatch");
  // sigmoid((log p - log(1-p) + g1 - g0) / tau), the two-class softmax.
  ad::Value logit =
      tape.sub(tape.log(probs), tape.log(tape.affine(probs, -1.0, 1.0)));
  ad::Value shifted = tape.add(logit, tape.constant(gumbel_diff));
  return tape.sigmoid(tape.affine(shifted, 1.0 / tau, 0.0));
}

ad::Value variational_objective(ad::Tape& tape, NeuralPolicy& policy, Discriminator& disc,
                                const Tensor& real_x, const Tensor& real_y, const Tensor& fake_x,
                                const Tensor& gumbel_diff, ad::Mode mode) {
  if (real_x.rows != fake_x.rows || real_x.rows != real_y.rows)
    throw std::invalid_argument("variational_objective: batch size mismatch (real " +
                                std::to_string(real_x.rows) + ", fake " +
                                std::to_string(fake_x.rows) + ")");
  ad::Value fx = tape.constant(fake_x);
  ad::Value probs = policy.net().forward(tape, fx, mode);
  if (policy.prob_clamp > 0.0)
    probs = tape.clamp(probs, policy.prob_clamp, 1.0 - policy.prob_clamp);
  ad::Value relaxed = relaxed_bernoulli_bits(tape, probs, gumbel_diff, policy.tau);

  ad::Value t_fake = disc.net.forward(tape, tape.concat_cols(fx, relaxed), mode);
  ad::Value term_fake = tape.mean(t_fake);

  ad::Value t_real =
      disc.net.forward(tape, tape.concat_cols(tape.constant(real_x), tape.constant(real_y)), mode);
  // f*(t) = t^2/4 + 1
  ad::Value term_real = tape.mean(tape.affine(tape.square(t_real), 0.25, 1.0));

  return tape.sub(term_fake, term_real);
}

CondProb cond_prob(const FactorizedPolicy& policy) {
  return [&policy](std::span<const double> x, std::span<const std::uint8_t> y) {
    return propensity(policy, x, y);
  };
}

CondProb mixture_cond_prob(std::span<const LoggingPolicy> loggers, std::vector<double> sizes) {
  std::vector<const LoggingPolicy*> ptrs;
  for (const auto& l : loggers) ptrs.push_back(&l);
  return [ptrs, sizes = std::move(sizes)](std::span<const double> x,
                                          std::span<const std::uint8_t> y) {
    double n = 0.0;
    for (double s : sizes) n += s;
    double p = 0.0;
    for (size_t j = 0; j < ptrs.size(); ++j)
      p += (sizes[j] / n) * propensity(*ptrs[j], x, y);
    return p;
  };
}

double exact_d2_enumerate(const FactorizedPolicy& h, const CondProb& h_ref,
                          const Contexts& contexts) {
  const int q = h.num_labels();
  if (q > 15)
    throw std::invalid_argument("exact_d2_enumerate: refusing to enumerate q_L = " +
                                std::to_string(q) + " > 15 labels");
  if (contexts.count() == 0) throw std::invalid_argument("exact_d2_enumerate: no contexts");

  std::vector<std::uint8_t> y(q);
  double total = 0.0;
  for (int c = 0; c < contexts.count(); ++c) {
    const auto x = contexts.row(c);
    const auto probs = h.label_probs(x);
    for (int mask = 0; mask < (1 << q); ++mask) {
      for (int l = 0; l < q; ++l) y[l] = (mask >> l) & 1;
      const double ph = propensity_from_probs(probs, y);
      total += ph * ph / h_ref(x, y);
    }
  }
  return total / contexts.count();
}

void ConstraintConfig::validate() const {
  if (rho <= 0.0) throw std::invalid_argument("ConstraintConfig: rho must be positive");
  if (tau <= 0.0) throw std::invalid_argument("ConstraintConfig: tau must be positive");
  if (max_iters < 1) throw std::invalid_argument("ConstraintConfig: max_iters must be >= 1");
  if (batch < 2) throw std::invalid_argument("ConstraintConfig: batch must be >= 2");
}

namespace {

// Sample `count` record indices from logger j, without replacement when
// possible.
std::vector<int> sample_indices(size_t n, int count, Rng& rng) {
  std::vector<int> out;
  out.reserve(count);
  if (static_cast<size_t>(count) >= n) {
    for (size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(i));
    while (out.size() < static_cast<size_t>(count))
      out.push_back(rng.uniform_int(static_cast<int>(n)));
    return out;
  }
  // partial Fisher-Yates over an index pool
  std::vector<int> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = static_cast<int>(i);
  for (int i = 0; i < count; ++i) {
    const int k = i + rng.uniform_int(static_cast<int>(n) - i);
    std::swap(pool[i], pool[k]);
    out.push_back(pool[i]);
  }
  return out;
}

Tensor gather_contexts(const MultiLoggerDataset& data, int j, std::span<const int> idx) {
  const Contexts& ctx = *data.contexts;
  Tensor out(static_cast<int>(idx.size()), ctx.dim);
  for (size_t r = 0; r < idx.size(); ++r) {
    const auto row = ctx.row(data.records[j][idx[r]].context);
    std::copy(row.begin(), row.end(), out.v.begin() + r * ctx.dim);
  }
  return out;
}

Tensor gather_actions(const MultiLoggerDataset& data, int j, std::span<const int> idx, int q) {
  Tensor out(static_cast<int>(idx.size()), q);
  for (size_t r = 0; r < idx.size(); ++r) {
    const auto& a = data.records[j][idx[r]].action;
    for (int l = 0; l < q; ++l) out.at(static_cast<int>(r), l) = a[l];
  }
  return out;
}

}  // namespace

ConstraintResult minimize_constraint(NeuralPolicy& policy, std::vector<Discriminator>& discs,
                                     std::span<const double> weights,
                                     const MultiLoggerDataset& data, double threshold_d,
                                     const ConstraintConfig& config, ConstraintLoopState& state,
                                     Rng& rng) {
  config.validate();
  const int J = data.num_loggers();
  if (static_cast<int>(discs.size()) != J || static_cast<int>(weights.size()) != J)
    throw std::invalid_argument("minimize_constraint: discriminators/weights must match loggers");
  const int q = policy.num_labels();

  ConstraintResult result;
  double ema = 0.0;
  bool ema_init = false;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    result.iterations = iter;
    ad::Tape tape;
    std::vector<ad::Value> f_terms(J);
    for (int j = 0; j < J; ++j) {
      const auto real_idx = sample_indices(data.n_j(j), config.batch, rng);
      const auto fake_idx = sample_indices(data.n_j(j), config.batch, rng);
      Tensor real_x = gather_contexts(data, j, real_idx);
      Tensor real_y = gather_actions(data, j, real_idx, q);
      Tensor fake_x = gather_contexts(data, j, fake_idx);
      Tensor gd = draw_gumbel_diff(fake_x.rows, q, rng);
      f_terms[j] =
          variational_objective(tape, policy, discs[j], real_x, real_y, fake_x, gd);
    }

    double df = 0.0;
    for (int j = 0; j < J; ++j) {
      const double fj = tape.scalar(f_terms[j]);
      if (std::fabs(fj) > config.divergence_guard) {
        result.diverged = true;
        result.diagnostics = "discriminator " + discs[j].owner + " diverged: |F| = " +
                             std::to_string(fj) + " at iteration " + std::to_string(iter);
        return result;
      }
      df += weights[j] * fj;
    }

    ad::Value total = tape.affine(f_terms[0], weights[0], 0.0);
    for (int j = 1; j < J; ++j)
      total = tape.add(total, tape.affine(f_terms[j], weights[j], 0.0));
    tape.backward(total);

    state.generator.step();
    for (auto& opt : state.discriminators) opt.step_maximize();

    ema = ema_init ? config.ema_decay * ema + (1.0 - config.ema_decay) * df : df;
    ema_init = true;
    result.df_estimate = ema;
    if (ema <= threshold_d) {
      result.satisfied = true;
      break;
    }
  }
  return result;
}

ConstraintResult minimize_constraint_balanced(NeuralPolicy& policy, Discriminator& disc,
                                              std::span<const LoggingPolicy> loggers,
                                              const MultiLoggerDataset& data, double threshold_d,
                                              const ConstraintConfig& config,
                                              ConstraintLoopState& state, Rng& rng) {
  config.validate();
  const int J = data.num_loggers();
  const int q = policy.num_labels();
  const auto sizes = data.logger_sizes();

  ConstraintResult result;
  double ema = 0.0;
  bool ema_init = false;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    result.iterations = iter;
    ad::Tape tape;

    // Real side: contexts from each logger's slice, labels drawn from h_avg.
    Tensor real_x(J * config.batch, data.contexts->dim);
    Tensor real_y(J * config.batch, q);
    Tensor fake_x(J * config.batch, data.contexts->dim);
    for (int j = 0; j < J; ++j) {
      const auto real_idx = sample_indices(data.n_j(j), config.batch, rng);
      const auto fake_idx = sample_indices(data.n_j(j), config.batch, rng);
      for (int r = 0; r < config.batch; ++r) {
        const int row = j * config.batch + r;
        const auto xr = data.contexts->row(data.records[j][real_idx[r]].context);
        std::copy(xr.begin(), xr.end(), real_x.v.begin() + static_cast<size_t>(row) * real_x.cols);
        auto sampled = mixture_sample(loggers, sizes, xr, rng);
        for (int l = 0; l < q; ++l) real_y.at(row, l) = sampled.y[l];
        const auto xf = data.contexts->row(data.records[j][fake_idx[r]].context);
        std::copy(xf.begin(), xf.end(), fake_x.v.begin() + static_cast<size_t>(row) * fake_x.cols);
      }
    }
    Tensor gd = draw_gumbel_diff(fake_x.rows, q, rng);
    ad::Value f = variational_objective(tape, policy, disc, real_x, real_y, fake_x, gd);

    const double fv = tape.scalar(f);
    if (std::fabs(fv) > config.divergence_guard) {
      result.diverged = true;
      result.diagnostics = "discriminator avg diverged: |F| = " + std::to_string(fv) +
                           " at iteration " + std::to_string(iter);
      return result;
    }

    tape.backward(f);
    state.generator.step();
    state.discriminators[0].step_maximize();

    ema = ema_init ? config.ema_decay * ema + (1.0 - config.ema_decay) * fv : fv;
    ema_init = true;
    result.df_estimate = ema;
    if (ema <= threshold_d) {
      result.satisfied = true;
      break;
    }
  }
  return result;
}

}  // namespace offpol

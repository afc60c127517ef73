#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "offpol/estimators.hpp"
#include "offpol/optim.hpp"
#include "offpol/policies.hpp"

namespace offpol {

// Convex conjugate of f(t) = t^2 - 1: f*(u) = u^2/4 + 1.
inline double f_conjugate(double u) { return u * u / 4.0 + 1.0; }

// Relaxed one-hot sample over a probability vector with fixed Gumbel noise.
// Entries of pi are clamped at `floor` before the log.
std::vector<double> gumbel_softmax(std::span<const double> pi, double tau,
                                   std::span<const double> gumbels, double floor = 1e-4);
std::vector<double> gumbel_softmax_sample(std::span<const double> pi, double tau, Rng& rng,
                                          double floor = 1e-4);

// Differentiable per-label binary relaxation used for the factorized policy:
// y_l = sigmoid((log p_l - log(1 - p_l) + gumbel_diff_l) / tau), where
// gumbel_diff holds g1 - g0 draws. probs must already be clamped.
ad::Value relaxed_bernoulli_bits(ad::Tape& tape, ad::Value probs, const Tensor& gumbel_diff,
                                 double tau);
Tensor draw_gumbel_diff(int rows, int cols, Rng& rng);

// The variational witness network T_w: (x, y-relaxed) -> real scalar.
struct Discriminator {
  std::string owner;  // logger index as text, or "avg"
  ad::Network net;

  Discriminator(std::string owner_tag, const ad::NetworkSpec& spec)
      : owner(std::move(owner_tag)), net(spec) {
    if (spec.layers.empty() || spec.layers.back().kind != ad::LayerKind::Linear)
      throw std::invalid_argument("Discriminator: spec must end in a Linear head");
  }
};

// F(theta, w) = E_{x,y~h_theta} T(x,y) - E_{x,y~real} f*(T(x,y)), minibatch
// form. Fake labels are produced with relaxed_bernoulli_bits so gradients
// reach the generator. Both batches must have the same size.
ad::Value variational_objective(ad::Tape& tape, NeuralPolicy& policy, Discriminator& disc,
                                const Tensor& real_x, const Tensor& real_y, const Tensor& fake_x,
                                const Tensor& gumbel_diff, ad::Mode mode = ad::Mode::Train);

// Exact d2 = sum_x P(x) sum_y h^2/h_ref by full label enumeration. Refuses
// q_L > 15.
using CondProb =
    std::function<double(std::span<const double> x, std::span<const std::uint8_t> y)>;
CondProb cond_prob(const FactorizedPolicy& policy);
CondProb mixture_cond_prob(std::span<const LoggingPolicy> loggers, std::vector<double> sizes);
double exact_d2_enumerate(const FactorizedPolicy& h, const CondProb& h_ref,
                          const Contexts& contexts);

struct ConstraintConfig {
  double rho = 1.44e7;  // threshold scale; callers derive D = rho/n^2 or rho/n
  double tau = 1.0;
  int max_iters = 5;    // I
  int batch = 256;      // B
  double lr_generator = 1e-4;       // eta_h
  double lr_discriminator = 2.5e-4;  // eta_T
  double ema_decay = 0.9;
  double divergence_guard = 1e6;

  void validate() const;
};

// Optimizer state that persists across constraint calls within one run.
struct ConstraintLoopState {
  ad::Adam generator;
  std::vector<ad::Adam> discriminators;
};

struct ConstraintResult {
  int iterations = 0;
  double df_estimate = 0.0;  // EMA of the weighted minibatch divergence
  bool satisfied = false;
  bool diverged = false;
  std::string diagnostics;
};

// Alternating minimax on sum_j weight_j * F(theta, w_j) with one generator
// descent and one discriminator ascent per iteration; stops when the EMA of
// the weighted minibatch divergence reaches threshold_d or after max_iters.
ConstraintResult minimize_constraint(NeuralPolicy& policy, std::vector<Discriminator>& discs,
                                     std::span<const double> weights,
                                     const MultiLoggerDataset& data, double threshold_d,
                                     const ConstraintConfig& config, ConstraintLoopState& state,
                                     Rng& rng);

// Single-discriminator variant against h_avg; real samples are drawn fresh
// from the mixture, not taken from the logs.
ConstraintResult minimize_constraint_balanced(NeuralPolicy& policy, Discriminator& disc,
                                              std::span<const LoggingPolicy> loggers,
                                              const MultiLoggerDataset& data, double threshold_d,
                                              const ConstraintConfig& config,
                                              ConstraintLoopState& state, Rng& rng);

}  // namespace offpol

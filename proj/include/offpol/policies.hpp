#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "offpol/data.hpp"
#include "offpol/nets.hpp"
#include "offpol/rng.hpp"
#include "offpol/tensor.hpp"

namespace offpol {

// Stochastic multi-label policy factorized over labels: h(y|x) is the product
// of independent per-label Bernoulli terms. Propensities are exact products of
// the (clamped) per-label probabilities, so they are never zero.
class FactorizedPolicy {
 public:
  virtual ~FactorizedPolicy() = default;
  virtual int num_labels() const = 0;
  virtual int num_features() const = 0;
  // Per-label P(y_l = 1 | x), clamped away from {0,1}.
  virtual std::vector<double> label_probs(std::span<const double> x) const = 0;
  // Batched variant; row i holds label_probs of features row i. The default
  // loops rows, overrides must match it bitwise.
  virtual Tensor probs_matrix(const Tensor& features) const;
};

double propensity_from_probs(std::span<const double> probs, std::span<const std::uint8_t> y);
double propensity(const FactorizedPolicy& policy, std::span<const double> x,
                  std::span<const std::uint8_t> y);

struct SampledAction {
  std::vector<std::uint8_t> y;
  double propensity = 0.0;
};
SampledAction sample_action(const FactorizedPolicy& policy, std::span<const double> x, Rng& rng);

// Per-label logistic rule P(y_l=1|x) = sigmoid(alpha * w_l . [x, 1]).
class LoggingPolicy final : public FactorizedPolicy {
 public:
  LoggingPolicy() = default;
  LoggingPolicy(int features, int labels)
      : num_features_(features), num_labels_(labels),
        weights_(static_cast<size_t>(labels) * (features + 1), 0.0) {}

  int num_labels() const override { return num_labels_; }
  int num_features() const override { return num_features_; }
  std::vector<double> label_probs(std::span<const double> x) const override;

  double& weight(int label, int idx) { return weights_[static_cast<size_t>(label) * (num_features_ + 1) + idx]; }
  double weight(int label, int idx) const { return weights_[static_cast<size_t>(label) * (num_features_ + 1) + idx]; }

  double alpha = 1.0;
  double prob_clamp = 1e-4;

  void save(const std::string& path) const;
  static LoggingPolicy load(const std::string& path);

 private:
  int num_features_ = 0;
  int num_labels_ = 0;
  std::vector<double> weights_;  // labels x (features + 1), bias last
};

struct LoggerFitConfig {
  int steps = 500;
  double lr = 0.1;
  double l2 = 1e-4;
  double prob_clamp = 1e-4;
};

// Per-label logistic regression by full-batch gradient descent on the first
// ceil(fraction * n) rows. The stochastic multiplier alpha only scales the
// logits at sampling/propensity time.
LoggingPolicy train_logger(const SupervisedDataset& data, double fraction, double alpha,
                           const LoggerFitConfig& fit = {});

// Generator network policy with q_L sigmoid outputs.
class NeuralPolicy final : public FactorizedPolicy {
 public:
  NeuralPolicy(const ad::NetworkSpec& spec, double tau = 1.0, double prob_clamp = 1e-4);

  int num_labels() const override { return net_.spec().output_dim(); }
  int num_features() const override { return net_.spec().input_dim(); }
  std::vector<double> label_probs(std::span<const double> x) const override;
  Tensor probs_matrix(const Tensor& features) const override;

  ad::Network& net() { return net_; }
  const ad::Network& net() const { return net_; }

  double tau = 1.0;
  double prob_clamp = 1e-4;

  void save(const std::string& path) const;
  static NeuralPolicy load(const std::string& path);

 private:
  ad::Network net_;
};

// Shared context rows referenced by bandit records.
struct Contexts {
  int dim = 0;
  std::vector<double> flat;

  int count() const { return dim == 0 ? 0 : static_cast<int>(flat.size()) / dim; }
  std::span<const double> row(int i) const {
    return {flat.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
  }
};

struct BanditRecord {
  int context = 0;
  std::vector<std::uint8_t> action;
  double loss = 0.0;        // Hamming loss against the supervised label
  double propensity = 0.0;  // h_j(y|x) at sampling time
};

// Union of per-logger logs D = D^1 u ... u D^J.
struct MultiLoggerDataset {
  std::shared_ptr<const Contexts> contexts;
  std::vector<std::vector<BanditRecord>> records;  // [logger][i]

  int num_loggers() const { return static_cast<int>(records.size()); }
  std::size_t n() const {
    std::size_t total = 0;
    for (const auto& r : records) total += r.size();
    return total;
  }
  std::size_t n_j(int j) const { return records[j].size(); }
  std::vector<double> logger_sizes() const {
    std::vector<double> s;
    for (const auto& r : records) s.push_back(static_cast<double>(r.size()));
    return s;
  }
};

// Replays the supervised set replay[j] times through logger j, sampling one
// action per row and logging the Hamming loss and exact propensity.
MultiLoggerDataset generate_bandit_dataset(const SupervisedDataset& data,
                                           const std::vector<LoggingPolicy>& loggers,
                                           const std::vector<int>& replay_counts,
                                           std::uint64_t seed);

// Stratified split by logger; records are shuffled with rng first.
struct TrainValSplit {
  MultiLoggerDataset train;
  MultiLoggerDataset validation;
};
TrainValSplit split_train_validation(const MultiLoggerDataset& data, double validation_fraction,
                                     Rng& rng);

// h_avg(y|x) = sum_j (n_j / n) h_j(y|x).
double mixture_propensity(std::span<const LoggingPolicy> loggers, std::span<const double> sizes,
                          std::span<const double> x, std::span<const std::uint8_t> y);
SampledAction mixture_sample(std::span<const LoggingPolicy> loggers, std::span<const double> sizes,
                             std::span<const double> x, Rng& rng);

// Line format: j <TAB> y-bits <TAB> delta <TAB> propensity <TAB> x-sparse.
void write_bandit_dataset(const MultiLoggerDataset& data, const std::string& path);
MultiLoggerDataset read_bandit_dataset(const std::string& path);

}  // namespace offpol

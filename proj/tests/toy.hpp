#pragma once

// Shared enumerable toys and brute-force oracles for the test suites. These
// deliberately re-derive quantities with plain loops, independent of the
// library's estimator implementations.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "offpol/data.hpp"
#include "offpol/policies.hpp"
#include "offpol/rng.hpp"

namespace toy {

// Context-independent factorized policy.
struct FixedPolicy final : offpol::FactorizedPolicy {
  std::vector<double> probs;
  int features = 1;

  FixedPolicy(std::vector<double> p, int f = 1) : probs(std::move(p)), features(f) {}

  int num_labels() const override { return static_cast<int>(probs.size()); }
  int num_features() const override { return features; }
  std::vector<double> label_probs(std::span<const double>) const override { return probs; }
};

inline std::vector<std::vector<std::uint8_t>> enumerate_labels(int q) {
  std::vector<std::vector<std::uint8_t>> all;
  all.reserve(1u << q);
  for (int mask = 0; mask < (1 << q); ++mask) {
    std::vector<std::uint8_t> y(q);
    for (int l = 0; l < q; ++l) y[l] = (mask >> l) & 1;
    all.push_back(std::move(y));
  }
  return all;
}

// Deterministic loss table: Hamming distance to a per-context target label.
struct ToyWorld {
  offpol::Contexts contexts;
  std::vector<std::vector<std::uint8_t>> targets;  // y* per context
  int q = 0;

  double loss(int ctx, std::span<const std::uint8_t> y) const {
    return offpol::hamming_loss(y, targets[ctx]);
  }
};

// q labels, `n_ctx` contexts with dim-2 features, targets drawn from seed.
inline ToyWorld make_world(int q, int n_ctx, std::uint64_t seed) {
  ToyWorld w;
  w.q = q;
  offpol::Rng rng(seed);
  w.contexts.dim = 2;
  for (int i = 0; i < n_ctx; ++i) {
    w.contexts.flat.push_back(rng.uniform(-1.0, 1.0));
    w.contexts.flat.push_back(rng.uniform(-1.0, 1.0));
  }
  for (int i = 0; i < n_ctx; ++i) {
    std::vector<std::uint8_t> t(q);
    for (int l = 0; l < q; ++l) t[l] = rng.bernoulli(0.5);
    w.targets.push_back(std::move(t));
  }
  return w;
}

// Logistic policy over the 2-dim toy features with hand-seeded weights.
inline offpol::LoggingPolicy make_toy_policy(int q, std::uint64_t seed, double scale,
                                             double alpha = 1.0) {
  offpol::LoggingPolicy p(2, q);
  offpol::Rng rng(seed);
  for (int l = 0; l < q; ++l)
    for (int f = 0; f <= 2; ++f) p.weight(l, f) = scale * rng.uniform(-1.0, 1.0);
  p.alpha = alpha;
  p.prob_clamp = 0.0;  // oracle tests use unclamped probabilities
  return p;
}

// R(h) = (1/|X|) sum_x sum_y h(y|x) loss(x, y), exhaustive enumeration.
inline double exact_risk(const offpol::FactorizedPolicy& h, const ToyWorld& w) {
  const auto all = enumerate_labels(w.q);
  double risk = 0.0;
  for (int c = 0; c < w.contexts.count(); ++c) {
    const auto probs = h.label_probs(w.contexts.row(c));
    for (const auto& y : all)
      risk += offpol::propensity_from_probs(probs, y) * w.loss(c, y);
  }
  return risk / w.contexts.count();
}

// d2(h||href) = (1/|X|) sum_x sum_y h^2/href, exhaustive enumeration with a
// caller-supplied propensity callback for the reference (so mixtures work).
using CondProb = std::function<double(int ctx, std::span<const std::uint8_t> y)>;

inline double exact_d2(const offpol::FactorizedPolicy& h, const CondProb& href,
                       const ToyWorld& w) {
  const auto all = enumerate_labels(w.q);
  double d2 = 0.0;
  for (int c = 0; c < w.contexts.count(); ++c) {
    const auto probs = h.label_probs(w.contexts.row(c));
    for (const auto& y : all) {
      const double ph = offpol::propensity_from_probs(probs, y);
      d2 += ph * ph / href(c, y);
    }
  }
  return d2 / w.contexts.count();
}

// sup over contexts and labels of h / href.
inline double exact_sup_ratio(const offpol::FactorizedPolicy& h, const CondProb& href,
                              const ToyWorld& w) {
  const auto all = enumerate_labels(w.q);
  double m = 0.0;
  for (int c = 0; c < w.contexts.count(); ++c) {
    const auto probs = h.label_probs(w.contexts.row(c));
    for (const auto& y : all)
      m = std::max(m, offpol::propensity_from_probs(probs, y) / href(c, y));
  }
  return m;
}

// Var_{x~U, y~hj}[(h/hj) * loss], exhaustive enumeration.
inline double exact_logger_variance(const offpol::FactorizedPolicy& h,
                                    const offpol::FactorizedPolicy& hj, const ToyWorld& w) {
  const auto all = enumerate_labels(w.q);
  double mean = 0.0, second = 0.0;
  for (int c = 0; c < w.contexts.count(); ++c) {
    const auto ph = h.label_probs(w.contexts.row(c));
    const auto pj = hj.label_probs(w.contexts.row(c));
    for (const auto& y : all) {
      const double pjv = offpol::propensity_from_probs(pj, y);
      const double u = offpol::propensity_from_probs(ph, y) / pjv * w.loss(c, y);
      mean += pjv * u;
      second += pjv * u * u;
    }
  }
  mean /= w.contexts.count();
  second /= w.contexts.count();
  return second - mean * mean;
}

// One simulated bandit dataset draw: x uniform over contexts, y ~ h_j.
inline offpol::MultiLoggerDataset draw_dataset(const std::vector<offpol::LoggingPolicy>& loggers,
                                               const std::vector<int>& n_per_logger,
                                               const ToyWorld& w, offpol::Rng& rng) {
  offpol::MultiLoggerDataset data;
  data.contexts = std::shared_ptr<const offpol::Contexts>(&w.contexts, [](const offpol::Contexts*) {});
  data.records.resize(loggers.size());
  for (size_t j = 0; j < loggers.size(); ++j) {
    for (int i = 0; i < n_per_logger[j]; ++i) {
      const int c = rng.uniform_int(w.contexts.count());
      auto a = offpol::sample_action(loggers[j], w.contexts.row(c), rng);
      offpol::BanditRecord rec;
      rec.context = c;
      rec.loss = w.loss(c, a.y);
      rec.propensity = a.propensity;
      rec.action = std::move(a.y);
      data.records[j].push_back(std::move(rec));
    }
  }
  return data;
}

}  // namespace toy

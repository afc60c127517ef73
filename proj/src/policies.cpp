#include "offpol/policies.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace offpol {

namespace {

double clamp_prob(double p, double eps) {
  if (eps <= 0.0) return p;
  return std::min(std::max(p, eps), 1.0 - eps);
}

}  // namespace

Tensor FactorizedPolicy::probs_matrix(const Tensor& features) const {
  Tensor out(features.rows, num_labels());
  for (int r = 0; r < features.rows; ++r) {
    std::span<const double> row{features.v.data() + static_cast<size_t>(r) * features.cols,
                                static_cast<size_t>(features.cols)};
    auto probs = label_probs(row);
    std::copy(probs.begin(), probs.end(), out.v.begin() + static_cast<size_t>(r) * out.cols);
  }
  return out;
}

double propensity_from_probs(std::span<const double> probs, std::span<const std::uint8_t> y) {
  if (probs.size() != y.size())
    throw std::invalid_argument("propensity_from_probs: length mismatch");
  double p = 1.0;
  for (size_t i = 0; i < y.size(); ++i) p *= y[i] ? probs[i] : (1.0 - probs[i]);
  return p;
}

double propensity(const FactorizedPolicy& policy, std::span<const double> x,
                  std::span<const std::uint8_t> y) {
  return propensity_from_probs(policy.label_probs(x), y);
}

SampledAction sample_action(const FactorizedPolicy& policy, std::span<const double> x, Rng& rng) {
  const auto probs = policy.label_probs(x);
  SampledAction out;
  out.y.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) out.y[i] = rng.bernoulli(probs[i]) ? 1 : 0;
  out.propensity = propensity_from_probs(probs, out.y);
  return out;
}

std::vector<double> LoggingPolicy::label_probs(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != num_features_)
    throw std::invalid_argument("LoggingPolicy: feature size mismatch");
  std::vector<double> probs(num_labels_);
  for (int l = 0; l < num_labels_; ++l) {
    double z = weight(l, num_features_);  // bias
    for (int f = 0; f < num_features_; ++f) z += weight(l, f) * x[f];
    probs[l] = clamp_prob(1.0 / (1.0 + std::exp(-alpha * z)), prob_clamp);
  }
  return probs;
}

LoggingPolicy train_logger(const SupervisedDataset& data, double fraction, double alpha,
                           const LoggerFitConfig& fit) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("train_logger: fraction must be in (0, 1]");
  if (alpha <= 0.0) throw std::invalid_argument("train_logger: alpha must be positive");

  const int m = static_cast<int>(std::ceil(fraction * data.n));
  const int p = data.num_features;
  const int q = data.num_labels;

  using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  EMat x(m, p + 1);
  EMat y(m, q);
  for (int i = 0; i < m; ++i) {
    for (int f = 0; f < p; ++f) x(i, f) = data.features[static_cast<size_t>(i) * p + f];
    x(i, p) = 1.0;
    for (int l = 0; l < q; ++l) y(i, l) = data.labels[static_cast<size_t>(i) * q + l];
  }

  EMat w = EMat::Zero(p + 1, q);
  for (int step = 0; step < fit.steps; ++step) {
    EMat z = x * w;
    EMat probs = (1.0 + (-z.array()).exp()).inverse().matrix();
    EMat grad = x.transpose() * (probs - y) / m + fit.l2 * w;
    w -= fit.lr * grad;
  }

  LoggingPolicy policy(p, q);
  policy.alpha = alpha;
  policy.prob_clamp = fit.prob_clamp;
  for (int l = 0; l < q; ++l)
    for (int f = 0; f <= p; ++f) policy.weight(l, f) = w(f, l);
  return policy;
}

void LoggingPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  out << "logging-policy " << num_features_ << " " << num_labels_ << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", alpha, prob_clamp);
  out << buf;
  for (int l = 0; l < num_labels_; ++l) {
    for (int f = 0; f <= num_features_; ++f) {
      std::snprintf(buf, sizeof(buf), "%.17g", weight(l, f));
      out << buf << (f == num_features_ ? '\n' : ' ');
    }
  }
}

LoggingPolicy LoggingPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string tag;
  int p = 0, q = 0;
  in >> tag >> p >> q;
  if (tag != "logging-policy" || p <= 0 || q <= 0)
    throw std::runtime_error("bad logging policy file " + path);
  LoggingPolicy policy(p, q);
  in >> policy.alpha >> policy.prob_clamp;
  for (int l = 0; l < q; ++l)
    for (int f = 0; f <= p; ++f) in >> policy.weight(l, f);
  if (!in) throw std::runtime_error("truncated logging policy file " + path);
  return policy;
}

NeuralPolicy::NeuralPolicy(const ad::NetworkSpec& spec, double tau, double prob_clamp)
    : tau(tau), prob_clamp(prob_clamp), net_(spec) {
  if (spec.layers.empty() || spec.layers.back().kind != ad::LayerKind::Sigmoid)
    throw std::invalid_argument("NeuralPolicy: generator spec must end in Sigmoid");
}

std::vector<double> NeuralPolicy::label_probs(std::span<const double> x) const {
  Tensor in(1, static_cast<int>(x.size()), std::vector<double>(x.begin(), x.end()));
  Tensor out = net_.forward_eval(in);
  std::vector<double> probs(out.v.begin(), out.v.end());
  for (double& p : probs) p = clamp_prob(p, prob_clamp);
  return probs;
}

Tensor NeuralPolicy::probs_matrix(const Tensor& features) const {
  Tensor out = net_.forward_eval(features);
  for (double& p : out.v) p = clamp_prob(p, prob_clamp);
  return out;
}

void NeuralPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto& spec = net_.spec();
  out << "neural-policy " << spec.layers.size() << " " << spec.seed << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", tau, prob_clamp);
  out << buf;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case ad::LayerKind::Linear: out << "linear " << l.in << " " << l.out << "\n"; break;
      case ad::LayerKind::BatchNorm: out << "batchnorm " << l.in << "\n"; break;
      case ad::LayerKind::ReLU: out << "relu\n"; break;
      case ad::LayerKind::Sigmoid: out << "sigmoid\n"; break;
    }
  }
  const auto state = net_.snapshot();
  out << state.size() << "\n";
  for (size_t i = 0; i < state.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", state[i]);
    out << buf << ((i + 1) % 8 == 0 || i + 1 == state.size() ? '\n' : ' ');
  }
}

NeuralPolicy NeuralPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string tag;
  size_t layer_count = 0;
  std::uint64_t seed = 0;
  in >> tag >> layer_count >> seed;
  if (tag != "neural-policy") throw std::runtime_error("bad neural policy file " + path);
  double tau = 1.0, clampv = 1e-4;
  in >> tau >> clampv;
  ad::NetworkSpec spec;
  spec.seed = seed;
  for (size_t i = 0; i < layer_count; ++i) {
    std::string kind;
    in >> kind;
    if (kind == "linear") {
      int a = 0, b = 0;
      in >> a >> b;
      spec.layers.push_back({ad::LayerKind::Linear, a, b});
    } else if (kind == "batchnorm") {
      int d = 0;
      in >> d;
      spec.layers.push_back({ad::LayerKind::BatchNorm, d, d});
    } else if (kind == "relu") {
      spec.layers.push_back({ad::LayerKind::ReLU});
    } else if (kind == "sigmoid") {
      spec.layers.push_back({ad::LayerKind::Sigmoid});
    } else {
      throw std::runtime_error("bad layer kind '" + kind + "' in " + path);
    }
  }
  size_t state_size = 0;
  in >> state_size;
  std::vector<double> state(state_size);
  for (auto& v : state) in >> v;
  if (!in) throw std::runtime_error("truncated neural policy file " + path);
  NeuralPolicy policy(spec, tau, clampv);
  policy.net().restore(state);
  return policy;
}

MultiLoggerDataset generate_bandit_dataset(const SupervisedDataset& data,
                                           const std::vector<LoggingPolicy>& loggers,
                                           const std::vector<int>& replay_counts,
                                           std::uint64_t seed) {
  if (loggers.size() != replay_counts.size())
    throw std::invalid_argument("generate_bandit_dataset: loggers/replay_counts size mismatch");
  for (int c : replay_counts)
    if (c < 1) throw std::invalid_argument("generate_bandit_dataset: replay counts must be >= 1");

  auto contexts = std::make_shared<Contexts>();
  contexts->dim = data.num_features;
  contexts->flat = data.features;

  MultiLoggerDataset out;
  out.contexts = contexts;
  out.records.resize(loggers.size());
  for (size_t j = 0; j < loggers.size(); ++j) {
    Rng rng(derive_seed(seed, {0xBAD17ULL, j}));
    auto& recs = out.records[j];
    recs.reserve(static_cast<size_t>(replay_counts[j]) * data.n);
    for (int pass = 0; pass < replay_counts[j]; ++pass) {
      for (int i = 0; i < data.n; ++i) {
        SampledAction a = sample_action(loggers[j], data.feature_row(i), rng);
        BanditRecord rec;
        rec.context = i;
        rec.loss = hamming_loss(a.y, data.label_row(i));
        rec.propensity = a.propensity;
        rec.action = std::move(a.y);
        recs.push_back(std::move(rec));
      }
    }
  }
  return out;
}

TrainValSplit split_train_validation(const MultiLoggerDataset& data, double validation_fraction,
                                     Rng& rng) {
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("split_train_validation: fraction must be in (0, 1)");
  TrainValSplit out;
  out.train.contexts = data.contexts;
  out.validation.contexts = data.contexts;
  out.train.records.resize(data.num_loggers());
  out.validation.records.resize(data.num_loggers());
  for (int j = 0; j < data.num_loggers(); ++j) {
    const auto& recs = data.records[j];
    std::vector<int> idx(recs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    const size_t n_val = static_cast<size_t>(std::floor(validation_fraction * recs.size()));
    const size_t n_train = recs.size() - n_val;
    for (size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? out.train : out.validation).records[j].push_back(recs[idx[i]]);
  }
  return out;
}

double mixture_propensity(std::span<const LoggingPolicy> loggers, std::span<const double> sizes,
                          std::span<const double> x, std::span<const std::uint8_t> y) {
  if (loggers.size() != sizes.size())
    throw std::invalid_argument("mixture_propensity: loggers/sizes mismatch");
  double n = 0.0;
  for (double s : sizes) n += s;
  if (n <= 0.0) throw std::invalid_argument("mixture_propensity: total size must be positive");
  double p = 0.0;
  for (size_t j = 0; j < loggers.size(); ++j)
    p += (sizes[j] / n) * propensity(loggers[j], x, y);
  return p;
}

SampledAction mixture_sample(std::span<const LoggingPolicy> loggers, std::span<const double> sizes,
                             std::span<const double> x, Rng& rng) {
  double n = 0.0;
  for (double s : sizes) n += s;
  const double pick = rng.uniform() * n;
  double acc = 0.0;
  size_t j = loggers.size() - 1;
  for (size_t cand = 0; cand < loggers.size(); ++cand) {
    acc += sizes[cand];
    if (pick < acc) {
      j = cand;
      break;
    }
  }
  const auto probs = loggers[j].label_probs(x);
  SampledAction out;
  out.y.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) out.y[i] = rng.bernoulli(probs[i]) ? 1 : 0;
  out.propensity = mixture_propensity(loggers, sizes, x, out.y);
  return out;
}

void write_bandit_dataset(const MultiLoggerDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  for (int j = 0; j < data.num_loggers(); ++j) {
    for (const auto& rec : data.records[j]) {
      out << j << '\t';
      for (std::uint8_t b : rec.action) out << (b ? '1' : '0');
      std::snprintf(buf, sizeof(buf), "\t%.17g\t%.17g\t", rec.loss, rec.propensity);
      out << buf;
      auto x = data.contexts->row(rec.context);
      bool first = true;
      for (size_t f = 0; f < x.size(); ++f) {
        if (x[f] != 0.0) {
          std::snprintf(buf, sizeof(buf), "%s%zu:%.17g", first ? "" : " ", f + 1, x[f]);
          out << buf;
          first = false;
        }
      }
      out << '\n';
    }
  }
}

MultiLoggerDataset read_bandit_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  struct Row {
    int j;
    BanditRecord rec;
    std::vector<std::pair<int, double>> feats;
  };
  std::vector<Row> rows;
  int max_feat = 0, max_logger = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row row;
    std::string bits, sparse;
    if (!(ss >> row.j >> bits >> row.rec.loss >> row.rec.propensity))
      throw std::runtime_error("bad bandit record at " + path + ":" + std::to_string(lineno));
    row.rec.action.resize(bits.size());
    for (size_t i = 0; i < bits.size(); ++i) row.rec.action[i] = bits[i] == '1' ? 1 : 0;
    while (ss >> sparse) {
      const size_t colon = sparse.find(':');
      if (colon == std::string::npos)
        throw std::runtime_error("bad sparse feature at " + path + ":" + std::to_string(lineno));
      const int idx = std::stoi(sparse.substr(0, colon));
      const double val = std::stod(sparse.substr(colon + 1));
      row.feats.emplace_back(idx, val);
      max_feat = std::max(max_feat, idx);
    }
    max_logger = std::max(max_logger, row.j);
    rows.push_back(std::move(row));
  }

  auto contexts = std::make_shared<Contexts>();
  contexts->dim = max_feat;
  contexts->flat.assign(static_cast<size_t>(rows.size()) * max_feat, 0.0);
  MultiLoggerDataset out;
  out.records.resize(max_logger + 1);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (auto [idx, val] : rows[i].feats)
      contexts->flat[i * max_feat + (idx - 1)] = val;
    rows[i].rec.context = static_cast<int>(i);
    out.records[rows[i].j].push_back(std::move(rows[i].rec));
  }
  out.contexts = contexts;
  return out;
}

}  // namespace offpol

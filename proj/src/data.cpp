#include "offpol/data.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "offpol/rng.hpp"

namespace offpol {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& why) {
  throw std::runtime_error("parse error at " + path + ":" + std::to_string(line) + ": " + why);
}

struct SparseRow {
  std::vector<int> label_idx;
  std::vector<std::pair<int, double>> feats;  // 1-based index
};

}  // namespace

SupervisedDataset parse_multilabel_libsvm(const std::string& path, int min_features,
                                          int min_labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::vector<SparseRow> rows;
  int max_label = min_labels - 1;
  int max_feat = min_features;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    SparseRow row;
    const size_t sep = line.find(' ');
    const std::string label_field = line.substr(0, sep);
    // Empty label field (line starting with a space) means no labels.
    if (!label_field.empty()) {
      size_t pos = 0;
      while (pos <= label_field.size()) {
        size_t comma = label_field.find(',', pos);
        if (comma == std::string::npos) comma = label_field.size();
        const std::string tok = label_field.substr(pos, comma - pos);
        int lbl = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), lbl);
        if (ec != std::errc() || p != tok.data() + tok.size() || lbl < 0)
          parse_fail(path, lineno, "bad label '" + tok + "'");
        row.label_idx.push_back(lbl);
        if (lbl > max_label) max_label = lbl;
        pos = comma + 1;
        if (comma == label_field.size()) break;
      }
    }

    size_t pos = (sep == std::string::npos) ? line.size() : sep;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      size_t end = line.find(' ', pos);
      if (end == std::string::npos) end = line.size();
      const std::string tok = line.substr(pos, end - pos);
      const size_t colon = tok.find(':');
      if (colon == std::string::npos) parse_fail(path, lineno, "feature token '" + tok + "' has no ':'");
      int idx = 0;
      const std::string idx_s = tok.substr(0, colon);
      auto [ip, iec] = std::from_chars(idx_s.data(), idx_s.data() + idx_s.size(), idx);
      if (iec != std::errc() || ip != idx_s.data() + idx_s.size())
        parse_fail(path, lineno, "bad feature index '" + idx_s + "'");
      if (idx <= 0) parse_fail(path, lineno, "feature index must be >= 1, got " + idx_s);
      const std::string val_s = tok.substr(colon + 1);
      char* vend = nullptr;
      const double val = std::strtod(val_s.c_str(), &vend);
      if (vend != val_s.c_str() + val_s.size() || val_s.empty())
        parse_fail(path, lineno, "bad feature value '" + val_s + "'");
      row.feats.emplace_back(idx, val);
      if (idx > max_feat) max_feat = idx;
      pos = end;
    }
    rows.push_back(std::move(row));
  }

  SupervisedDataset data;
  data.name = path;
  data.n = static_cast<int>(rows.size());
  data.num_features = max_feat;
  data.num_labels = max_label + 1;
  if (data.n == 0 || data.num_features <= 0 || data.num_labels <= 0)
    throw std::runtime_error("parse error at " + path + ": empty dataset");
  data.features.assign(static_cast<size_t>(data.n) * data.num_features, 0.0);
  data.labels.assign(static_cast<size_t>(data.n) * data.num_labels, 0);
  for (int i = 0; i < data.n; ++i) {
    for (int lbl : rows[i].label_idx)
      data.labels[static_cast<size_t>(i) * data.num_labels + lbl] = 1;
    for (auto [idx, val] : rows[i].feats)
      data.features[static_cast<size_t>(i) * data.num_features + (idx - 1)] = val;
  }
  return data;
}

void write_multilabel_libsvm(const SupervisedDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  for (int i = 0; i < data.n; ++i) {
    bool first = true;
    for (int l = 0; l < data.num_labels; ++l) {
      if (data.labels[static_cast<size_t>(i) * data.num_labels + l]) {
        if (!first) out << ',';
        out << l;
        first = false;
      }
    }
    for (int f = 0; f < data.num_features; ++f) {
      const double v = data.features[static_cast<size_t>(i) * data.num_features + f];
      if (v != 0.0) {
        std::snprintf(buf, sizeof(buf), " %d:%.17g", f + 1, v);
        out << buf;
      }
    }
    out << '\n';
  }
}

int hamming_loss(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_star) {
  if (y.size() != y_star.size())
    throw std::invalid_argument("hamming_loss: length mismatch (" + std::to_string(y.size()) +
                                " vs " + std::to_string(y_star.size()) + ")");
  int d = 0;
  for (size_t i = 0; i < y.size(); ++i) d += (y[i] != y_star[i]) ? 1 : 0;
  return d;
}

TsvdModel tsvd_fit(const SupervisedDataset& data, int k, std::uint64_t seed) {
  const int n = data.n, p = data.num_features;
  if (k <= 0 || k > p)
    throw std::invalid_argument("tsvd_fit: k must be in [1, p_F], got " + std::to_string(k));

  using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const EMat> X(data.features.data(), n, p);

  const int oversample = 10;
  const int l = std::min(p, k + oversample);
  Rng rng(derive_seed(seed, {0x75764421ULL}));
  EMat omega(p, l);
  for (int i = 0; i < omega.size(); ++i) omega.data()[i] = rng.normal();

  auto orthonormalize = [](const EMat& m) -> EMat {
    Eigen::HouseholderQR<EMat> qr(m);
    EMat q = qr.householderQ() * EMat::Identity(m.rows(), m.cols());
    return q;
  };

  EMat q = orthonormalize(X * omega);  // n x l
  const int power_iters = 10;
  for (int it = 0; it < power_iters; ++it) {
    EMat z = orthonormalize(X.transpose() * q);  // p x l
    q = orthonormalize(X * z);
  }

  EMat b = q.transpose() * X;  // l x p
  Eigen::BDCSVD<EMat> svd(b, Eigen::ComputeThinV);

  TsvdModel model;
  model.input_dim = p;
  model.k = k;
  model.v.resize(static_cast<size_t>(p) * k);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < k; ++c) model.v[static_cast<size_t>(r) * k + c] = svd.matrixV()(r, c);
  model.singular_values.assign(svd.singularValues().data(), svd.singularValues().data() + k);
  return model;
}

SupervisedDataset tsvd_apply(const TsvdModel& model, const SupervisedDataset& data) {
  if (data.num_features != model.input_dim)
    throw std::invalid_argument("tsvd_apply: feature dimension mismatch");
  using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const EMat> X(data.features.data(), data.n, data.num_features);
  Eigen::Map<const EMat> V(model.v.data(), model.input_dim, model.k);

  SupervisedDataset out;
  out.name = data.name;
  out.n = data.n;
  out.num_features = model.k;
  out.num_labels = data.num_labels;
  out.labels = data.labels;
  out.features.resize(static_cast<size_t>(data.n) * model.k);
  Eigen::Map<EMat>(out.features.data(), data.n, model.k) = X * V;
  return out;
}

SupervisedDataset truncated_svd_reduce(const SupervisedDataset& data, int k, std::uint64_t seed) {
  return tsvd_apply(tsvd_fit(data, k, seed), data);
}

}  // namespace offpol

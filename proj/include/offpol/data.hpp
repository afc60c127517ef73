#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace offpol {

// Multi-label dataset with dense features and binary labels.
struct SupervisedDataset {
  std::string name;
  int n = 0;
  int num_features = 0;  // p_F
  int num_labels = 0;    // q_L
  std::vector<double> features;       // n x p_F, row-major
  std::vector<std::uint8_t> labels;   // n x q_L, row-major

  std::span<const double> feature_row(int i) const {
    return {features.data() + static_cast<size_t>(i) * num_features,
            static_cast<size_t>(num_features)};
  }
  std::span<const std::uint8_t> label_row(int i) const {
    return {labels.data() + static_cast<size_t>(i) * num_labels,
            static_cast<size_t>(num_labels)};
  }
};

// LibSVM multi-label text format: `lbl[,lbl...] idx:val idx:val...` with
// 0-based label indices and 1-based sparse feature indices. A line may carry
// an empty label set. min_features/min_labels let callers harmonize the
// train/test dimensionality.
SupervisedDataset parse_multilabel_libsvm(const std::string& path, int min_features = 0,
                                          int min_labels = 0);
void write_multilabel_libsvm(const SupervisedDataset& data, const std::string& path);

// Number of positions where the label vectors disagree.
int hamming_loss(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_star);

// Projection onto the top-k right singular directions, fit by randomized
// subspace iteration (10 power iterations, oversampling 10).
struct TsvdModel {
  int input_dim = 0;
  int k = 0;
  std::vector<double> v;  // input_dim x k, row-major

  std::vector<double> singular_values;
};

TsvdModel tsvd_fit(const SupervisedDataset& data, int k, std::uint64_t seed = 0);
SupervisedDataset tsvd_apply(const TsvdModel& model, const SupervisedDataset& data);
SupervisedDataset truncated_svd_reduce(const SupervisedDataset& data, int k,
                                       std::uint64_t seed = 0);

}  // namespace offpol

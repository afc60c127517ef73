#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "offpol/data.hpp"
#include "offpol/rng.hpp"

using namespace offpol;

namespace {

std::string write_temp(const std::string& content) {
  static int counter = 0;
  std::string path = "/tmp/offpol_data_test_" + std::to_string(counter++) + ".libsvm";
  std::ofstream out(path);
  out << content;
  return path;
}

double frob(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("parses a simple multi-label line") {
  auto path = write_temp("0,2 1:0.5 3:1.0\n");
  auto d = parse_multilabel_libsvm(path, 3, 3);
  CHECK(d.n == 1);
  CHECK(d.num_features == 3);
  CHECK(d.num_labels == 3);
  CHECK(d.labels == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(d.features == std::vector<double>{0.5, 0.0, 1.0});
}

TEST_CASE("handles empty label sets and infers dims") {
  auto path = write_temp("1 2:1.5\n 1:0.25 4:2.0\n0,1 3:-1.0\n");
  auto d = parse_multilabel_libsvm(path);
  CHECK(d.n == 3);
  CHECK(d.num_features == 4);
  CHECK(d.num_labels == 2);
  CHECK(d.label_row(1)[0] == 0);
  CHECK(d.label_row(1)[1] == 0);
  CHECK(d.feature_row(1)[3] == 2.0);
}

TEST_CASE("rejects malformed lines with the line number") {
  auto path = write_temp("0 1:0.5\n1 nonsense\n");
  CHECK_THROWS_WITH_AS(parse_multilabel_libsvm(path), doctest::Contains(":2:"),
                       std::runtime_error);

  auto path2 = write_temp("0 0:0.5\n");
  CHECK_THROWS_WITH_AS(parse_multilabel_libsvm(path2), doctest::Contains("feature index"),
                       std::runtime_error);

  auto path3 = write_temp("0 -3:0.5\n");
  CHECK_THROWS_AS(parse_multilabel_libsvm(path3), std::runtime_error);
}

TEST_CASE("parse -> serialize -> parse round-trips bit-exactly") {
  Rng rng(17);
  SupervisedDataset d;
  d.n = 20;
  d.num_features = 7;
  d.num_labels = 4;
  d.features.resize(20 * 7, 0.0);
  d.labels.resize(20 * 4, 0);
  for (int i = 0; i < d.n; ++i) {
    for (int f = 0; f < d.num_features; ++f)
      if (rng.bernoulli(0.6)) d.features[i * 7 + f] = rng.uniform(-3.0, 3.0);
    for (int l = 0; l < d.num_labels; ++l) d.labels[i * 4 + l] = rng.bernoulli(0.4);
  }
  // Make sure at least one row has no labels at all.
  for (int l = 0; l < 4; ++l) d.labels[3 * 4 + l] = 0;
  // and row 3 must still have a feature so dimensions survive.
  d.features[3 * 7 + 6] = 1.25;

  auto p1 = write_temp("");
  write_multilabel_libsvm(d, p1);
  auto d1 = parse_multilabel_libsvm(p1, d.num_features, d.num_labels);
  auto p2 = write_temp("");
  write_multilabel_libsvm(d1, p2);
  auto d2 = parse_multilabel_libsvm(p2, d.num_features, d.num_labels);

  CHECK(d1.features == d.features);
  CHECK(d1.labels == d.labels);
  CHECK(d2.features == d1.features);
  CHECK(d2.labels == d1.labels);
}

TEST_CASE("hamming loss basics and metric properties") {
  std::vector<std::uint8_t> a{1, 0, 1}, b{1, 1, 1}, z{0, 1, 0};
  CHECK(hamming_loss(a, a) == 0);
  CHECK(hamming_loss(a, z) == 3);  // complement
  CHECK(hamming_loss(b, a) == 1);

  std::vector<std::uint8_t> c6(6, 0), d6(6, 1);
  CHECK(hamming_loss(c6, d6) == 6);

  CHECK_THROWS_AS(hamming_loss(a, c6), std::invalid_argument);

  // symmetry, triangle inequality, bounded by q_L
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int q = 1 + rng.uniform_int(8);
    std::vector<std::uint8_t> x(q), y(q), w(q);
    for (int i = 0; i < q; ++i) {
      x[i] = rng.bernoulli(0.5);
      y[i] = rng.bernoulli(0.5);
      w[i] = rng.bernoulli(0.5);
    }
    CHECK(hamming_loss(x, y) == hamming_loss(y, x));
    CHECK(hamming_loss(x, y) <= q);
    CHECK(hamming_loss(x, w) <= hamming_loss(x, y) + hamming_loss(y, w));
  }
}

TEST_CASE("tsvd: k = p_F preserves the Frobenius norm") {
  Rng rng(23);
  SupervisedDataset d;
  d.n = 30;
  d.num_features = 8;
  d.num_labels = 1;
  d.labels.assign(30, 0);
  d.features.resize(30 * 8);
  for (double& e : d.features) e = rng.uniform(-1.0, 1.0);

  auto reduced = truncated_svd_reduce(d, 8, 1);
  CHECK(frob(reduced.features) == doctest::Approx(frob(d.features)).epsilon(1e-6));
}

TEST_CASE("tsvd: rank-2 matrix is captured exactly by k=2") {
  Rng rng(29);
  const int n = 40, p = 10;
  std::vector<double> a(n * 2), b(2 * p);
  for (double& e : a) e = rng.uniform(-1.0, 1.0);
  for (double& e : b) e = rng.uniform(-1.0, 1.0);
  SupervisedDataset d;
  d.n = n;
  d.num_features = p;
  d.num_labels = 1;
  d.labels.assign(n, 0);
  d.features.assign(n * p, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      for (int r = 0; r < 2; ++r) d.features[i * p + j] += a[i * 2 + r] * b[r * p + j];

  auto reduced = truncated_svd_reduce(d, 2, 2);
  const double explained = frob(reduced.features) / frob(d.features);
  CHECK(explained == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(reduced.num_features == 2);
  CHECK(reduced.labels == d.labels);
}

TEST_CASE("tsvd: k > p_F is rejected") {
  SupervisedDataset d;
  d.n = 3;
  d.num_features = 2;
  d.num_labels = 1;
  d.features = {1, 0, 0, 1, 1, 1};
  d.labels = {0, 1, 0};
  CHECK_THROWS_AS(truncated_svd_reduce(d, 3), std::invalid_argument);
}

TEST_CASE("tsvd: fit on train projects test consistently") {
  Rng rng(31);
  SupervisedDataset train, test;
  train.n = 25;
  test.n = 10;
  train.num_features = test.num_features = 6;
  train.num_labels = test.num_labels = 1;
  train.labels.assign(train.n, 0);
  test.labels.assign(test.n, 0);
  train.features.resize(train.n * 6);
  test.features.resize(test.n * 6);
  for (double& e : train.features) e = rng.uniform(-1.0, 1.0);
  for (double& e : test.features) e = rng.uniform(-1.0, 1.0);

  auto model = tsvd_fit(train, 3, 7);
  auto tr = tsvd_apply(model, train);
  auto te = tsvd_apply(model, test);
  CHECK(tr.num_features == 3);
  CHECK(te.num_features == 3);
  // Projection is linear: row i of output equals X_i * V.
  for (int c = 0; c < 3; ++c) {
    double expect = 0.0;
    for (int f = 0; f < 6; ++f) expect += test.features[f] * model.v[f * 3 + c];
    CHECK(te.features[c] == doctest::Approx(expect).epsilon(1e-12));
  }
}

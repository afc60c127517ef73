#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "offpol/bounds.hpp"
#include "offpol/rng.hpp"

using namespace offpol;

TEST_CASE("eta = 1 collapses the bound to the empirical risk") {
  BoundInputs in;
  in.n_j = {50.0, 50.0};
  in.d2 = {2.0, 3.0};
  in.m = {4.0, 6.0};
  auto rep = generalization_bound(BoundKind::Naive, 1.7, 3.0, 1.0, in);
  CHECK(rep.bound == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(rep.linear_term == 0.0);
  CHECK(rep.sqrt_term == 0.0);
}

TEST_CASE("hand evaluation of the naive bound") {
  // J=1, n=100, L=1, eta=e^-1, d2=2, M=4:
  // R + 2*4/(3*100) + sqrt(2*100*(1/100)^2*2) = R + 0.0266.. + 0.2
  BoundInputs in;
  in.n_j = {100.0};
  in.d2 = {2.0};
  in.m = {4.0};
  auto rep = generalization_bound(BoundKind::Naive, 0.5, 1.0, std::exp(-1.0), in);
  CHECK(rep.linear_term == doctest::Approx(8.0 / 300.0).epsilon(1e-12));
  CHECK(rep.sqrt_term == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rep.bound == doctest::Approx(0.5 + 8.0 / 300.0 + 0.2).epsilon(1e-12));
}

TEST_CASE("lambda-weighted bound at 1/n reproduces the naive bound bit for bit") {
  BoundInputs in;
  in.n_j = {30.0, 70.0};
  in.d2 = {1.5, 2.5};
  in.m = {3.0, 9.0};
  in.lambda = {0.01, 0.01};
  auto naive = generalization_bound(BoundKind::Naive, 0.9, 2.0, 0.1, in);
  auto weighted = generalization_bound(BoundKind::LambdaWeighted, 0.9, 2.0, 0.1, in);
  CHECK(naive.bound == weighted.bound);
  CHECK(naive.linear_term == weighted.linear_term);
  CHECK(naive.sqrt_term == weighted.sqrt_term);
}

TEST_CASE("balanced bound formula") {
  BoundInputs in;
  in.n_j = {25.0, 75.0};
  in.d2_avg = 1.8;
  in.m_avg = 5.0;
  const double eta = 0.1, L = 3.0;
  auto rep = generalization_bound(BoundKind::Balanced, 1.2, L, eta, in);
  const double lg = std::log(1.0 / eta);
  CHECK(rep.linear_term == doctest::Approx(2.0 * L * 5.0 * lg / (3.0 * 100.0)).epsilon(1e-12));
  CHECK(rep.sqrt_term == doctest::Approx(L * std::sqrt(2.0 * 1.8 * lg / 100.0)).epsilon(1e-12));
  CHECK(rep.bound > rep.empirical_risk);
}

TEST_CASE("bound is monotone in eta, d2 and M") {
  BoundInputs in;
  in.n_j = {40.0, 60.0};
  in.d2 = {2.0, 4.0};
  in.m = {5.0, 8.0};
  auto at = [&](double eta, double d2_scale, double m_scale) {
    BoundInputs scaled = in;
    for (double& d : scaled.d2) d *= d2_scale;
    for (double& m : scaled.m) m *= m_scale;
    return generalization_bound(BoundKind::Naive, 1.0, 2.0, eta, scaled).bound;
  };
  // strictly decreasing in eta
  double prev = at(0.01, 1.0, 1.0);
  for (double eta : {0.05, 0.1, 0.5, 0.9}) {
    const double b = at(eta, 1.0, 1.0);
    CHECK(b < prev);
    prev = b;
  }
  // strictly increasing in each d2 and M
  CHECK(at(0.1, 1.5, 1.0) > at(0.1, 1.0, 1.0));
  CHECK(at(0.1, 1.0, 1.5) > at(0.1, 1.0, 1.0));
}

TEST_CASE("invalid eta is rejected") {
  BoundInputs in;
  in.n_j = {10.0};
  in.d2 = {2.0};
  in.m = {3.0};
  CHECK_THROWS_AS(generalization_bound(BoundKind::Naive, 1.0, 1.0, 0.0, in),
                  std::invalid_argument);
  CHECK_THROWS_AS(generalization_bound(BoundKind::Naive, 1.0, 1.0, 1.5, in),
                  std::invalid_argument);
  CHECK_THROWS_AS(generalization_bound(BoundKind::Naive, 1.0, 1.0, -0.2, in),
                  std::invalid_argument);
}

TEST_CASE("bound report serializes to json") {
  BoundInputs in;
  in.n_j = {10.0};
  in.d2 = {2.0};
  in.m = {3.0};
  in.empirical = true;
  auto rep = generalization_bound(BoundKind::Naive, 1.0, 2.0, 0.1, in);
  const std::string js = rep.to_json();
  CHECK(js.find("\"kind\":\"naive\"") != std::string::npos);
  CHECK(js.find("\"empirical\":true") != std::string::npos);
  CHECK(js.find("\"bound\":") != std::string::npos);
}

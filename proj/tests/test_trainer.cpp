#include <doctest.h>

#include <cmath>

#include "offpol/trainer.hpp"
#include "toy.hpp"

using namespace offpol;

namespace {

struct TrainerFixture {
  toy::ToyWorld world = toy::make_world(3, 8, 211);
  std::vector<LoggingPolicy> loggers;
  MultiLoggerDataset data;

  TrainerFixture(int n1 = 120, int n2 = 80) {
    loggers.push_back(toy::make_toy_policy(3, 213, 0.6));
    loggers.push_back(toy::make_toy_policy(3, 215, 2.0));
    Rng rng(217);
    data = toy::draw_dataset(loggers, {n1, n2}, world, rng);
    // contexts in draw_dataset alias the world; give this fixture owning storage
    auto owned = std::make_shared<Contexts>(world.contexts);
    data.contexts = owned;
  }

  TrainConfig config(Method method) const {
    TrainConfig cfg;
    cfg.max_epochs = 30;
    cfg.batch = 32;
    cfg.val_every = 5;
    cfg.patience = 50;
    cfg.gen_hidden = {4};
    cfg.disc_hidden = {8};
    cfg.seed = 12345;
    cfg.constraint.batch = 16;
    cfg.constraint.max_iters = 2;
    (void)method;
    return cfg;
  }
};

SupervisedDataset toy_test_set(const toy::ToyWorld& w) {
  SupervisedDataset d;
  d.n = w.contexts.count();
  d.num_features = w.contexts.dim;
  d.num_labels = w.q;
  d.features = w.contexts.flat;
  for (const auto& t : w.targets) d.labels.insert(d.labels.end(), t.begin(), t.end());
  return d;
}

}  // namespace

TEST_CASE("evaluate_exp: exact expectations") {
  SupervisedDataset test;
  test.n = 1;
  test.num_features = 1;
  test.num_labels = 2;
  test.features = {0.0};
  test.labels = {1, 0};

  // p == y* -> 0
  toy::FixedPolicy perfect({1.0, 0.0}, 1);
  CHECK(evaluate_exp(perfect, test) == doctest::Approx(0.0));

  // p == 0.5 -> q/2
  toy::FixedPolicy half({0.5, 0.5}, 1);
  CHECK(evaluate_exp(half, test) == doctest::Approx(1.0));

  // y* = (1,0), p = (0.8, 0.3) -> 0.2 + 0.3
  toy::FixedPolicy p({0.8, 0.3}, 1);
  CHECK(evaluate_exp(p, test) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("evaluate_exp stays within [0, q_L]") {
  TrainerFixture fx;
  auto test = toy_test_set(fx.world);
  for (std::uint64_t s : {1ull, 2ull, 3ull}) {
    NeuralPolicy pol(ad::make_generator_spec(2, {4}, 3, s), 1.0, 1e-4);
    const double exp_loss = evaluate_exp(pol, test);
    CHECK(exp_loss >= 0.0);
    CHECK(exp_loss <= 3.0);
  }
}

TEST_CASE("max_epochs = 0 returns an initialized policy") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::Naive);
  cfg.max_epochs = 0;
  auto result = train_policy(Method::Naive, fx.data, fx.loggers, cfg);
  REQUIRE(result.policy);
  CHECK(result.epochs_run == 0);
  const double exp_loss = evaluate_exp(*result.policy, toy_test_set(fx.world));
  CHECK(exp_loss >= 0.0);
  CHECK(exp_loss <= 3.0);
}

TEST_CASE("reference methods are rejected by train_policy") {
  TrainerFixture fx;
  CHECK_THROWS_AS(train_policy(Method::Logger1, fx.data, fx.loggers, fx.config(Method::Logger1)),
                  std::invalid_argument);
}

TEST_CASE("zero losses keep the risk at zero for any policy") {
  TrainerFixture fx;
  for (auto& rec : fx.data.records[0]) rec.loss = 0.0;
  for (auto& rec : fx.data.records[1]) rec.loss = 0.0;
  auto cfg = fx.config(Method::Naive);
  cfg.max_epochs = 10;
  auto result = train_policy(Method::Naive, fx.data, fx.loggers, cfg);
  for (const auto& [epoch, metric] : result.val_history) CHECK(metric == 0.0);
}

TEST_CASE("weighted and naive coincide for a single logger") {
  toy::ToyWorld world = toy::make_world(3, 6, 221);
  std::vector<LoggingPolicy> loggers{toy::make_toy_policy(3, 223, 1.0)};
  Rng rng(227);
  auto data = toy::draw_dataset(loggers, {150}, world, rng);
  data.contexts = std::make_shared<Contexts>(world.contexts);

  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.batch = 32;
  cfg.val_every = 5;
  cfg.gen_hidden = {4};
  cfg.seed = 31;

  auto a = train_policy(Method::Naive, data, loggers, cfg);
  auto b = train_policy(Method::Weighted, data, loggers, cfg);
  // lambda* for one logger is exactly 1/n, so the trajectories are identical
  CHECK(a.policy->net().snapshot() == b.policy->net().snapshot());
  REQUIRE(a.val_history.size() == b.val_history.size());
  for (size_t i = 0; i < a.val_history.size(); ++i)
    CHECK(a.val_history[i].second == b.val_history[i].second);
}

TEST_CASE("constrained training with rho = inf matches direct training bitwise") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::Naive);
  cfg.max_epochs = 15;
  auto direct = train_policy(Method::Naive, fx.data, fx.loggers, cfg);

  auto cfg_reg = cfg;
  cfg_reg.constraint.rho = std::numeric_limits<double>::infinity();
  auto reg = train_policy(Method::NaiveReg, fx.data, fx.loggers, cfg_reg);

  CHECK(direct.policy->net().snapshot() == reg.policy->net().snapshot());
  REQUIRE(direct.val_history.size() == reg.val_history.size());
  for (size_t i = 0; i < direct.val_history.size(); ++i)
    CHECK(direct.val_history[i].second == reg.val_history[i].second);
  CHECK(reg.constraint_iterations == 0);
}

TEST_CASE("training is reproducible from the seed") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::WeightedReg);
  cfg.max_epochs = 8;
  auto a = train_policy(Method::WeightedReg, fx.data, fx.loggers, cfg);
  auto b = train_policy(Method::WeightedReg, fx.data, fx.loggers, cfg);
  CHECK(a.policy->net().snapshot() == b.policy->net().snapshot());
  CHECK(a.val_history == b.val_history);
  CHECK(a.constraint_iterations == b.constraint_iterations);
}

TEST_CASE("validation selection returns the best checkpoint") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::Naive);
  cfg.max_epochs = 40;
  cfg.val_every = 4;
  auto result = train_policy(Method::Naive, fx.data, fx.loggers, cfg);
  REQUIRE_FALSE(result.val_history.empty());
  for (const auto& [epoch, metric] : result.val_history)
    CHECK(result.best_val <= metric + 1e-15);
  // the restored checkpoint reproduces the best validation metric
  Rng split_rng(derive_seed(cfg.seed, {1}));
  auto split = split_train_validation(fx.data, cfg.validation_fraction, split_rng);
  const double metric =
      validation_metric(Method::Naive, split.validation, *result.policy, fx.loggers, cfg);
  CHECK(metric == doctest::Approx(result.best_val).epsilon(1e-12));
}

TEST_CASE("direct training reduces the validation risk on an easy toy") {
  // losses strongly favor matching the target labels; training should beat
  // the initial policy
  TrainerFixture fx(200, 200);
  auto cfg = fx.config(Method::Naive);
  cfg.max_epochs = 300;
  cfg.outer_lr = 0.01;
  cfg.val_every = 10;
  cfg.patience = 1000;
  auto result = train_policy(Method::Naive, fx.data, fx.loggers, cfg);
  REQUIRE(result.val_history.size() >= 2);
  CHECK(result.best_val < result.val_history.front().second);
}

TEST_CASE("wcrm graph objective matches the numeric objective") {
  TrainerFixture fx;
  NeuralPolicy pol(ad::make_generator_spec(2, {4}, 3, 777), 1.0, 1e-4);
  auto eval = evaluate_policy(fx.data, pol);
  auto sigma2 = self_normalized_divergences(fx.data, eval);
  auto lambda = compute_lambda_star(sigma2, fx.data.logger_sizes());
  const double numeric = wcrm_objective(fx.data, eval, lambda, 0.7, 50.0).objective;
  const double graph = wcrm_graph_objective(pol, fx.data, lambda, 0.7, 50.0);
  CHECK(graph == doctest::Approx(numeric).epsilon(1e-10));
}

TEST_CASE("wcrm training runs and returns a usable policy") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::Wcrm);
  cfg.max_epochs = 20;
  cfg.val_every = 5;
  auto result = train_policy(Method::Wcrm, fx.data, fx.loggers, cfg);
  REQUIRE(result.policy);
  CHECK_FALSE(result.aborted);
  CHECK(result.epochs_run == 20);
  const double exp_loss = evaluate_exp(*result.policy, toy_test_set(fx.world));
  CHECK(exp_loss >= 0.0);
  CHECK(exp_loss <= 3.0);
}

TEST_CASE("balanced-reg requires the logging policies") {
  TrainerFixture fx;
  std::vector<LoggingPolicy> empty;
  CHECK_THROWS_AS(train_policy(Method::BalancedReg, fx.data, empty, fx.config(Method::BalancedReg)),
                  std::invalid_argument);
}

TEST_CASE("balanced and balanced-reg train end to end") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::Balanced);
  cfg.max_epochs = 10;
  auto direct = train_policy(Method::Balanced, fx.data, fx.loggers, cfg);
  REQUIRE(direct.policy);
  CHECK(direct.bound.has_value());
  CHECK(direct.bound->kind == BoundKind::Balanced);

  auto cfg_reg = fx.config(Method::BalancedReg);
  cfg_reg.max_epochs = 10;
  auto reg = train_policy(Method::BalancedReg, fx.data, fx.loggers, cfg_reg);
  REQUIRE(reg.policy);
  CHECK(reg.constraint_iterations > 0);
}

TEST_CASE("bound report accompanies training results") {
  TrainerFixture fx;
  auto cfg = fx.config(Method::WeightedReg);
  cfg.max_epochs = 6;
  auto result = train_policy(Method::WeightedReg, fx.data, fx.loggers, cfg);
  REQUIRE(result.bound.has_value());
  CHECK(result.bound->kind == BoundKind::LambdaWeighted);
  CHECK(result.bound->inputs.empirical);
  CHECK(result.bound->bound >= result.bound->empirical_risk);
}

TEST_CASE("method names round-trip") {
  for (Method m : {Method::Logger1, Method::Logger2, Method::Wcrm, Method::Naive,
                   Method::NaiveReg, Method::Weighted, Method::WeightedReg, Method::Balanced,
                   Method::BalancedReg})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("bogus"), std::invalid_argument);
}

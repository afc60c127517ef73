#pragma once

#include <string>
#include <vector>

#include "offpol/config.hpp"
#include "offpol/data.hpp"
#include "offpol/policies.hpp"
#include "offpol/trainer.hpp"

namespace offpol {

struct SuiteConfig {
  std::string dataset_name;
  std::string train_path;
  std::string test_path;
  int tsvd_k = 0;  // 0 disables feature reduction

  double logger_fraction = 0.2;
  std::vector<double> alphas{0.05, 2.0};
  LoggerFitConfig logger_fit;

  std::vector<int> replay{4, 4};
  std::vector<Method> methods;
  int seeds = 5;
  std::uint64_t master_seed = 0;

  TrainConfig train;
  // Network widths per learning principle (hidden layers).
  std::vector<int> naive_gen_hidden{10};
  std::vector<int> naive_disc_hidden{59};
  std::vector<int> weighted_gen_hidden{7, 7};
  std::vector<int> weighted_disc_hidden{30};

  std::vector<double> taus{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  std::vector<int> replay_h1{1, 2, 4, 8, 16};

  int threads = 2;
  std::string out_prefix;  // files <prefix>.csv and <prefix>.json when set

  // Applies the per-principle widths for a method.
  TrainConfig train_config_for(Method method) const;
};

SuiteConfig suite_config_from(const Config& cfg);

struct ReportRow {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  int replay_h1 = 0;
  int replay_h2 = 0;
  double tau = 0.0;
  double rho = 0.0;
  double exp_loss = 0.0;
  double val_loss = 0.0;
  int epochs = 0;
  double wallclock_s = 0.0;
  std::string bound_json;  // empty for reference rows
  std::string note;        // abort reasons etc.
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  std::string to_csv() const;  // dataset,method,seed,replay_h1,replay_h2,tau,rho,exp_loss,val_loss,epochs,wallclock_s
  std::string to_json() const;
  void write(const std::string& prefix) const;
};

// One fully specified experiment cell.
struct SuiteCell {
  Method method;
  std::uint64_t seed = 0;
  std::vector<int> replay;
  double tau = 1.0;
};

// Shared per-dataset state: parsed data and the two trained loggers.
struct PreparedData {
  SupervisedDataset train;
  SupervisedDataset test;
  std::vector<LoggingPolicy> loggers;
};

PreparedData prepare_dataset(const SuiteConfig& cfg);

// Runs one cell end to end: bandit generation, training (or reference
// evaluation), EXP on the test set.
ReportRow run_cell(const SuiteConfig& cfg, const PreparedData& prep, const SuiteCell& cell);

// mode: table2 | sweep-replay | sweep-temperature
ExperimentReport run_suite(const SuiteConfig& cfg, const std::string& mode);

}  // namespace offpol

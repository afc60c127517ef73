// Command-line driver: logger preparation, bandit log generation, training,
// evaluation, and the experiment suites.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "offpol/config.hpp"
#include "offpol/suite.hpp"

using namespace offpol;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string method;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double tau = 0.0;
  bool tau_set = false;
  double rho = 0.0;
  bool rho_set = false;
  std::string replay;
  std::string alpha;
};

Config load_config(const CommonArgs& a) {
  Config cfg = a.config_path.empty() ? Config{} : Config::parse_file(a.config_path);
  if (a.seed_set) cfg.set("suite.seed", std::to_string(a.seed));
  if (a.tau_set) cfg.set("constraint.tau", std::to_string(a.tau));
  if (a.rho_set) cfg.set("constraint.rho", std::to_string(a.rho));
  if (!a.replay.empty()) cfg.set("bandit.replay", a.replay);
  if (!a.alpha.empty()) cfg.set("loggers.alphas", a.alpha);
  if (!a.out.empty()) cfg.set("suite.out", a.out);
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool need_method = false) {
  cmd->add_option("--config", a.config_path, "config file (INI-style sections)");
  cmd->add_option("--seed", a.seed, "master seed")->each([&](const std::string&) {
    a.seed_set = true;
  });
  cmd->add_option("--tau", a.tau, "Gumbel-softmax temperature")->each([&](const std::string&) {
    a.tau_set = true;
  });
  cmd->add_option("--rho", a.rho, "constraint threshold scale")->each([&](const std::string&) {
    a.rho_set = true;
  });
  cmd->add_option("--replay", a.replay, "replay counts, e.g. 4,4");
  cmd->add_option("--alpha", a.alpha, "logger stochastic multipliers, e.g. 0.05,2");
  cmd->add_option("--out", a.out, "output path prefix");
  if (need_method)
    cmd->add_option("--method", a.method,
                    "logger1|logger2|wcrm|naive|naive-reg|weighted|weighted-reg|balanced|"
                    "balanced-reg")
        ->required();
}

int cmd_prepare(const CommonArgs& a) {
  SuiteConfig cfg = suite_config_from(load_config(a));
  PreparedData prep = prepare_dataset(cfg);
  const std::string prefix = a.out.empty() ? cfg.dataset_name : a.out;
  for (size_t j = 0; j < prep.loggers.size(); ++j) {
    const std::string path = prefix + ".logger" + std::to_string(j + 1) + ".txt";
    prep.loggers[j].save(path);
    std::printf("logger %zu (alpha=%g) -> %s\n", j + 1, prep.loggers[j].alpha, path.c_str());
  }
  return 0;
}

int cmd_bandit(const CommonArgs& a, const std::string& loggers_prefix) {
  SuiteConfig cfg = suite_config_from(load_config(a));
  PreparedData prep;
  prep.train = parse_multilabel_libsvm(cfg.train_path);
  if (!loggers_prefix.empty()) {
    for (size_t j = 1;; ++j) {
      const std::string path = loggers_prefix + ".logger" + std::to_string(j) + ".txt";
      std::ifstream probe(path);
      if (!probe) break;
      prep.loggers.push_back(LoggingPolicy::load(path));
    }
    if (prep.loggers.empty())
      throw std::runtime_error("no logger files found under prefix " + loggers_prefix);
  } else {
    for (double alpha : cfg.alphas)
      prep.loggers.push_back(
          train_logger(prep.train, cfg.logger_fraction, alpha, cfg.logger_fit));
  }
  auto data = generate_bandit_dataset(prep.train, prep.loggers, cfg.replay,
                                      derive_seed(cfg.master_seed, {0xDA7AULL}));
  const std::string path = a.out.empty() ? cfg.dataset_name + ".bandit.txt" : a.out;
  write_bandit_dataset(data, path);
  std::printf("%zu records (%d loggers) -> %s\n", data.n(), data.num_loggers(), path.c_str());
  return 0;
}

int cmd_train(const CommonArgs& a, const std::string& bandit_path) {
  SuiteConfig cfg = suite_config_from(load_config(a));
  const Method method = method_from_string(a.method);
  PreparedData prep = prepare_dataset(cfg);

  SuiteCell cell{method, cfg.master_seed, cfg.replay, cfg.train.constraint.tau};
  ReportRow row;
  if (bandit_path.empty()) {
    row = run_cell(cfg, prep, cell);
  } else {
    auto data = read_bandit_dataset(bandit_path);
    TrainConfig tcfg = cfg.train_config_for(method);
    tcfg.seed = cfg.master_seed;
    auto result = train_policy(method, data, prep.loggers, tcfg);
    row.dataset = cfg.dataset_name;
    row.method = to_string(method);
    row.seed = cfg.master_seed;
    row.tau = tcfg.constraint.tau;
    row.rho = tcfg.constraint.rho;
    row.exp_loss = evaluate_exp(*result.policy, prep.test);
    row.val_loss = result.best_val;
    row.epochs = result.epochs_run;
    if (result.bound) row.bound_json = result.bound->to_json();
    if (!a.out.empty()) result.policy->save(a.out + ".policy.txt");
  }
  ExperimentReport report;
  report.rows.push_back(row);
  std::fputs(report.to_csv().c_str(), stdout);
  if (!a.out.empty()) report.write(a.out);
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& policy_path) {
  SuiteConfig cfg = suite_config_from(load_config(a));
  SupervisedDataset train = parse_multilabel_libsvm(cfg.train_path);
  SupervisedDataset test =
      parse_multilabel_libsvm(cfg.test_path, train.num_features, train.num_labels);

  std::ifstream probe(policy_path);
  if (!probe) throw std::runtime_error("cannot open policy " + policy_path);
  std::string tag;
  probe >> tag;
  probe.close();
  double exp_loss = 0.0;
  if (tag == "neural-policy") {
    auto policy = NeuralPolicy::load(policy_path);
    exp_loss = evaluate_exp(policy, test);
  } else {
    auto policy = LoggingPolicy::load(policy_path);
    exp_loss = evaluate_exp(policy, test);
  }
  std::printf("EXP = %.6f\n", exp_loss);
  return 0;
}

int cmd_suite(const CommonArgs& a, const std::string& mode) {
  SuiteConfig cfg = suite_config_from(load_config(a));
  ExperimentReport report = run_suite(cfg, mode);
  std::fputs(report.to_csv().c_str(), stdout);
  if (!cfg.out_prefix.empty())
    std::printf("# written to %s.csv and %s.json\n", cfg.out_prefix.c_str(),
                cfg.out_prefix.c_str());
  return 0;
}

int cmd_report(const std::string& in_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open report " + in_path);
  nlohmann::json rows = nlohmann::json::parse(in);

  struct Key {
    std::string dataset, method;
    int replay_h1;
    double tau;
    bool operator<(const Key& o) const {
      return std::tie(dataset, method, replay_h1, tau) <
             std::tie(o.dataset, o.method, o.replay_h1, o.tau);
    }
  };
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) {
    Key k{r["dataset"], r["method"], r["replay_h1"], r["tau"]};
    groups[k].push_back(r["exp_loss"]);
  }
  std::printf("%-10s %-14s %9s %6s %8s %8s %5s\n", "dataset", "method", "replay_h1", "tau",
              "med_EXP", "1/EXP", "runs");
  for (auto& [k, v] : groups) {
    std::sort(v.begin(), v.end());
    const double med = v.size() % 2 ? v[v.size() / 2]
                                    : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    std::printf("%-10s %-14s %9d %6.2f %8.4f %8.4f %5zu\n", k.dataset.c_str(), k.method.c_str(),
                k.replay_h1, k.tau, med, 1.0 / med, v.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy learning from multiple loggers"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string bandit_path, policy_path, loggers_prefix, mode = "table2", report_in;

  auto* prepare = app.add_subcommand("prepare", "train logging policies from supervised data");
  add_common(prepare, args);

  auto* bandit = app.add_subcommand("bandit", "generate a multi-logger bandit log");
  add_common(bandit, args);
  bandit->add_option("--loggers", loggers_prefix, "load loggers saved by `prepare`");

  auto* train = app.add_subcommand("train", "train one method");
  add_common(train, args, true);
  train->add_option("--bandit", bandit_path, "train on an existing bandit log file");

  auto* eval = app.add_subcommand("eval", "expected Hamming loss of a saved policy");
  add_common(eval, args);
  eval->add_option("--policy", policy_path, "policy file")->required();

  auto* suite = app.add_subcommand("suite", "run an experiment grid");
  add_common(suite, args);
  suite->add_option("--mode", mode, "table2 | sweep-replay | sweep-temperature");

  auto* report = app.add_subcommand("report", "summarize a JSON report");
  report->add_option("--in", report_in, "report JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(args);
    if (bandit->parsed()) return cmd_bandit(args, loggers_prefix);
    if (train->parsed()) return cmd_train(args, bandit_path);
    if (eval->parsed()) return cmd_eval(args, policy_path);
    if (suite->parsed()) return cmd_suite(args, mode);
    if (report->parsed()) return cmd_report(report_in);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

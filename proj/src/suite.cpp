#include "offpol/suite.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace offpol {

TrainConfig SuiteConfig::train_config_for(Method method) const {
  TrainConfig cfg = train;
  if (is_weighted_kind(method)) {
    cfg.gen_hidden = weighted_gen_hidden;
    cfg.disc_hidden = weighted_disc_hidden;
  } else {
    cfg.gen_hidden = naive_gen_hidden;
    cfg.disc_hidden = naive_disc_hidden;
  }
  return cfg;
}

SuiteConfig suite_config_from(const Config& c) {
  SuiteConfig s;
  s.dataset_name = c.get("data.name", "dataset");
  s.train_path = c.get("data.train");
  s.test_path = c.get("data.test");
  s.tsvd_k = c.get_int("data.tsvd_k", 0);

  s.logger_fraction = c.get_double("loggers.fraction", 0.2);
  s.alphas = c.get_doubles("loggers.alphas", {0.05, 2.0});
  s.logger_fit.steps = c.get_int("loggers.steps", 500);
  s.logger_fit.lr = c.get_double("loggers.lr", 0.1);
  s.logger_fit.l2 = c.get_double("loggers.l2", 1e-4);

  s.replay = c.get_ints("bandit.replay", {4, 4});
  s.seeds = c.get_int("suite.seeds", 5);
  s.master_seed = c.get_u64("suite.seed", 0);
  s.threads = c.get_int("suite.threads", 2);
  s.out_prefix = c.get("suite.out", "");
  if (c.has("suite.methods")) {
    s.methods.clear();
    std::istringstream ss(c.get("suite.methods"));
    std::string tok;
    while (std::getline(ss, tok, ',')) s.methods.push_back(method_from_string(tok));
  }

  TrainConfig& t = s.train;
  t.max_epochs = c.get_int("train.epochs", t.max_epochs);
  t.outer_lr = c.get_double("train.lr", t.outer_lr);
  t.batch = c.get_int("train.batch", t.batch);
  t.validation_fraction = c.get_double("train.validation", t.validation_fraction);
  t.lambda_every = c.get_int("train.lambda_every", t.lambda_every);
  t.val_every = c.get_int("train.val_every", t.val_every);
  t.patience = c.get_int("train.patience", t.patience);
  t.wcrm_lambda_reg = c.get_double("train.wcrm_lambda_reg", t.wcrm_lambda_reg);
  t.wcrm_clip = c.get_double("train.wcrm_clip", t.wcrm_clip);
  t.prob_clamp = c.get_double("train.prob_clamp", t.prob_clamp);

  ConstraintConfig& k = t.constraint;
  k.rho = c.get_double("constraint.rho", k.rho);
  k.tau = c.get_double("constraint.tau", k.tau);
  k.max_iters = c.get_int("constraint.iters", k.max_iters);
  k.batch = c.get_int("constraint.batch", k.batch);
  k.lr_generator = c.get_double("constraint.lr_generator", k.lr_generator);
  k.lr_discriminator = c.get_double("constraint.lr_discriminator", k.lr_discriminator);

  s.naive_gen_hidden = c.get_ints("nets.naive_gen", s.naive_gen_hidden);
  s.naive_disc_hidden = c.get_ints("nets.naive_disc", s.naive_disc_hidden);
  s.weighted_gen_hidden = c.get_ints("nets.weighted_gen", s.weighted_gen_hidden);
  s.weighted_disc_hidden = c.get_ints("nets.weighted_disc", s.weighted_disc_hidden);

  s.taus = c.get_doubles("sweep.taus", s.taus);
  s.replay_h1 = c.get_ints("sweep.replay_h1", s.replay_h1);
  return s;
}

PreparedData prepare_dataset(const SuiteConfig& cfg) {
  if (cfg.train_path.empty() || cfg.test_path.empty())
    throw std::runtime_error("suite: data.train and data.test paths are required");
  PreparedData prep;
  prep.train = parse_multilabel_libsvm(cfg.train_path);
  prep.test =
      parse_multilabel_libsvm(cfg.test_path, prep.train.num_features, prep.train.num_labels);
  if (prep.test.num_features > prep.train.num_features ||
      prep.test.num_labels > prep.train.num_labels)
    prep.train = parse_multilabel_libsvm(cfg.train_path, prep.test.num_features,
                                         prep.test.num_labels);
  if (cfg.tsvd_k > 0) {
    auto model = tsvd_fit(prep.train, cfg.tsvd_k, derive_seed(cfg.master_seed, {0x75ULL}));
    prep.train = tsvd_apply(model, prep.train);
    prep.test = tsvd_apply(model, prep.test);
  }
  for (double alpha : cfg.alphas)
    prep.loggers.push_back(train_logger(prep.train, cfg.logger_fraction, alpha, cfg.logger_fit));
  return prep;
}

namespace {

std::uint64_t cell_seed(const SuiteConfig& cfg, const SuiteCell& cell) {
  std::uint64_t tag = 0xCE11ULL;
  for (int r : cell.replay) tag = tag * 1000003ULL + static_cast<std::uint64_t>(r);
  return derive_seed(cfg.master_seed, {tag, cell.seed});
}

}  // namespace

ReportRow run_cell(const SuiteConfig& cfg, const PreparedData& prep, const SuiteCell& cell) {
  const auto t0 = std::chrono::steady_clock::now();
  ReportRow row;
  row.dataset = cfg.dataset_name;
  row.method = to_string(cell.method);
  row.seed = cell.seed;
  row.replay_h1 = cell.replay.empty() ? 0 : cell.replay[0];
  row.replay_h2 = cell.replay.size() > 1 ? cell.replay[1] : 0;
  row.tau = cell.tau;
  row.rho = cfg.train.constraint.rho;

  const std::uint64_t seed = cell_seed(cfg, cell);
  auto data = generate_bandit_dataset(prep.train, prep.loggers, cell.replay,
                                      derive_seed(seed, {0xDA7AULL}));

  TrainConfig tcfg = cfg.train_config_for(cell.method);
  tcfg.seed = derive_seed(seed, {0x7EA1ULL});
  tcfg.constraint.tau = cell.tau;

  if (is_reference(cell.method)) {
    const int which = cell.method == Method::Logger1 ? 0 : 1;
    if (which >= static_cast<int>(prep.loggers.size()))
      throw std::runtime_error("run_cell: logger reference index out of range");
    const LoggingPolicy& logger = prep.loggers[which];
    row.exp_loss = evaluate_exp(logger, prep.test);
    Rng split_rng(derive_seed(tcfg.seed, {1}));
    auto split = split_train_validation(data, tcfg.validation_fraction, split_rng);
    row.val_loss = validation_metric(Method::Naive, split.validation, logger, prep.loggers, tcfg);
    row.epochs = 0;
  } else {
    auto result = train_policy(cell.method, data, prep.loggers, tcfg);
    row.exp_loss = evaluate_exp(*result.policy, prep.test);
    row.val_loss = result.best_val;
    row.epochs = result.epochs_run;
    if (result.bound) row.bound_json = result.bound->to_json();
    if (result.aborted) row.note = result.abort_reason;
  }

  row.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

namespace {

std::vector<ReportRow> run_cells(const SuiteConfig& cfg, const PreparedData& prep,
                                 const std::vector<SuiteCell>& cells) {
  std::vector<ReportRow> rows(cells.size());
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(cells.size());
  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(cells.size())));
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        rows[i] = run_cell(cfg, prep, cells[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (size_t i = 0; i < cells.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("cell " + std::to_string(i) + " (" + to_string(cells[i].method) +
                               ", seed " + std::to_string(cells[i].seed) + ") failed: " +
                               errors[i]);
  return rows;
}

std::vector<Method> default_table2_methods() {
  return {Method::Logger1, Method::Logger2, Method::Wcrm,     Method::Naive,
          Method::NaiveReg, Method::Weighted, Method::WeightedReg};
}

}  // namespace

ExperimentReport run_suite(const SuiteConfig& cfg, const std::string& mode) {
  PreparedData prep = prepare_dataset(cfg);
  std::vector<SuiteCell> cells;
  const double default_tau = cfg.train.constraint.tau;

  if (mode == "table2") {
    auto methods = cfg.methods.empty() ? default_table2_methods() : cfg.methods;
    for (Method m : methods)
      for (int s = 0; s < cfg.seeds; ++s)
        cells.push_back({m, static_cast<std::uint64_t>(s), cfg.replay, default_tau});
  } else if (mode == "sweep-replay") {
    auto methods = cfg.methods.empty()
                       ? std::vector<Method>{Method::NaiveReg, Method::WeightedReg}
                       : cfg.methods;
    for (int r1 : cfg.replay_h1)
      for (Method m : methods)
        for (int s = 0; s < cfg.seeds; ++s)
          cells.push_back({m, static_cast<std::uint64_t>(s),
                           std::vector<int>{r1, cfg.replay.size() > 1 ? cfg.replay[1] : 4},
                           default_tau});
  } else if (mode == "sweep-temperature") {
    auto methods = cfg.methods.empty()
                       ? std::vector<Method>{Method::NaiveReg, Method::WeightedReg}
                       : cfg.methods;
    for (double tau : cfg.taus)
      for (Method m : methods)
        for (int s = 0; s < cfg.seeds; ++s) {
          if (!is_constrained(m) && tau != cfg.taus.front()) continue;  // tau-independent
          cells.push_back({m, static_cast<std::uint64_t>(s), cfg.replay,
                           is_constrained(m) ? tau : default_tau});
        }
  } else {
    throw std::invalid_argument("run_suite: unknown mode '" + mode +
                                "' (table2 | sweep-replay | sweep-temperature)");
  }

  ExperimentReport report;
  report.rows = run_cells(cfg, prep, cells);
  if (!cfg.out_prefix.empty()) report.write(cfg.out_prefix);
  return report;
}

std::string ExperimentReport::to_csv() const {
  std::string out = "dataset,method,seed,replay_h1,replay_h2,tau,rho,exp_loss,val_loss,epochs,wallclock_s\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%d,%d,%.17g,%.17g,%.17g,%.17g,%d,%.3f\n",
                  r.dataset.c_str(), r.method.c_str(),
                  static_cast<unsigned long long>(r.seed), r.replay_h1, r.replay_h2, r.tau,
                  r.rho, r.exp_loss, r.val_loss, r.epochs, r.wallclock_s);
    out += buf;
  }
  return out;
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["dataset"] = r.dataset;
    row["method"] = r.method;
    row["seed"] = r.seed;
    row["replay_h1"] = r.replay_h1;
    row["replay_h2"] = r.replay_h2;
    row["tau"] = r.tau;
    row["rho"] = r.rho;
    row["exp_loss"] = r.exp_loss;
    row["val_loss"] = r.val_loss;
    row["epochs"] = r.epochs;
    row["wallclock_s"] = r.wallclock_s;
    if (!r.bound_json.empty()) row["bound"] = nlohmann::json::parse(r.bound_json);
    if (!r.note.empty()) row["note"] = r.note;
    j.push_back(row);
  }
  return j.dump(2);
}

void ExperimentReport::write(const std::string& prefix) const {
  {
    std::ofstream csv(prefix + ".csv");
    if (!csv) throw std::runtime_error("cannot write " + prefix + ".csv");
    csv << to_csv();
  }
  {
    std::ofstream js(prefix + ".json");
    if (!js) throw std::runtime_error("cannot write " + prefix + ".json");
    js << to_json();
  }
}

}  // namespace offpol

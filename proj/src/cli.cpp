#include "twinbox/cli.hpp"

#include "twinbox/closed_loop.hpp"
#include "twinbox/harness.hpp"
#include "twinbox/models.hpp"
#include "twinbox/plant.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace twinbox::cli {

namespace {

using harness::ensure_dir;

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

struct GlobalOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::string data_dir = harness::default_data_dir();
  std::uint64_t seed = 42;
  bool seed_set = false;
  bool verbose = false;
};

KvConfig load_config(const GlobalOptions& opts) {
  KvConfig cfg;
  if (!opts.config_path.empty()) cfg = KvConfig::parse_file(opts.config_path);
  cfg.check_known(harness::known_config_keys());
  if (opts.seed_set || !cfg.has("suite.seed")) {
    cfg.set("suite.seed", std::to_string(opts.seed));
  }
  cfg.set("paths.data", opts.data_dir);
  return cfg;
}

plant::ScenarioSpec load_scenario_by_name(const KvConfig& cfg, const std::string& which) {
  const std::string dir = cfg.get_str("paths.data", harness::default_data_dir());
  const std::string name = which.rfind("scenario", 0) == 0 ? which : "scenario" + which;
  return plant::load_scenario(dir + "/scenarios/" + name + ".cfg");
}

int cmd_generate(const GlobalOptions& opts, const std::string& scenario,
                 const std::string& which) {
  const KvConfig cfg = load_config(opts);
  plant::PlantConfig plant_cfg = plant::PlantConfig::from_config(cfg);
  plant_cfg.rng_seed = cfg.get_u64("suite.seed", 42);
  ensure_dir(opts.out_dir);

  std::vector<std::string> names;
  if (scenario == "all") {
    for (int n = 1; n <= 6; ++n) names.push_back(std::to_string(n));
  } else {
    names.push_back(scenario);
  }
  for (const std::string& n : names) {
    const plant::ScenarioSpec spec = load_scenario_by_name(cfg, n);
    if (which == "test" || which == "both") {
      const Trajectory test = plant::generate_dataset(spec, plant_cfg);
      const std::string path = opts.out_dir + "/" + spec.name + "_test.csv";
      save_trajectory_csv(test, path);
      std::cout << "wrote " << path << " (" << test.samples.size() << " samples)\n";
    }
    if (which == "train" || which == "both") {
      const auto series = plant::generate_training_set(spec, plant_cfg);
      for (std::size_t s = 0; s < series.size(); ++s) {
        const std::string path =
            opts.out_dir + "/" + spec.name + "_train" + std::to_string(s) + ".csv";
        save_trajectory_csv(series[s], path);
        std::cout << "wrote " << path << '\n';
      }
    }
  }
  return 0;
}

int cmd_train(const GlobalOptions& opts, const std::string& model,
              const std::string& scenario) {
  const KvConfig cfg = load_config(opts);
  plant::PlantConfig plant_cfg = plant::PlantConfig::from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("suite.seed", 42);
  plant_cfg.rng_seed = Rng::mix(seed, 1);
  ensure_dir(opts.out_dir);

  const plant::ScenarioSpec spec = load_scenario_by_name(cfg, scenario);
  if (model == "pbm") {
    std::cout << "pbm has no trainable parameters; writing the physics checkpoint only\n";
    const models::PbmPredictor pbm(plant_cfg.params);
    std::ofstream out(opts.out_dir + "/pbm.ckpt", std::ios::binary);
    pbm.save(out);
    std::cout << "wrote " << opts.out_dir << "/pbm.ckpt\n";
    return 0;
  }

  const auto series = plant::generate_training_set(spec, plant_cfg);
  const WindowedDataset windows = make_windows(series, cfg.get_int("suite.lookback", 10), 1);
  const auto [train_ds, val_ds] = chrono_split(windows, cfg.get_double("suite.split_ratio", 0.8));

  std::unique_ptr<models::Predictor> trained;
  nnet::TrainResult history;
  if (model == "arx" || model == "linear") {
    trained = std::make_unique<models::ArxPredictor>(
        models::fit_arx(train_ds, -1, -1, cfg.get_double("train.arx_ridge", 1e-8)));
  } else if (model == "lstm") {
    nnet::TrainConfig tc = models::LstmPredictor::default_train_config();
    tc.epochs = cfg.get_int("train.lstm_epochs", tc.epochs);
    tc.batch_size = cfg.get_int("train.lstm_batch_size", tc.batch_size);
    tc.rng_seed = Rng::mix(seed, 3);
    auto lstm = std::make_unique<models::LstmPredictor>(windows.lookback, 64, 0.2,
                                                        Rng::mix(seed, 2));
    history = lstm->train(train_ds, val_ds, tc);
    trained = std::move(lstm);
  } else if (model == "ham") {
    nnet::TrainConfig tc = models::HamPredictor::default_train_config();
    tc.epochs = cfg.get_int("train.ham_epochs", tc.epochs);
    tc.rng_seed = Rng::mix(seed, 4);
    trained = models::train_ham(plant_cfg.params, train_ds, val_ds, tc, &history);
  } else {
    throw ConfigError("model", "must be arx|pbm|lstm|ham, got " + model);
  }

  const std::string ckpt = opts.out_dir + "/" + model + "_" + spec.name + ".ckpt";
  std::ofstream out(ckpt, std::ios::binary);
  trained->save(out);
  std::cout << "wrote " << ckpt << " (" << trained->checkpoint_bytes() << " bytes)\n";

  if (!history.train_loss.empty()) {
    const std::string loss = opts.out_dir + "/" + model + "_" + spec.name + "_loss.csv";
    std::ofstream lo(loss, std::ios::binary);
    lo << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
      lo << e << ',' << format_double(history.train_loss[e]) << ','
         << format_double(history.val_loss[e]) << '\n';
    }
    std::cout << "wrote " << loss << " (" << history.epochs_run << " epochs, best "
              << history.best_epoch << ")\n";
  }
  return 0;
}

int cmd_evaluate(const GlobalOptions& opts) {
  const KvConfig cfg = load_config(opts);
  ensure_dir(opts.out_dir);
  const harness::ExperimentReport report = harness::run_model_suite(cfg, opts.out_dir);
  harness::write_report(report, opts.out_dir);
  std::cout << harness::render_report_text(report);
  return 0;
}

int cmd_control(const GlobalOptions& opts, const std::string& controller, bool penalty,
                const std::string& ref_spec, int steps, const std::string& variant,
                const std::string& backend) {
  KvConfig cfg = load_config(opts);
  cfg.set("suite.episode_steps", std::to_string(steps));
  cfg.set("suite.profiles", ref_spec);
  std::string name = controller;
  if (controller == "llm") name = "llm-" + variant;
  if (penalty) name += "-p";
  cfg.set("suite.controllers", name);
  cfg.set("llm.backend", backend);
  ensure_dir(opts.out_dir);

  const harness::ExperimentReport report = harness::run_controller_suite(cfg, opts.out_dir);
  harness::write_report(report, opts.out_dir);
  std::cout << harness::render_report_text(report);
  return report.controllers.empty() || report.controllers.front().aborted ? 1 : 0;
}

int cmd_suite(const GlobalOptions& opts, std::string stamp) {
  const KvConfig cfg = load_config(opts);
  if (stamp.empty()) stamp = timestamp_now();
  const std::string root = opts.out_dir + "/runs";
  const harness::ExperimentReport report = harness::run_full_suite(cfg, root, stamp);
  std::cout << harness::render_report_text(report);
  std::cout << "run directory: " << root << "/" << stamp << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  const harness::ExperimentReport report = harness::load_report(dir);
  std::cout << harness::render_report_text(report);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  GlobalOptions opts;
  CLI::App app{"digital-twin testbed for a thermally controlled enclosure"};
  app.require_subcommand(1);
  app.add_option("--config", opts.config_path, "key=value configuration file");
  app.add_option("--out", opts.out_dir, "output directory");
  app.add_option("--data", opts.data_dir, "data directory (scenario files)");
  app.add_flag("-v,--verbose", opts.verbose, "chatty output");
  auto* seed_opt = app.add_option("--seed", opts.seed, "master seed");

  auto* generate = app.add_subcommand("generate", "generate scenario datasets");
  std::string scenario = "1";
  std::string which = "test";
  generate->add_option("--scenario", scenario, "scenario number 1..6 or 'all'");
  generate->add_option("--which", which, "train|test|both")
      ->check(CLI::IsMember({"train", "test", "both"}));

  auto* train = app.add_subcommand("train", "train one predictor");
  std::string model;
  std::string train_scenario = "1";
  train->add_option("model", model, "arx|pbm|lstm|ham")->required();
  train->add_option("--scenario", train_scenario, "scenario providing the training range");

  auto* evaluate = app.add_subcommand("evaluate", "run the six-scenario model suite");

  auto* controlc = app.add_subcommand("control", "run one closed-loop episode");
  std::string controller;
  std::string ref_spec = "staircase:26,29,26.5,29,26@48";
  std::string variant = "simple";
  std::string backend = "mock";
  int steps = 240;
  bool penalty = false;
  controlc->add_option("controller", controller, "mpc|rl|llm")->required();
  controlc->add_flag("--penalty", penalty, "use the actuation-penalty preset");
  controlc->add_option("--ref", ref_spec, "reference profile spec");
  controlc->add_option("--steps", steps, "controlled steps");
  controlc->add_option("--variant", variant, "llm variant: simple|history|prediction");
  controlc->add_option("--backend", backend, "llm backend: mock|http");

  auto* suite = app.add_subcommand("suite", "full experiment matrix");
  std::string stamp;
  suite->add_option("--stamp", stamp, "run directory name (default: UTC timestamp)");

  auto* reportc = app.add_subcommand("report", "re-render a stored report");
  std::string report_dir;
  reportc->add_option("--dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  opts.seed_set = seed_opt->count() > 0;
  try {
    if (generate->parsed()) return cmd_generate(opts, scenario, which);
    if (train->parsed()) return cmd_train(opts, model, train_scenario);
    if (evaluate->parsed()) return cmd_evaluate(opts);
    if (controlc->parsed()) {
      return cmd_control(opts, controller, penalty, ref_spec, steps, variant, backend);
    }
    if (suite->parsed()) return cmd_suite(opts, stamp);
    if (reportc->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace twinbox::cli

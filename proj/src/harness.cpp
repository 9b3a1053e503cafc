#include "twinbox/harness.hpp"

#include "twinbox/closed_loop.hpp"
#include "twinbox/dqn.hpp"
#include "twinbox/llm.hpp"
#include "twinbox/models.hpp"
#include "twinbox/mpc.hpp"
#include "twinbox/plant.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace twinbox::harness {

namespace fs = std::filesystem;
using control::EpisodeConfig;
using control::EpisodeResult;

void ensure_dir(const std::string& path) { fs::create_directories(path); }

std::string default_data_dir() {
#ifdef TWINBOX_DATA_DIR
  return TWINBOX_DATA_DIR;
#else
  return "data";
#endif
}

std::vector<std::string> known_config_keys() {
  return {"plant.*", "suite.*", "train.*", "rl.*", "mpc.*", "llm.*", "paths.*"};
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t string_seed(std::uint64_t base, const std::string& tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ base;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SuiteSetup {
  plant::PlantConfig plant;
  std::string data_dir;
  std::uint64_t master_seed;
};

SuiteSetup suite_setup(const KvConfig& cfg) {
  SuiteSetup s;
  s.plant = plant::PlantConfig::from_config(cfg);
  s.data_dir = cfg.get_str("paths.data", default_data_dir());
  s.master_seed = cfg.get_u64("suite.seed", 42);
  return s;
}

nnet::TrainConfig lstm_train_config(const KvConfig& cfg, std::uint64_t seed) {
  nnet::TrainConfig tc = models::LstmPredictor::default_train_config();
  tc.epochs = cfg.get_int("train.lstm_epochs", tc.epochs);
  tc.learning_rate = cfg.get_double("train.lstm_learning_rate", tc.learning_rate);
  tc.batch_size = cfg.get_int("train.lstm_batch_size", tc.batch_size);
  tc.min_delta = cfg.get_double("train.lstm_min_delta", tc.min_delta);
  tc.patience = cfg.get_int("train.lstm_patience", tc.patience);
  tc.rng_seed = seed;
  return tc;
}

nnet::TrainConfig ham_train_config(const KvConfig& cfg, std::uint64_t seed) {
  nnet::TrainConfig tc = models::HamPredictor::default_train_config();
  tc.epochs = cfg.get_int("train.ham_epochs", tc.epochs);
  tc.learning_rate = cfg.get_double("train.ham_learning_rate", tc.learning_rate);
  tc.batch_size = cfg.get_int("train.ham_batch_size", tc.batch_size);
  tc.min_delta = cfg.get_double("train.ham_min_delta", tc.min_delta);
  tc.patience = cfg.get_int("train.ham_patience", tc.patience);
  tc.rng_seed = seed;
  return tc;
}

void save_loss_history(const nnet::TrainResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    out << e << ',' << format_double(result.train_loss[e]) << ','
        << format_double(result.val_loss[e]) << '\n';
  }
}

void save_checkpoint(const models::Predictor& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  model.save(out);
}

// Open-loop rollout MAE against plant truth, following the feedback scheme:
// seed the window with the first `lookback` sensed samples, then drive with
// the recorded inputs.
double rollout_mae(const models::Predictor& model, const plant::Episode& episode,
                   int lookback, Trajectory* predicted_out) {
  const auto& sensed = episode.sensed.samples;
  const auto& truth = episode.truth.samples;
  const int n = static_cast<int>(sensed.size());
  if (n < lookback + 2) throw std::invalid_argument("rollout_mae: episode too short");

  const std::span<const Sample> history(sensed.data(), static_cast<std::size_t>(lookback));
  std::vector<ControlInput> schedule;
  schedule.reserve(n - lookback);
  for (int k = lookback - 1; k + 1 < n; ++k) schedule.push_back(sensed[k].control);

  const Trajectory predicted = model.rollout(history, schedule);
  double err = 0.0;
  for (std::size_t k = 0; k < predicted.samples.size(); ++k) {
    err += std::abs(predicted.samples[k].state.t_inside -
                    truth[lookback + k].state.t_inside);
  }
  if (predicted_out != nullptr) *predicted_out = predicted;
  return err / static_cast<double>(predicted.samples.size());
}

}  // namespace

// --------------------------------------------------------------------------- model suite

ExperimentReport run_model_suite(const KvConfig& cfg, const std::string& out_dir) {
  const SuiteSetup setup = suite_setup(cfg);
  const int lookback = cfg.get_int("suite.lookback", 10);
  const double split = cfg.get_double("suite.split_ratio", 0.8);
  ensure_dir(out_dir + "/telemetry");
  ensure_dir(out_dir + "/checkpoints");

  std::vector<std::string> names;
  {
    std::stringstream ss(cfg.get_str("suite.scenarios", "1,2,3,4,5,6"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) names.push_back("scenario" + tok);
    }
  }

  std::vector<plant::ScenarioSpec> scenarios;
  for (const auto& name : names) {
    plant::ScenarioSpec spec =
        plant::load_scenario(setup.data_dir + "/scenarios/" + name + ".cfg");
    if (cfg.has("suite.train_series")) {
      spec.train_series = cfg.get_int("suite.train_series", spec.train_series);
    }
    scenarios.push_back(std::move(spec));
  }

  ExperimentReport report;
  report.title = "model suite";
  report.config_hash = cfg.hash();
  report.master_seed = setup.master_seed;

  // Scenarios sharing a training range share trained models.
  std::map<std::pair<double, double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    groups[scenarios[i].train_range].push_back(i);
  }

  for (const auto& [range, members] : groups) {
    const std::string group_tag =
        "train_" + format_double(range.first) + "_" + format_double(range.second);
    const std::uint64_t group_seed = string_seed(setup.master_seed, group_tag);

    plant::PlantConfig gen = setup.plant;
    gen.rng_seed = Rng::mix(group_seed, 1);
    const plant::ScenarioSpec& lead = scenarios[members.front()];
    const std::vector<Trajectory> series = plant::generate_training_set(lead, gen);
    for (std::size_t s = 0; s < series.size(); ++s) {
      save_trajectory_csv(series[s], out_dir + "/telemetry/" + group_tag + "_train" +
                                         std::to_string(s) + ".csv");
    }
    const WindowedDataset windows = make_windows(series, lookback, 1);
    const auto [train_ds, val_ds] = chrono_split(windows, split);

    struct Trained {
      std::string name;
      std::unique_ptr<models::Predictor> model;
      double seconds = 0.0;
      std::size_t bytes = 0;
      std::string error;
    };
    std::vector<Trained> trained;

    // Linear
    {
      Trained t;
      t.name = "linear";
      const auto start = std::chrono::steady_clock::now();
      try {
        t.model = std::make_unique<models::ArxPredictor>(
            models::fit_arx(train_ds, lookback, lookback,
                            cfg.get_double("train.arx_ridge", 1e-8)));
      } catch (const std::exception& e) {
        t.error = e.what();
      }
      t.seconds = seconds_since(start);
      trained.push_back(std::move(t));
    }
    // PBM: no training, the physics is the model.
    {
      Trained t;
      t.name = "pbm";
      t.model = std::make_unique<models::PbmPredictor>(setup.plant.params);
      trained.push_back(std::move(t));
    }
    // LSTM
    {
      Trained t;
      t.name = "lstm";
      const auto start = std::chrono::steady_clock::now();
      try {
        auto lstm = std::make_unique<models::LstmPredictor>(
            lookback, 64, 0.2, Rng::mix(group_seed, 2));
        const nnet::TrainResult r =
            lstm->train(train_ds, val_ds, lstm_train_config(cfg, Rng::mix(group_seed, 3)));
        save_loss_history(r, out_dir + "/telemetry/" + group_tag + "_lstm_loss.csv");
        t.model = std::move(lstm);
      } catch (const std::exception& e) {
        t.error = e.what();
      }
      t.seconds = seconds_since(start);
      trained.push_back(std::move(t));
    }
    // HAM
    {
      Trained t;
      t.name = "ham";
      const auto start = std::chrono::steady_clock::now();
      try {
        nnet::TrainResult r;
        t.model = models::train_ham(setup.plant.params, train_ds, val_ds,
                                    ham_train_config(cfg, Rng::mix(group_seed, 4)), &r);
        save_loss_history(r, out_dir + "/telemetry/" + group_tag + "_ham_loss.csv");
      } catch (const std::exception& e) {
        t.error = e.what();
      }
      t.seconds = seconds_since(start);
      trained.push_back(std::move(t));
    }

    for (auto& t : trained) {
      if (t.model != nullptr) {
        const std::string path =
            out_dir + "/checkpoints/" + t.name + "_" + group_tag + ".ckpt";
        save_checkpoint(*t.model, path);
        t.bytes = t.model->checkpoint_bytes();
      }
    }

    for (const std::size_t idx : members) {
      const plant::ScenarioSpec& scenario = scenarios[idx];
      plant::PlantConfig test_cfg = setup.plant;
      test_cfg.rng_seed = Rng::mix(setup.master_seed, string_seed(0, scenario.name));
      const plant::Episode episode = plant::generate_test_episode(scenario, test_cfg);
      save_trajectory_csv(episode.sensed,
                          out_dir + "/telemetry/" + scenario.name + "_test_sensed.csv");
      save_trajectory_csv(episode.truth,
                          out_dir + "/telemetry/" + scenario.name + "_test_truth.csv");

      for (const auto& t : trained) {
        ModelResult result;
        result.model = t.name;
        result.scenario = scenario.name;
        result.kind = plant::to_string(scenario.kind);
        result.seed = group_seed;
        result.memory_bytes = t.bytes;
        result.train_seconds = t.seconds;
        if (t.model == nullptr) {
          result.failed = true;
          result.error = t.error;
        } else {
          try {
            Trajectory predicted;
            result.mae = rollout_mae(*t.model, episode, lookback, &predicted);
            save_trajectory_csv(predicted, out_dir + "/telemetry/" + scenario.name + "_" +
                                               t.name + "_rollout.csv");
          } catch (const std::exception& e) {
            result.failed = true;
            result.error = e.what();
          }
        }
        report.models.push_back(std::move(result));
      }
    }
  }
  return report;
}

// --------------------------------------------------------------------------- controller suite

namespace {

struct ControllerSetup {
  std::shared_ptr<models::ArxPredictor> arx;
  std::shared_ptr<models::HamPredictor> ham;
  std::shared_ptr<control::DqnAgent> rl_agent;
  std::shared_ptr<control::DqnAgent> rl_agent_penalty;
  double arx_seconds = 0.0;
  double ham_seconds = 0.0;
  double rl_seconds = 0.0;
  double rl_penalty_seconds = 0.0;
};

control::RlConfig rl_config_from(const KvConfig& cfg, bool penalty, std::uint64_t seed) {
  control::RlConfig rl;
  rl.reward = penalty ? control::RewardWeights::off_penalty() : control::RewardWeights::off();
  rl.offline_steps = cfg.get_int("rl.offline_steps", rl.offline_steps);
  rl.online_steps = cfg.get_int("rl.online_steps", rl.online_steps);
  rl.gamma = cfg.get_double("rl.gamma", rl.gamma);
  rl.learning_rate = cfg.get_double("rl.learning_rate", rl.learning_rate);
  rl.replay_capacity = cfg.get_int("rl.replay_capacity", rl.replay_capacity);
  rl.batch_size = cfg.get_int("rl.batch_size", rl.batch_size);
  rl.target_sync = cfg.get_int("rl.target_sync", rl.target_sync);
  rl.warmup_steps = cfg.get_int("rl.warmup_steps", rl.warmup_steps);
  rl.episode_len = cfg.get_int("rl.episode_len", rl.episode_len);
  rl.eps_fraction = cfg.get_double("rl.eps_fraction", rl.eps_fraction);
  rl.seed = seed;
  return rl;
}

control::EnvConfig env_config_from(const KvConfig& cfg, const control::RewardWeights& reward) {
  control::EnvConfig env;
  env.ref_range = {cfg.get_double("rl.ref_low", 24.0), cfg.get_double("rl.ref_high", 30.0)};
  env.init_range = {cfg.get_double("rl.init_low", 22.0), cfg.get_double("rl.init_high", 32.0)};
  env.episode_len = cfg.get_int("rl.episode_len", 240);
  env.reward = reward;
  return env;
}

ControllerSetup prepare_controllers(const KvConfig& cfg, const SuiteSetup& setup,
                                    const std::string& out_dir) {
  ControllerSetup out;
  const std::pair<double, double> band{cfg.get_double("suite.ident_low", 22.0),
                                       cfg.get_double("suite.ident_high", 32.0)};
  plant::PlantConfig gen = setup.plant;
  gen.rng_seed = string_seed(setup.master_seed, "identification");

  const auto ident_start = std::chrono::steady_clock::now();
  const std::vector<Trajectory> ident = plant::generate_identification_set(
      band, gen, cfg.get_int("suite.ident_series", 6), cfg.get_int("suite.ident_steps", 212),
      string_seed(setup.master_seed, "ident-schedule"));
  const WindowedDataset windows = make_windows(ident, 10, 1);
  const auto [train_ds, val_ds] = chrono_split(windows, 0.8);
  out.arx = std::make_shared<models::ArxPredictor>(
      models::fit_arx(train_ds, 10, 10, cfg.get_double("train.arx_ridge", 1e-8)));
  out.arx_seconds = seconds_since(ident_start);

  const auto ham_start = std::chrono::steady_clock::now();
  nnet::TrainResult ham_result;
  out.ham = std::shared_ptr<models::HamPredictor>(
      models::train_ham(setup.plant.params, train_ds, val_ds,
                        ham_train_config(cfg, string_seed(setup.master_seed, "ham-ctrl")),
                        &ham_result));
  out.ham_seconds = seconds_since(ham_start);
  save_loss_history(ham_result, out_dir + "/telemetry/controller_ham_loss.csv");
  save_checkpoint(*out.arx, out_dir + "/checkpoints/controller_linear.ckpt");
  save_checkpoint(*out.ham, out_dir + "/checkpoints/controller_ham.ckpt");

  // Offline training in the hybrid twin, per reward preset.
  for (const bool penalty : {false, true}) {
    const auto start = std::chrono::steady_clock::now();
    control::RlConfig rl = rl_config_from(
        cfg, penalty, string_seed(setup.master_seed, penalty ? "rl-p" : "rl"));
    control::TwinEnv twin(*out.ham, env_config_from(cfg, rl.reward), setup.plant.ambient);
    control::DqnTrainStats stats;
    auto agent = std::make_shared<control::DqnAgent>(control::dqn_train(rl, twin, &stats));
    {
      std::ofstream returns(out_dir + "/telemetry/" +
                                (penalty ? "rl_p_returns.csv" : "rl_returns.csv"),
                            std::ios::binary);
      returns << "episode,return\n";
      for (std::size_t e = 0; e < stats.episode_returns.size(); ++e) {
        returns << e << ',' << format_double(stats.episode_returns[e]) << '\n';
      }
    }
    std::ofstream ck(out_dir + (penalty ? "/checkpoints/rl_p.ckpt" : "/checkpoints/rl.ckpt"),
                     std::ios::binary);
    agent->save(ck);
    if (penalty) {
      out.rl_agent_penalty = std::move(agent);
      out.rl_penalty_seconds = seconds_since(start);
    } else {
      out.rl_agent = std::move(agent);
      out.rl_seconds = seconds_since(start);
    }
  }
  return out;
}

struct ControllerEntry {
  std::string name;
  std::string pair_base;  // penalty twins share the base and thus the seed
  bool penalty;
};

ControllerEntry parse_controller_name(const std::string& name) {
  ControllerEntry e;
  e.name = name;
  e.penalty = name.size() > 2 && name.compare(name.size() - 2, 2, "-p") == 0;
  e.pair_base = e.penalty ? name.substr(0, name.size() - 2) : name;
  return e;
}

std::unique_ptr<control::Controller> build_controller(const ControllerEntry& entry,
                                                      const ControllerSetup& setup,
                                                      const KvConfig& cfg) {
  using namespace control;
  if (entry.pair_base == "mpc") {
    MpcConfig mc = MpcConfig::preset(setup.arx->model(), entry.penalty);
    mc.horizon = cfg.get_int("mpc.horizon", mc.horizon);
    mc.max_iters = cfg.get_int("mpc.max_iters", mc.max_iters);
    mc.grad_tol = cfg.get_double("mpc.grad_tol", mc.grad_tol);
    return std::make_unique<MpcController>(std::move(mc), entry.name);
  }
  if (entry.pair_base == "rl") {
    return std::make_unique<DqnController>(
        entry.penalty ? setup.rl_agent_penalty : setup.rl_agent, entry.name);
  }
  if (entry.pair_base.rfind("llm-", 0) == 0) {
    LlmControllerConfig lc;
    lc.variant = llm_variant_from_string(entry.pair_base.substr(4));
    lc.penalty_prompt = entry.penalty;
    lc.temperature = cfg.get_double("llm.temperature", 0.0);
    lc.candidate_count = cfg.get_int("llm.candidate_count", 7);
    lc.history_neighbors = cfg.get_int("llm.history_neighbors", 5);
    const std::string backend = cfg.get_str("llm.backend", "mock");
    if (backend == "mock") {
      lc.backend = std::make_shared<MockChatBackend>();
    } else if (backend == "http") {
      lc.backend = std::make_shared<HttpChatBackend>(
          cfg.get_str("llm.base_url", "http://127.0.0.1:8080"),
          cfg.get_str("llm.path", "/v1/chat/completions"),
          cfg.get_str("llm.token_env", "TWINBOX_LLM_TOKEN"),
          cfg.get_int("llm.timeout_ms", 30000), cfg.get_str("llm.model", "twinbox-agent"));
    } else {
      throw ConfigError("llm.backend", "must be mock or http");
    }
    if (lc.variant == LlmVariant::prediction) {
      const std::string assist = cfg.get_str("llm.assist_model", "ham");
      if (assist == "ham") lc.assist_model = setup.ham;
      else if (assist == "linear") lc.assist_model = setup.arx;
      else throw ConfigError("llm.assist_model", "must be ham or linear");
    }
    return std::make_unique<LlmController>(std::move(lc), entry.name);
  }
  throw ConfigError("suite.controllers", "unknown controller: " + entry.name);
}

}  // namespace

ExperimentReport run_controller_suite(const KvConfig& cfg, const std::string& out_dir) {
  const SuiteSetup setup = suite_setup(cfg);
  ensure_dir(out_dir + "/telemetry");
  ensure_dir(out_dir + "/checkpoints");

  ExperimentReport report;
  report.title = "controller suite";
  report.config_hash = cfg.hash();
  report.master_seed = setup.master_seed;

  const ControllerSetup controllers = prepare_controllers(cfg, setup, out_dir);

  std::vector<std::string> names;
  {
    std::stringstream ss(cfg.get_str(
        "suite.controllers",
        "mpc,mpc-p,rl,rl-p,llm-simple,llm-simple-p,llm-history,llm-prediction,llm-prediction-p"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) names.push_back(tok);
    }
  }
  std::vector<std::string> profiles;
  {
    std::stringstream ss(
        cfg.get_str("suite.profiles", "staircase:26,29,26.5,29,26@48"));
    std::string tok;
    while (std::getline(ss, tok, ';')) {
      if (!tok.empty()) profiles.push_back(tok);
    }
  }

  EpisodeConfig ep;
  ep.steps = cfg.get_int("suite.episode_steps", 240);
  ep.warmup_steps = cfg.get_int("suite.episode_warmup", 10);

  for (std::size_t pidx = 0; pidx < profiles.size(); ++pidx) {
    const control::ReferenceProfile profile = control::make_reference(profiles[pidx]);
    for (const std::string& name : names) {
      const ControllerEntry entry = parse_controller_name(name);
      ControllerResult result;
      result.controller = name;
      result.profile = profile.name + "#" + std::to_string(pidx);
      result.penalty = entry.penalty;
      // Penalty twins share the plant seed so the comparison is paired.
      result.seed = string_seed(setup.master_seed,
                                entry.pair_base + "|" + profiles[pidx]);
      if (entry.pair_base == "mpc") result.train_seconds = controllers.arx_seconds;
      if (entry.pair_base == "rl") {
        result.train_seconds =
            entry.penalty ? controllers.rl_penalty_seconds : controllers.rl_seconds;
      }
      if (entry.pair_base.rfind("llm-", 0) == 0) {
        result.train_seconds = controllers.ham_seconds;
      }

      try {
        const std::unique_ptr<control::Controller> controller =
            build_controller(entry, controllers, cfg);
        plant::PlantConfig plant_cfg = setup.plant;
        plant_cfg.rng_seed = result.seed;
        plant::PlantSim sim(plant_cfg, setup.plant.ambient);
        const EpisodeResult episode = run_closed_loop(*controller, sim, profile, ep);

        result.mae = episode.mae;
        result.actuation_heater = episode.actuation_heater;
        result.actuation_fan = episode.actuation_fan;
        result.aborted = episode.aborted;
        result.error = episode.abort_reason;
        double mae_true = 0.0;
        const int controlled =
            static_cast<int>(episode.truth.samples.size()) - episode.warmup_steps;
        for (int k = episode.warmup_steps;
             k < static_cast<int>(episode.truth.samples.size()); ++k) {
          mae_true += std::abs(episode.truth.samples[k].state.t_inside - episode.refs[k]);
        }
        result.mae_true = controlled > 0 ? mae_true / controlled : 0.0;

        control::write_telemetry_csv(episode, out_dir + "/telemetry/" + name + "_profile" +
                                                  std::to_string(pidx) + ".csv");
        save_trajectory_csv(episode.truth, out_dir + "/telemetry/" + name + "_profile" +
                                               std::to_string(pidx) + "_truth.csv");
      } catch (const std::exception& e) {
        result.aborted = true;
        result.error = e.what();
      }
      report.controllers.push_back(std::move(result));
    }
  }
  return report;
}

// --------------------------------------------------------------------------- report io

std::vector<AggregateRow> ExperimentReport::aggregates() const {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> sums;
  for (const auto& m : models) {
    if (m.failed) continue;
    auto& [sum, count] = sums[{m.model, m.kind}];
    sum += m.mae;
    ++count;
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, value] : sums) {
    out.push_back(AggregateRow{key.first, key.second, value.first / value.second});
  }
  return out;
}

void ExperimentReport::merge(const ExperimentReport& other) {
  models.insert(models.end(), other.models.begin(), other.models.end());
  controllers.insert(controllers.end(), other.controllers.begin(), other.controllers.end());
  if (title.empty()) title = other.title;
  else if (!other.title.empty()) title += " + " + other.title;
  if (config_hash == 0) config_hash = other.config_hash;
  if (master_seed == 0) master_seed = other.master_seed;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out + "\"";
}

}  // namespace

void write_report(const ExperimentReport& report, const std::string& dir) {
  ensure_dir(dir);

  // Deterministic CSV: one record per row, discriminated by the first column.
  {
    std::ofstream out(dir + "/report.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/report.csv");
    out << "record,name,context,label,mae,mae_true,actuation_heater,actuation_fan,"
           "memory_bytes,failed,error,seed\n";
    out << "meta,title," << csv_field(report.title) << ",,,,,,,,,\n";
    out << "meta,config_hash," << report.config_hash << ",,,,,,,,,\n";
    out << "meta,master_seed," << report.master_seed << ",,,,,,,,,\n";
    for (const auto& m : report.models) {
      out << "model," << m.model << ',' << m.scenario << ',' << m.kind << ','
          << format_double(m.mae) << ",,,," << m.memory_bytes << ',' << (m.failed ? 1 : 0)
          << ',' << csv_field(m.error) << ',' << m.seed << '\n';
    }
    for (const auto& a : report.aggregates()) {
      out << "aggregate," << a.model << ",," << a.kind << ',' << format_double(a.mae)
          << ",,,,,,,\n";
    }
    for (const auto& c : report.controllers) {
      out << "controller," << c.controller << ',' << c.profile << ','
          << (c.penalty ? "penalty" : "no-penalty") << ',' << format_double(c.mae) << ','
          << format_double(c.mae_true) << ',' << format_double(c.actuation_heater) << ','
          << format_double(c.actuation_fan) << ",," << (c.aborted ? 1 : 0) << ','
          << csv_field(c.error) << ',' << c.seed << '\n';
    }
  }

  // Deterministic JSON mirror.
  {
    nlohmann::ordered_json j;
    j["title"] = report.title;
    j["config_hash"] = report.config_hash;
    j["master_seed"] = report.master_seed;
    j["models"] = nlohmann::ordered_json::array();
    for (const auto& m : report.models) {
      j["models"].push_back({{"model", m.model},
                             {"scenario", m.scenario},
                             {"kind", m.kind},
                             {"mae", m.mae},
                             {"memory_bytes", m.memory_bytes},
                             {"failed", m.failed},
                             {"error", m.error},
                             {"seed", m.seed}});
    }
    j["aggregates"] = nlohmann::ordered_json::array();
    for (const auto& a : report.aggregates()) {
      j["aggregates"].push_back({{"model", a.model}, {"kind", a.kind}, {"mae", a.mae}});
    }
    j["controllers"] = nlohmann::ordered_json::array();
    for (const auto& c : report.controllers) {
      j["controllers"].push_back({{"controller", c.controller},
                                  {"profile", c.profile},
                                  {"penalty", c.penalty},
                                  {"mae", c.mae},
                                  {"mae_true", c.mae_true},
                                  {"actuation_heater", c.actuation_heater},
                                  {"actuation_fan", c.actuation_fan},
                                  {"aborted", c.aborted},
                                  {"error", c.error},
                                  {"seed", c.seed}});
    }
    std::ofstream out(dir + "/report.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }

  {
    std::ofstream out(dir + "/report.txt", std::ios::binary);
    out << render_report_text(report);
  }

  // Wall-clock sidecar: traceable but excluded from the determinism contract.
  {
    std::ofstream out(dir + "/timings.csv", std::ios::binary);
    out << "record,name,context,seconds\n";
    for (const auto& m : report.models) {
      out << "model," << m.model << ',' << m.scenario << ','
          << format_double(m.train_seconds) << '\n';
    }
    for (const auto& c : report.controllers) {
      out << "controller," << c.controller << ',' << c.profile << ','
          << format_double(c.train_seconds) << '\n';
    }
  }
}

std::string render_report_text(const ExperimentReport& report) {
  std::ostringstream out;
  char line[256];
  out << "== " << (report.title.empty() ? "report" : report.title) << " ==\n";
  out << "config_hash " << report.config_hash << "  master_seed " << report.master_seed
      << "\n";
  if (!report.models.empty()) {
    out << "\nmodel rollouts (MAE, C):\n";
    std::snprintf(line, sizeof line, "  %-8s %-10s %-14s %10s %12s\n", "model", "scenario",
                  "kind", "mae", "bytes");
    out << line;
    for (const auto& m : report.models) {
      if (m.failed) {
        std::snprintf(line, sizeof line, "  %-8s %-10s %-14s %10s %12s  FAILED: %s\n",
                      m.model.c_str(), m.scenario.c_str(), m.kind.c_str(), "-", "-",
                      m.error.c_str());
      } else {
        std::snprintf(line, sizeof line, "  %-8s %-10s %-14s %10.4f %12zu\n",
                      m.model.c_str(), m.scenario.c_str(), m.kind.c_str(), m.mae,
                      m.memory_bytes);
      }
      out << line;
    }
    out << "\naggregates:\n";
    for (const auto& a : report.aggregates()) {
      std::snprintf(line, sizeof line, "  %-8s %-14s %10.4f\n", a.model.c_str(),
                    a.kind.c_str(), a.mae);
      out << line;
    }
  }
  if (!report.controllers.empty()) {
    out << "\ncontroller episodes:\n";
    std::snprintf(line, sizeof line, "  %-18s %-14s %-10s %8s %9s %8s %8s\n", "controller",
                  "profile", "penalty", "mae", "mae_true", "sum_uh", "sum_uf");
    out << line;
    for (const auto& c : report.controllers) {
      if (c.aborted) {
        std::snprintf(line, sizeof line, "  %-18s %-14s %-10s ABORTED: %s\n",
                      c.controller.c_str(), c.profile.c_str(),
                      c.penalty ? "penalty" : "no-penalty", c.error.c_str());
      } else {
        std::snprintf(line, sizeof line, "  %-18s %-14s %-10s %8.4f %9.4f %8.2f %8.2f\n",
                      c.controller.c_str(), c.profile.c_str(),
                      c.penalty ? "penalty" : "no-penalty", c.mae, c.mae_true,
                      c.actuation_heater, c.actuation_fan);
      }
      out << line;
    }
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

ExperimentReport load_report(const std::string& dir) {
  std::ifstream in(dir + "/report.csv", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + dir + "/report.csv");
  ExperimentReport report;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_row(line);
    if (f.size() < 12) throw std::runtime_error("report.csv: short row: " + line);
    if (f[0] == "meta") {
      if (f[1] == "title") report.title = f[2];
      if (f[1] == "config_hash") report.config_hash = std::stoull(f[2]);
      if (f[1] == "master_seed") report.master_seed = std::stoull(f[2]);
    } else if (f[0] == "model") {
      ModelResult m;
      m.model = f[1];
      m.scenario = f[2];
      m.kind = f[3];
      m.mae = std::strtod(f[4].c_str(), nullptr);
      m.memory_bytes = static_cast<std::size_t>(std::stoull(f[8]));
      m.failed = f[9] == "1";
      m.error = f[10];
      m.seed = std::stoull(f[11]);
      report.models.push_back(std::move(m));
    } else if (f[0] == "controller") {
      ControllerResult c;
      c.controller = f[1];
      c.profile = f[2];
      c.penalty = f[3] == "penalty";
      c.mae = std::strtod(f[4].c_str(), nullptr);
      c.mae_true = std::strtod(f[5].c_str(), nullptr);
      c.actuation_heater = std::strtod(f[6].c_str(), nullptr);
      c.actuation_fan = std::strtod(f[7].c_str(), nullptr);
      c.aborted = f[9] == "1";
      c.error = f[10];
      c.seed = std::stoull(f[11]);
      report.controllers.push_back(std::move(c));
    }
    // aggregate rows are derived, not parsed back
  }

  // Merge the wall-clock sidecar so the round-trip covers the full export.
  std::ifstream timing(dir + "/timings.csv", std::ios::binary);
  if (timing) {
    std::getline(timing, line);
    while (std::getline(timing, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> f = split_csv_row(line);
      if (f.size() < 4) continue;
      const double seconds = std::strtod(f[3].c_str(), nullptr);
      if (f[0] == "model") {
        for (auto& m : report.models) {
          if (m.model == f[1] && m.scenario == f[2]) m.train_seconds = seconds;
        }
      } else if (f[0] == "controller") {
        for (auto& c : report.controllers) {
          if (c.controller == f[1] && c.profile == f[2]) c.train_seconds = seconds;
        }
      }
    }
  }
  return report;
}

ExperimentReport run_full_suite(const KvConfig& cfg, const std::string& out_root,
                                const std::string& stamp) {
  const std::string dir = out_root + "/" + stamp;
  ensure_dir(dir);
  {
    std::ofstream out(dir + "/config.cfg", std::ios::binary);
    out << cfg.canonical();
  }
  ExperimentReport report = run_model_suite(cfg, dir);
  report.merge(run_controller_suite(cfg, dir));
  report.title = "full suite";
  write_report(report, dir);
  return report;
}

}  // namespace twinbox::harness

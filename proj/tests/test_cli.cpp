#include "twinbox/cli.hpp"
#include "twinbox/core.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <sstream>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("twinbox_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

int run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv;
  argv.push_back("twinbox");
  for (const auto& a : args) argv.push_back(a.c_str());
  return twinbox::cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate is deterministic for a fixed seed") {
  TempDir a("gen_a"), b("gen_b");
  CHECK(run_cli({"--out", a.str(), "--data", TWINBOX_DATA_DIR, "--seed", "7", "generate",
                 "--scenario", "1"}) == 0);
  CHECK(run_cli({"--out", b.str(), "--data", TWINBOX_DATA_DIR, "--seed", "7", "generate",
                 "--scenario", "1"}) == 0);
  CHECK(slurp(a.path / "scenario1_test.csv") == slurp(b.path / "scenario1_test.csv"));

  TempDir c("gen_c");
  CHECK(run_cli({"--out", c.str(), "--data", TWINBOX_DATA_DIR, "--seed", "8", "generate",
                 "--scenario", "1"}) == 0);
  CHECK(slurp(a.path / "scenario1_test.csv") != slurp(c.path / "scenario1_test.csv"));
}

TEST_CASE("train lstm emits a checkpoint and a loss history") {
  TempDir dir("train");
  const std::string cfg_path = dir.str() + "/cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[train]\nlstm_epochs = 2\nlstm_batch_size = 64\n[suite]\ntrain_series = 2\n";
  }
  CHECK(run_cli({"--out", dir.str(), "--data", TWINBOX_DATA_DIR, "--config", cfg_path,
                 "train", "lstm", "--scenario", "1"}) == 0);
  CHECK(fs::exists(dir.path / "lstm_scenario1.ckpt"));
  CHECK(fs::exists(dir.path / "lstm_scenario1_loss.csv"));
  const std::string loss = slurp(dir.path / "lstm_scenario1_loss.csv");
  CHECK(loss.rfind("epoch,train_loss,val_loss", 0) == 0);

  CHECK(run_cli({"--out", dir.str(), "--data", TWINBOX_DATA_DIR, "train", "pbm"}) == 0);
  CHECK(fs::exists(dir.path / "pbm.ckpt"));
}

TEST_CASE("control mpc with penalty writes quantization-valid telemetry") {
  TempDir dir("control");
  const std::string cfg_path = dir.str() + "/cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[suite]\nident_series = 3\n";
  }
  CHECK(run_cli({"--out", dir.str(), "--data", TWINBOX_DATA_DIR, "--config", cfg_path,
                 "control", "mpc", "--penalty", "--ref", "staircase:26,28@20", "--steps",
                 "40"}) == 0);
  const fs::path telemetry = dir.path / "telemetry" / "mpc-p_profile0.csv";
  REQUIRE(fs::exists(telemetry));

  std::ifstream in(telemetry);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,T_ref,T_meas,heater_duty,fan_on,reward_or_cost,rationale");
  int rows = 0;
  while (std::getline(in, line)) {
    // heater_duty is field 4; check it sits on the 0.05 grid.
    std::istringstream ss(line);
    std::string field;
    for (int k = 0; k < 4; ++k) std::getline(ss, field, ',');
    const double duty = std::stod(field);
    const double level = duty / twinbox::kHeaterStep;
    CHECK(std::abs(level - std::round(level)) < 1e-9);
    std::getline(ss, field, ',');
    CHECK((field == "0" || field == "1"));
    ++rows;
  }
  CHECK(rows == 50);  // 10 warmup + 40 controlled
}

TEST_CASE("exit codes: bad config key is 2, parse errors are 2") {
  TempDir dir("exit");
  const std::string cfg_path = dir.str() + "/cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[plant]\nh_maxx = 100\n";  // typo -> unknown key
  }
  CHECK(run_cli({"--out", dir.str(), "--config", cfg_path, "generate"}) == 2);
  CHECK(run_cli({"definitely-not-a-subcommand"}) == 2);
  CHECK(run_cli({"train", "not-a-model", "--out", dir.str()}) == 2);
}

TEST_CASE("report subcommand re-renders a stored run") {
  TempDir dir("report");
  const std::string cfg_path = dir.str() + "/cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[suite]\nscenarios = 1\ntrain_series = 2\ncontrollers = llm-simple\n"
        << "profiles = constant:26\nepisode_steps = 15\nident_series = 2\n"
        << "[train]\nlstm_epochs = 1\nham_epochs = 10\n"
        << "[rl]\noffline_steps = 150\nwarmup_steps = 50\nepisode_len = 30\n";
  }
  CHECK(run_cli({"--out", dir.str(), "--data", TWINBOX_DATA_DIR, "--config", cfg_path,
                 "suite", "--stamp", "t0"}) == 0);
  CHECK(run_cli({"report", "--dir", dir.str() + "/runs/t0"}) == 0);
  CHECK(run_cli({"report", "--dir", dir.str() + "/nope"}) == 1);
}

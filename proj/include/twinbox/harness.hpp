#ifndef TWINBOX_HARNESS_HPP
#define TWINBOX_HARNESS_HPP

#include "twinbox/config.hpp"
#include "twinbox/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace twinbox::harness {

// One model evaluated open-loop on one scenario. Wall-clock seconds live in
// the timings sidecar, never in the deterministic report files.
struct ModelResult {
  std::string model;
  std::string scenario;
  std::string kind;  // interpolation | extrapolation
  double mae = 0.0;
  std::size_t memory_bytes = 0;
  bool failed = false;
  std::string error;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;

  bool operator==(const ModelResult&) const = default;
};

// One controller episode on one reference profile.
struct ControllerResult {
  std::string controller;
  std::string profile;
  bool penalty = false;
  double mae = 0.0;       // measured vs reference
  double mae_true = 0.0;  // plant truth vs reference
  double actuation_heater = 0.0;
  double actuation_fan = 0.0;
  bool aborted = false;
  std::string error;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;  // controller preparation (identification/RL)

  bool operator==(const ControllerResult&) const = default;
};

struct AggregateRow {
  std::string model;
  std::string kind;
  double mae = 0.0;

  bool operator==(const AggregateRow&) const = default;
};

struct ExperimentReport {
  std::string title;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::vector<ModelResult> models;
  std::vector<ControllerResult> controllers;

  // Mean MAE per (model, kind) over non-failed scenario runs, in a fixed
  // deterministic order.
  std::vector<AggregateRow> aggregates() const;
  void merge(const ExperimentReport& other);

  bool operator==(const ExperimentReport&) const = default;
};

// Configuration keys understood by the suites (under [plant], [suite],
// [train], [rl], [mpc], [llm], [paths]); see the README for the full list.
std::vector<std::string> known_config_keys();

// Trains the four predictors per training range and rolls them out open-loop
// over the six scenarios; telemetry (datasets, rollouts, loss histories,
// checkpoints) lands under `out_dir`.
ExperimentReport run_model_suite(const KvConfig& cfg, const std::string& out_dir);

// Paired penalty/no-penalty episodes for the configured controllers; RL
// agents are trained offline in the hybrid-model twin first.
ExperimentReport run_controller_suite(const KvConfig& cfg, const std::string& out_dir);

// report.{csv,json,txt} (deterministic) + timings.csv (wall clock).
void write_report(const ExperimentReport& report, const std::string& dir);
ExperimentReport load_report(const std::string& dir);
std::string render_report_text(const ExperimentReport& report);

// Full experiment matrix under <out_root>/<stamp>/; returns the merged report.
ExperimentReport run_full_suite(const KvConfig& cfg, const std::string& out_root,
                                const std::string& stamp);

// Filesystem helpers shared with the CLI.
void ensure_dir(const std::string& path);
std::string default_data_dir();

}  // namespace twinbox::harness

#endif  // TWINBOX_HARNESS_HPP

#include "twinbox/closed_loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace twinbox::control {

// --------------------------------------------------------------------------- references

ReferenceProfile constant_reference(double value) {
  return {"constant", [value](int) { return value; }};
}

ReferenceProfile ramp_reference(double from, double to, int steps) {
  if (steps < 2) throw std::invalid_argument("ramp_reference: steps must be >= 2");
  return {"ramp", [=](int k) {
            const double f = std::clamp(static_cast<double>(k) / (steps - 1), 0.0, 1.0);
            return from + f * (to - from);
          }};
}

ReferenceProfile staircase_reference(std::vector<double> levels, int dwell) {
  if (levels.empty() || dwell < 1) throw std::invalid_argument("staircase_reference: bad spec");
  return {"staircase", [levels = std::move(levels), dwell](int k) {
            const std::size_t idx =
                std::min<std::size_t>(k / dwell, levels.size() - 1);
            return levels[idx];
          }};
}

ReferenceProfile sine_reference(double mean, double amplitude, int period_steps) {
  if (period_steps < 2) throw std::invalid_argument("sine_reference: period must be >= 2");
  return {"sine", [=](int k) {
            return mean +
                   amplitude * std::sin(2.0 * 3.14159265358979323846 * k / period_steps);
          }};
}

ReferenceProfile make_reference(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto parse_list = [](const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
  };

  if (kind == "constant") {
    const auto v = parse_list(args);
    if (v.size() != 1) throw std::invalid_argument("reference: constant:<value>");
    return constant_reference(v[0]);
  }
  if (kind == "ramp") {
    const auto v = parse_list(args);
    if (v.size() != 3) throw std::invalid_argument("reference: ramp:<from>,<to>,<steps>");
    return ramp_reference(v[0], v[1], static_cast<int>(v[2]));
  }
  if (kind == "staircase") {
    const std::size_t at = args.find('@');
    if (at == std::string::npos) {
      throw std::invalid_argument("reference: staircase:<l1,l2,...>@<dwell>");
    }
    return staircase_reference(parse_list(args.substr(0, at)),
                               std::stoi(args.substr(at + 1)));
  }
  if (kind == "sine") {
    const auto v = parse_list(args);
    if (v.size() != 3) throw std::invalid_argument("reference: sine:<mean>,<amp>,<period>");
    return sine_reference(v[0], v[1], static_cast<int>(v[2]));
  }
  throw std::invalid_argument("unknown reference spec: " + spec);
}

// --------------------------------------------------------------------------- loop

EpisodeResult run_closed_loop(Controller& controller, plant::PlantSim& sim,
                              const ReferenceProfile& reference, const EpisodeConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("run_closed_loop: steps must be >= 1");
  const int warmup = std::max(cfg.warmup_steps, controller.min_history());

  EpisodeResult result;
  result.controller = controller.name();
  result.profile = reference.name;
  result.warmup_steps = warmup;
  result.sensed.dt = cfg.dt;
  result.truth.dt = cfg.dt;

  std::vector<Sample> history;
  history.reserve(warmup + cfg.steps);

  auto record = [&](const ThermalState& measured, const ThermalState& truth,
                    const ControlInput& u, double ref, double score,
                    const std::string& rationale) {
    result.sensed.samples.push_back(Sample{measured, u});
    result.truth.samples.push_back(Sample{truth, u});
    result.refs.push_back(ref);
    result.scores.push_back(score);
    result.rationales.push_back(rationale);
  };

  // Zero-input warmup builds the measured history the controllers need.
  for (int k = 0; k < warmup; ++k) {
    const ThermalState measured = sim.read_sensor();
    const ControlInput idle(0, 0);
    history.push_back(Sample{measured, idle});
    record(measured, sim.truth(), idle, reference.at(0), 0.0, "warmup");
    sim.step(idle, cfg.dt);
  }

  double abs_err_sum = 0.0;
  int controlled = 0;
  for (int k = 0; k < cfg.steps; ++k) {
    const ThermalState measured = sim.read_sensor();
    const double ref = reference.at(k);
    history.push_back(Sample{measured, ControlInput(0, 0)});

    ControlInput u(0, 0);
    std::string rationale;
    double score = 0.0;
    try {
      const StepContext ctx{k, cfg.dt, ref, measured, history};
      u = controller.decide(ctx);
      rationale = controller.last_rationale();
      score = controller.last_score();
    } catch (const std::exception& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      history.pop_back();
      break;
    }

    history.back().control = u;
    record(measured, sim.truth(), u, ref, score, rationale);
    abs_err_sum += std::abs(measured.t_inside - ref);
    result.actuation_heater += u.heater_duty;
    result.actuation_fan += u.fan();
    ++controlled;

    try {
      sim.step(u, cfg.dt);
    } catch (const std::exception& e) {
      result.aborted = true;
      result.abort_reason = std::string("plant: ") + e.what();
      break;
    }
  }

  result.mae = controlled > 0 ? abs_err_sum / controlled : 0.0;
  return result;
}

// --------------------------------------------------------------------------- telemetry

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_telemetry_csv(const EpisodeResult& result, std::ostream& out) {
  out << "t,T_ref,T_meas,heater_duty,fan_on,reward_or_cost,rationale\n";
  for (std::size_t k = 0; k < result.sensed.samples.size(); ++k) {
    const Sample& s = result.sensed.samples[k];
    out << format_double(static_cast<double>(k) * result.sensed.dt) << ','
        << format_double(result.refs[k]) << ',' << format_double(s.state.t_inside) << ','
        << format_double(s.control.heater_duty) << ',' << s.control.fan_on << ','
        << format_double(result.scores[k]) << ',' << csv_quote(result.rationales[k]) << '\n';
  }
}

void write_telemetry_csv(const EpisodeResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_telemetry_csv(result, out);
}

// --------------------------------------------------------------------------- controllers

MpcController::MpcController(MpcConfig cfg, std::string name)
    : cfg_(std::move(cfg)), name_(std::move(name)) {
  cfg_.validate();
}

int MpcController::min_history() const {
  return std::max(cfg_.model.p(), cfg_.model.q());
}

ControlInput MpcController::decide(const StepContext& ctx) {
  const MpcSolution sol =
      mpc_step(cfg_, ctx.history, ctx.t_ref, have_warm_ ? &warm_ : nullptr);
  warm_ = sol.plan;
  have_warm_ = true;
  last_cost_ = sol.cost;
  if (!sol.converged) ++nonconverged_;
  return sol.u;
}

DqnController::DqnController(std::shared_ptr<const DqnAgent> agent, std::string name)
    : agent_(std::move(agent)), name_(std::move(name)) {
  if (agent_ == nullptr) throw std::invalid_argument("DqnController: null agent");
}

ControlInput DqnController::decide(const StepContext& ctx) {
  const Observation obs{ctx.measured.t_inside, ctx.measured.t_ambient, ctx.t_ref};
  const int action = agent_->act_index(obs);
  last_q_ = agent_->q_values(obs)[action];
  return action_from_index(action);
}

LlmController::LlmController(LlmControllerConfig cfg, std::string name)
    : cfg_(std::move(cfg)), name_(std::move(name)) {
  cfg_.validate();
}

int LlmController::min_history() const {
  return cfg_.variant == LlmVariant::prediction ? cfg_.assist_model->lookback() : 1;
}

ControlInput LlmController::decide(const StepContext& ctx) {
  // Fold newly completed (state, input, outcome) transitions into the store.
  while (ingested_ + 1 < ctx.history.size()) {
    const Sample& s = ctx.history[ingested_];
    const Sample& next = ctx.history[ingested_ + 1];
    store_.add(HistoryRecord{s.state.t_inside, s.state.t_ambient, s.control.heater_duty,
                             s.control.fan(), next.state.t_inside});
    ++ingested_;
  }
  const LlmDecision decision =
      llm_step(cfg_, ctx.measured, ctx.t_ref, ctx.history, store_);
  last_rationale_ = decision.rationale;
  return decision.u;
}

}  // namespace twinbox::control

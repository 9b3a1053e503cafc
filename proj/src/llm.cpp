#include "twinbox/llm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iterator>
#include <limits>
#include <regex>
#include <sstream>

namespace twinbox::control {

namespace {

std::string num2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* kReplyContract =
    "Reply with a short reasoning and end with exactly one line of the form: "
    "CONTROLS: heater=<multiple of 0.05 in [0,1]> fan=<0 or 1>";

const char* kPenaltyInstruction =
    "Use as little heater and fan actuation as possible while keeping the "
    "temperature near the target.";

}  // namespace

std::string base_prompt(double t_ref, double t_now, double t_ambient, bool penalty) {
  std::string prompt =
      "What should the control values heater_duty_cycle and fan_on be set to in order to "
      "maintain a temperature of " +
      num2(t_ref) + " degrees? The temperature now is " + num2(t_now) +
      " and the ambient temperature is " + num2(t_ambient) +
      " degrees. It is important that the temperature in the enclosure matches the target "
      "temperature exactly.";
  if (penalty) {
    prompt += " ";
    prompt += kPenaltyInstruction;
  }
  return prompt;
}

// --------------------------------------------------------------------------- transport

HttpChatBackend::HttpChatBackend(std::string base_url, std::string path, std::string token_env,
                                 int timeout_ms, std::string model)
    : base_url_(std::move(base_url)),
      path_(std::move(path)),
      token_env_(std::move(token_env)),
      timeout_ms_(timeout_ms),
      model_(std::move(model)) {}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
  client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
  client.set_write_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

  nlohmann::json body;
  body["model"] = request.model.empty() ? model_ : request.model;
  body["temperature"] = request.temperature;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }

  httplib::Headers headers;
  if (const char* token = std::getenv(token_env_.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const httplib::Result res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendTimeoutError("chat endpoint unreachable or timed out: " +
                              httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 200));
  }
  try {
    const nlohmann::json reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed chat completion body: ") + e.what());
  }
}

std::string ScriptedChatBackend::complete(const ChatRequest& request) {
  requests_.push_back(request);
  if (next_ >= replies_.size()) throw BackendError("scripted backend exhausted");
  return replies_[next_++];
}

// --------------------------------------------------------------------------- mock agent

namespace {

std::optional<double> find_number(const std::string& text, const std::string& anchor) {
  const std::size_t at = text.find(anchor);
  if (at == std::string::npos) return std::nullopt;
  const char* p = text.c_str() + at + anchor.size();
  char* end = nullptr;
  const double v = std::strtod(p, &end);
  if (end == p) return std::nullopt;
  return v;
}

struct PromptNumbers {
  double target;
  double now;
  double ambient;
};

std::optional<PromptNumbers> read_prompt_numbers(const std::string& prompt) {
  const auto target = find_number(prompt, "maintain a temperature of ");
  const auto now = find_number(prompt, "temperature now is ");
  const auto ambient = find_number(prompt, "ambient temperature is ");
  if (!target || !now || !ambient) return std::nullopt;
  return PromptNumbers{*target, *now, *ambient};
}

std::string controls_line(double heater, int fan) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "CONTROLS: heater=%.2f fan=%d", heater, fan);
  return buf;
}

// Coarse deadband thermostat; intentionally unrefined so that the
// tool-assisted variants have something to beat.
std::string mock_simple(const PromptNumbers& n, bool penalty) {
  const double err = n.target - n.now;
  const double db = penalty ? 0.6 : 0.3;
  double heater = 0.0;
  int fan = 0;
  std::string reason;
  if (err > db) {
    heater = err > 2.0 ? (penalty ? 0.25 : 0.3) : (penalty ? 0.05 : 0.15);
    reason = "Temperature " + num2(n.now) + " is below the target " + num2(n.target) +
             "; heating.";
  } else if (err < -db) {
    fan = penalty ? (err < -1.5 ? 1 : 0) : 1;
    reason = "Temperature " + num2(n.now) + " is above the target " + num2(n.target) + "; " +
             (fan ? "venting." : "coasting down.");
  } else {
    reason = "Temperature " + num2(n.now) + " is close to the target " + num2(n.target) +
             "; holding.";
  }
  return reason + "\n" + controls_line(heater, fan);
}

struct MockOption {
  double heater;
  int fan;
  double predicted;
};

std::vector<MockOption> read_options(const std::string& prompt) {
  std::vector<MockOption> options;
  std::istringstream ss(prompt);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("OPTION", 0) != 0) continue;
    const auto heater = find_number(line, "heater=");
    const auto fan = find_number(line, "fan=");
    const auto predicted = find_number(line, "predicted=");
    if (heater && fan && predicted) {
      options.push_back({*heater, static_cast<int>(*fan + 0.5), *predicted});
    }
  }
  return options;
}

std::string mock_choose(const PromptNumbers& n, const std::string& prompt, bool penalty) {
  const std::vector<MockOption> options = read_options(prompt);
  if (options.empty()) return mock_simple(n, penalty);
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& o : options) best_err = std::min(best_err, std::abs(o.predicted - n.target));
  std::size_t pick = 0;
  double pick_effort = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < options.size(); ++k) {
    const double err = std::abs(options[k].predicted - n.target);
    // Under a penalty instruction any near-best option with less actuation
    // wins; otherwise strictly the smallest predicted error.
    const double slack = penalty ? 0.15 : 0.0;
    if (err <= best_err + slack) {
      const double effort = options[k].heater + 0.5 * options[k].fan;
      if (effort < pick_effort) {
        pick_effort = effort;
        pick = k;
      }
    }
  }
  const MockOption& o = options[pick];
  return "Option " + std::to_string(pick + 1) + " lands closest to " + num2(n.target) +
         " (predicted " + num2(o.predicted) + ").\n" + controls_line(o.heater, o.fan);
}

std::string mock_propose(const PromptNumbers& n, const std::string& prompt) {
  const auto count = find_number(prompt, "Propose ");
  const int k = count ? static_cast<int>(*count) : 5;
  static const std::pair<double, int> ladder[] = {
      {0.0, 0}, {0.05, 0}, {0.1, 0}, {0.15, 0}, {0.25, 0},
      {0.4, 0}, {0.0, 1},  {0.6, 0}, {0.1, 1},  {1.0, 0}};
  std::string out = "Spanning the actuation range around the target " + num2(n.target) + ".\n";
  const int limit = std::min(k, static_cast<int>(std::size(ladder)));
  for (int i = 0; i < limit; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "CANDIDATE: heater=%.2f fan=%d\n", ladder[i].first,
                  ladder[i].second);
    out += buf;
  }
  return out;
}

std::string mock_history(const PromptNumbers& n, const std::string& prompt, bool penalty) {
  // Lines of the form: PAST: T=.. heater=.. fan=.. -> next=..
  struct Past {
    double t, heater, fan, next;
  };
  std::vector<Past> records;
  std::istringstream ss(prompt);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("PAST:", 0) != 0) continue;
    const auto t = find_number(line, "T=");
    const auto heater = find_number(line, "heater=");
    const auto fan = find_number(line, "fan=");
    const auto next = find_number(line, "next=");
    if (t && heater && fan && next) records.push_back({*t, *heater, *fan, *next});
  }
  if (records.empty()) return mock_simple(n, penalty);
  std::size_t pick = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < records.size(); ++k) {
    const double score =
        std::abs(records[k].next - n.target) + 0.1 * std::abs(records[k].t - n.now);
    if (score < best) {
      best = score;
      pick = k;
    }
  }
  const Past& p = records[pick];
  return "A similar past step from " + num2(p.t) + " reached " + num2(p.next) + ".\n" +
         controls_line(p.heater, static_cast<int>(p.fan + 0.5));
}

}  // namespace

std::string MockChatBackend::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw BackendError("mock: empty request");
  const std::string& prompt = request.messages.back().content;
  const auto numbers = read_prompt_numbers(prompt);
  if (!numbers) throw BackendError("mock: prompt lacks the temperature placeholders");
  const bool penalty = prompt.find("as little heater and fan actuation") != std::string::npos;

  if (prompt.find("OPTION 1:") != std::string::npos) {
    return mock_choose(*numbers, prompt, penalty);
  }
  if (prompt.find("Propose ") != std::string::npos) {
    return mock_propose(*numbers, prompt);
  }
  if (prompt.find("PAST:") != std::string::npos ||
      prompt.find("No past observations") != std::string::npos) {
    return mock_history(*numbers, prompt, penalty);
  }
  return mock_simple(*numbers, penalty);
}

// --------------------------------------------------------------------------- parsing

std::optional<ParsedControls> parse_controls(const std::string& reply) {
  static const std::regex line_re(
      R"(CONTROLS:\s*heater\s*=\s*([-+0-9.eE]+)\s+fan\s*=\s*([01])\b)");
  std::smatch m;
  std::string rationale;
  std::optional<ParsedControls> found;
  std::istringstream ss(reply);
  std::string line;
  while (std::getline(ss, line)) {
    if (std::regex_search(line, m, line_re)) {
      found = ParsedControls{std::stod(m[1]), std::stoi(m[2]), ""};
    } else if (!line.empty()) {
      rationale += rationale.empty() ? line : "\n" + line;
    }
  }
  if (found) found->rationale = rationale;
  return found;
}

// --------------------------------------------------------------------------- retrieval

std::vector<HistoryRecord> HistoryStore::nearest(double t_now, double t_ref, int k) const {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const double d_outcome = records_[i].t_next - t_ref;
    const double d_state = records_[i].t_inside - t_now;
    scored.emplace_back(d_outcome * d_outcome + 0.25 * d_state * d_state, i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<HistoryRecord> out;
  for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i) {
    out.push_back(records_[scored[i].second]);
  }
  return out;
}

// --------------------------------------------------------------------------- controller step

std::string to_string(LlmVariant v) {
  switch (v) {
    case LlmVariant::simple: return "simple";
    case LlmVariant::history: return "history";
    case LlmVariant::prediction: return "prediction";
  }
  return "simple";
}

LlmVariant llm_variant_from_string(const std::string& s) {
  if (s == "simple") return LlmVariant::simple;
  if (s == "history" || s == "sql") return LlmVariant::history;
  if (s == "prediction" || s == "assisted") return LlmVariant::prediction;
  throw std::invalid_argument("unknown llm variant: " + s);
}

void LlmControllerConfig::validate() const {
  if (backend == nullptr) throw std::invalid_argument("LlmControllerConfig: backend required");
  if (variant == LlmVariant::prediction) {
    if (assist_model == nullptr) {
      throw std::invalid_argument("LlmControllerConfig: prediction variant needs assist_model");
    }
    if (candidate_count < 2) {
      throw std::invalid_argument("LlmControllerConfig: candidate_count must be >= 2");
    }
  }
  if (variant == LlmVariant::history && history_neighbors < 1) {
    throw std::invalid_argument("LlmControllerConfig: history_neighbors must be >= 1");
  }
}

namespace {

std::string ask(const LlmControllerConfig& cfg, const std::string& prompt) {
  ChatRequest request;
  request.temperature = cfg.temperature;
  request.messages.push_back({"system",
                              "You control the heater duty cycle and fan of a small "
                              "thermally regulated enclosure."});
  request.messages.push_back({"user", prompt});
  return cfg.backend->complete(request);
}

// One retry with an explicit format reminder before giving up.
ParsedControls ask_for_controls(const LlmControllerConfig& cfg, const std::string& prompt) {
  const std::string first = ask(cfg, prompt);
  if (const auto parsed = parse_controls(first)) return *parsed;
  const std::string reminder =
      prompt +
      "\nYour previous reply could not be parsed. End with exactly one line of the form: "
      "CONTROLS: heater=<decimal between 0 and 1> fan=<0 or 1>";
  const std::string second = ask(cfg, reminder);
  if (const auto parsed = parse_controls(second)) return *parsed;
  throw ReplyParseError("backend reply carried no parsable CONTROLS line after retry");
}

std::vector<ControlInput> parse_candidates(const std::string& reply) {
  std::vector<ControlInput> out;
  std::istringstream ss(reply);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("CANDIDATE:", 0) != 0) continue;
    const auto heater = find_number(line, "heater=");
    const auto fan = find_number(line, "fan=");
    if (heater && fan) out.push_back(quantize_control(*heater, *fan));
  }
  return out;
}

}  // namespace

LlmDecision llm_step(const LlmControllerConfig& cfg, const ThermalState& measured,
                     double t_ref, std::span<const Sample> history, HistoryStore& store) {
  cfg.validate();
  const std::string base =
      base_prompt(t_ref, measured.t_inside, measured.t_ambient, cfg.penalty_prompt);

  std::string prompt = base;
  switch (cfg.variant) {
    case LlmVariant::simple:
      break;

    case LlmVariant::history: {
      const auto neighbors =
          store.nearest(measured.t_inside, t_ref, cfg.history_neighbors);
      if (neighbors.empty()) {
        prompt += "\nNo past observations are available yet.";
      } else {
        prompt += "\nPast observations closest to the current situation and target:";
        for (const auto& r : neighbors) {
          char buf[128];
          std::snprintf(buf, sizeof buf, "\nPAST: T=%.2f heater=%.2f fan=%d -> next=%.2f",
                        r.t_inside, r.heater, static_cast<int>(r.fan + 0.5), r.t_next);
          prompt += buf;
        }
      }
      break;
    }

    case LlmVariant::prediction: {
      const std::string propose_prompt =
          base + "\nPropose " + std::to_string(cfg.candidate_count) +
          " candidate control settings to evaluate in a simulator. Reply with one line per "
          "candidate of the form: CANDIDATE: heater=<multiple of 0.05 in [0,1]> fan=<0 or 1>";
      std::vector<ControlInput> candidates = parse_candidates(ask(cfg, propose_prompt));
      if (candidates.empty()) {
        const std::string retry = propose_prompt +
                                  "\nYour previous reply could not be parsed. Use exactly the "
                                  "CANDIDATE line format.";
        candidates = parse_candidates(ask(cfg, retry));
        if (candidates.empty()) {
          throw ReplyParseError("backend proposed no parsable CANDIDATE lines after retry");
        }
      }
      prompt += "\nCandidate controls and predicted next temperature from the simulator:";
      const int lookback = cfg.assist_model->lookback();
      if (static_cast<int>(history.size()) < lookback) {
        throw std::invalid_argument("llm_step: history shorter than the assist model lookback");
      }
      for (std::size_t k = 0; k < candidates.size(); ++k) {
        const ThermalState predicted =
            cfg.assist_model->predict_step(history.last(lookback), candidates[k]);
        char buf[128];
        std::snprintf(buf, sizeof buf, "\nOPTION %zu: heater=%.2f fan=%d -> predicted=%.2f",
                      k + 1, candidates[k].heater_duty, candidates[k].fan_on,
                      predicted.t_inside);
        prompt += buf;
      }
      prompt += "\nChoose the option that best reaches the target.";
      break;
    }
  }

  prompt += "\n";
  prompt += kReplyContract;

  const ParsedControls parsed = ask_for_controls(cfg, prompt);
  LlmDecision decision;
  decision.u = quantize_control(parsed.heater, static_cast<double>(parsed.fan));
  decision.rationale = parsed.rationale;
  return decision;
}

}  // namespace twinbox::control

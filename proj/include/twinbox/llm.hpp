#ifndef TWINBOX_LLM_HPP
#define TWINBOX_LLM_HPP

#include "twinbox/core.hpp"
#include "twinbox/models.hpp"

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace twinbox::control {

// ---------------------------------------------------------------------------
// Chat-completion transport.

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::string model = "twinbox-agent";
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

// Endpoint unreachable or exceeded its deadline.
struct BackendTimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Endpoint answered, but not with a usable completion.
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The reply carried no parsable CONTROLS line even after the retry.
struct ReplyParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string describe() const = 0;
};

// POSTs an OpenAI-style JSON body to <base_url><path> and returns
// choices[0].message.content. The bearer token is read from `token_env` at
// call time; an empty or unset variable sends no Authorization header.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string base_url, std::string path = "/v1/chat/completions",
                  std::string token_env = "TWINBOX_LLM_TOKEN", int timeout_ms = 30000,
                  std::string model = "twinbox-agent");
  std::string complete(const ChatRequest& request) override;
  std::string describe() const override { return "http:" + base_url_ + path_; }

 private:
  std::string base_url_;
  std::string path_;
  std::string token_env_;
  int timeout_ms_;
  std::string model_;
};

// Replays a fixed list of replies; unit-test helper for the parse paths.
class ScriptedChatBackend : public ChatBackend {
 public:
  explicit ScriptedChatBackend(std::vector<std::string> replies)
      : replies_(std::move(replies)) {}
  std::string complete(const ChatRequest& request) override;
  std::string describe() const override { return "scripted"; }
  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> requests_;
};

// Deterministic rule-based stand-in for a reasoning agent. It reads the
// numbers out of the prompt and answers in the reply contract. The simple
// rule is a deliberately coarse thermostat; the candidate/choice paths pick
// by predicted error, preferring less actuation under a penalty instruction.
class MockChatBackend : public ChatBackend {
 public:
  std::string complete(const ChatRequest& request) override;
  std::string describe() const override { return "mock"; }
};

// ---------------------------------------------------------------------------
// Controller-side logic.

// Parsed reply: the machine line `CONTROLS: heater=<x> fan=<0|1>` plus the
// free text before it.
struct ParsedControls {
  double heater;
  int fan;
  std::string rationale;
};
std::optional<ParsedControls> parse_controls(const std::string& reply);

// Append-only episode memory with nearest-neighbor retrieval; the embedded
// stand-in for an operations database.
struct HistoryRecord {
  double t_inside;
  double t_ambient;
  double heater;
  double fan;
  double t_next;
};

class HistoryStore {
 public:
  void add(const HistoryRecord& record) { records_.push_back(record); }
  std::size_t size() const { return records_.size(); }
  // k records scored by closeness of their outcome to the target and of
  // their state to the current temperature.
  std::vector<HistoryRecord> nearest(double t_now, double t_ref, int k) const;

 private:
  std::vector<HistoryRecord> records_;
};

enum class LlmVariant { simple, history, prediction };

std::string to_string(LlmVariant v);
LlmVariant llm_variant_from_string(const std::string& s);

struct LlmControllerConfig {
  LlmVariant variant = LlmVariant::simple;
  std::shared_ptr<ChatBackend> backend;
  double temperature = 0.0;
  bool penalty_prompt = false;
  int candidate_count = 7;
  int history_neighbors = 5;
  std::shared_ptr<const models::Predictor> assist_model;  // prediction variant

  void validate() const;
};

struct LlmDecision {
  ControlInput u{0, 0};
  std::string rationale;
};

// One decision: builds the prompt for the configured variant, queries the
// backend (one retry with a format reminder on unparsable replies), and
// quantizes the result. `history` is the measured episode so far; the
// prediction variant rolls each proposed candidate through the assist model,
// the history variant quotes neighbors from `store`.
LlmDecision llm_step(const LlmControllerConfig& cfg, const ThermalState& measured,
                     double t_ref, std::span<const Sample> history, HistoryStore& store);

// Prompt construction, exposed for the mock and the tests.
std::string base_prompt(double t_ref, double t_now, double t_ambient, bool penalty);

}  // namespace twinbox::control

#endif  // TWINBOX_LLM_HPP
